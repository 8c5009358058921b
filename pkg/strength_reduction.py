"""
KONTRAKTOR v1.0 - Strength Reduction
====================================
Rozkład sumy Einsteina na ciąg mnożeń binarnych i sumowań
o najmniejszej liczbie niezerowych operacji
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from ast_nodes import IndexSum, Node, Permute, Product
from config import LimitSettings
from errors import IndexMismatch, SizeLimitExceeded
from sparsity import SparsityPattern, _broadcast, _space_of
from tensor_core import spp_of_product
from utils import IndexUtils

logger = logging.getLogger(__name__)

Operand = Tuple[SparsityPattern, str]


def _word(letters) -> str:
    return IndexUtils.sort_letters(letters)


@dataclass(frozen=True)
class Formula:
    """Jeden krok planu: mnożenie dwóch wyrazów albo sumowanie po literze"""
    kind: str  # multiplication, summation
    result: str
    operands: Tuple[str, ...]
    cost: int
    letter: Optional[str] = None

    def __str__(self) -> str:
        if self.kind == 'summation':
            return f"{self.result} = sum_{self.letter} {self.operands[0]}  [{self.cost}]"
        return f"{self.result} = {self.operands[0]} * {self.operands[1]}  [{self.cost}]"


def formula_cost(kind: str, result: SparsityPattern, operand: Optional[SparsityPattern] = None) -> int:
    """Mnożenie kosztuje nnz wyniku, sumowanie nnz(operand) - nnz(wynik)"""
    if kind == 'multiplication':
        return result.nnz()
    if kind == 'summation':
        return operand.nnz() - result.nnz()
    raise ValueError(f"Nieznany rodzaj formuły: {kind}")


@dataclass
class _Plan:
    kind: str  # leaf, summation, multiplication
    subset: int
    letters: FrozenSet[str]
    cost: int
    count: int
    signature: Tuple[Tuple[int, ...], ...]
    parts: Tuple['_Plan', ...] = ()
    letter: Optional[str] = None

    @property
    def key(self):
        return (self.cost, self.count, self.signature)


@dataclass
class Schedule:
    """Wybrany plan obliczeń jednego Einsuma"""
    operands: List[str]
    result: str
    formulas: List[Formula] = field(default_factory=list)
    cost: int = 0
    plan: Optional[_Plan] = None
    planner: Optional[object] = field(default=None, repr=False)

    def describe(self) -> List[str]:
        return [str(f) for f in self.formulas]


class _Planner:
    """Programowanie dynamiczne po parach (podzbiór operandów, zbiór liter)"""

    def __init__(self, operands: Sequence[Operand], result: str):
        self.operands = list(operands)
        self.count = len(self.operands)
        self.letter_sets = [frozenset(letters) for _, letters in self.operands]
        self.result = frozenset(result)
        self._patterns: Dict[Tuple[int, FrozenSet[str]], SparsityPattern] = {}
        self._best: Dict[Tuple[int, FrozenSet[str]], _Plan] = {}
        everything = frozenset().union(*self.letter_sets) if self.letter_sets else frozenset()
        if not self.result <= everything:
            raise IndexMismatch(f"Indeksy wyniku {sorted(self.result - everything)} nie występują w operandach")

    def letters_of(self, subset: int) -> FrozenSet[str]:
        letters = frozenset()
        for k in range(self.count):
            if subset >> k & 1:
                letters |= self.letter_sets[k]
        return letters

    def pattern(self, subset: int, letters: FrozenSet[str]) -> SparsityPattern:
        key = (subset, letters)
        if key not in self._patterns:
            chosen = [self.operands[k] for k in range(self.count) if subset >> k & 1]
            self._patterns[key] = spp_of_product(chosen, _word(letters))
        return self._patterns[key]

    def best(self, subset: int, letters: FrozenSet[str]) -> _Plan:
        key = (subset, letters)
        if key in self._best:
            return self._best[key]
        candidates: List[_Plan] = []

        single = subset & (subset - 1) == 0
        if single:
            k = subset.bit_length() - 1
            if letters == self.letter_sets[k]:
                candidates.append(_Plan('leaf', subset, letters, 0, 0, ()))

        for letter in sorted(self.letters_of(subset) - letters, key=IndexUtils.letter_key):
            wider = letters | {letter}
            sub = self.best(subset, wider)
            cost = sub.cost + formula_cost('summation', self.pattern(subset, letters),
                                           self.pattern(subset, wider))
            candidates.append(_Plan('summation', subset, letters, cost, sub.count + 1,
                                    sub.signature + (IndexUtils.word_key(_word(letters)),),
                                    (sub,), letter))

        if not single:
            low = subset & -subset
            rest = subset ^ low
            extra = rest
            while True:
                first = low | extra
                second = subset ^ first
                if second:
                    plan = self._split(subset, letters, first, second)
                    if plan is not None:
                        candidates.append(plan)
                if extra == 0:
                    break
                extra = (extra - 1) & rest

        best = min(candidates, key=lambda p: p.key)
        self._best[key] = best
        return best

    def _split(self, subset, letters, first, second) -> Optional[_Plan]:
        letters_first = letters & self.letters_of(first)
        letters_second = letters & self.letters_of(second)
        shared = self.letters_of(first) & self.letters_of(second)
        if not shared <= letters:
            return None
        left = self.best(first, letters_first)
        right = self.best(second, letters_second)
        cost = left.cost + right.cost + formula_cost('multiplication', self.pattern(subset, letters))
        return _Plan('multiplication', subset, letters, cost, left.count + right.count + 1,
                     left.signature + right.signature + (IndexUtils.word_key(_word(letters)),),
                     (left, right))

    def solve(self) -> _Plan:
        full = (1 << self.count) - 1
        return self.best(full, self.result)


def _formulas(plan: _Plan, names: Sequence[str], formulas: List[Formula]) -> str:
    if plan.kind == 'leaf':
        return names[plan.subset.bit_length() - 1]
    references = [_formulas(part, names, formulas) for part in plan.parts]
    label = f"F{len(formulas)}[{_word(plan.letters)}]"
    previous = sum(p.cost for p in plan.parts)
    formulas.append(Formula(plan.kind, label, tuple(references), plan.cost - previous, plan.letter))
    return label


def plan_schedule(operands: Sequence[Operand], result: str,
                  names: Optional[Sequence[str]] = None) -> Schedule:
    """Najtańszy plan dla operandów (wzorzec, litery) i liter wyniku"""
    planner = _Planner(operands, result)
    plan = planner.solve()
    names = list(names or [f"T{k}" for k in range(len(operands))])
    schedule = Schedule(operands=names, result=result, cost=plan.cost, plan=plan, planner=planner)
    _formulas(plan, names, schedule.formulas)
    return schedule


def _build(plan: _Plan, planner: _Planner, children: Sequence[Node]) -> Node:
    if plan.kind == 'leaf':
        return children[plan.subset.bit_length() - 1]
    parts = [_build(part, planner, children) for part in plan.parts]
    if plan.kind == 'summation':
        node = IndexSum(parts[0], plan.letter)
    else:
        node = Product(parts)
    node.indices = _word(plan.letters)
    node.spp = planner.pattern(plan.subset, plan.letters)
    node.eqspp = node.spp
    return node


def reduce_einsum(einsum: Node) -> Node:
    """Zastępuje węzeł Einsum drzewem Product/IndexSum"""
    children = einsum.children
    operands = [(child.eqspp if child.eqspp is not None else child.spp, child.indices) for child in children]
    schedule = plan_schedule(operands, einsum.indices, [repr(c) for c in children])
    root = _build(schedule.plan, schedule.planner, children)
    if root.kind == 'indexed' or root in children:
        if root.indices != einsum.indices:
            root = Permute(root, einsum.indices)
            root.spp = children[0].spp.reorder(children[0].indices, einsum.indices)
            root.eqspp = root.spp
    else:
        root.spp = root.spp.reorder(root.indices, einsum.indices)
        root.indices = einsum.indices
        root.eqspp = einsum.eqspp if einsum.eqspp is not None else root.spp
    root.schedule = schedule
    root.location = einsum.location
    logger.debug(f"Plan Einsuma {einsum.indices}: koszt {schedule.cost}, {len(schedule.formulas)} formuł")
    return root


def reduce_tree(node: Node) -> Node:
    """Redukuje wszystkie Einsumy w drzewie (od liści)"""
    node.children = [reduce_tree(child) for child in node.children]
    if node.kind == 'einsum':
        return reduce_einsum(node)
    return node


def association(node: Node):
    """Kolejność mnożeń jako zagnieżdżone krotki nazw tensorów"""
    if node.kind == 'indexed':
        return node.tensor.name
    if node.kind in ('indexsum', 'permute', 'scalar'):
        return association(node.children[0])
    if node.kind in ('product', 'contraction', 'log'):
        return tuple(association(child) for child in node.children)
    return node.kind


# ===================== Koszty referencyjne =====================

def naive_cost(operands: Sequence[Operand], result: str) -> int:
    """Liczba operacji bezpośredniego sumowania po niezerach całej przestrzeni"""
    space, _ = _space_of(operands)
    return len(operands) * spp_of_product(operands, space).nnz()


class _Forest:
    """Wyrocznia: przeszukanie wszystkich kolejności ruchów na lasach wyrazów"""

    def __init__(self, operands: Sequence[Operand], result: str, max_points: int):
        self.operands = list(operands)
        self.space, self.sizes = _space_of(self.operands)
        self.result = frozenset(result)
        self.max_points = max_points
        self._products: Dict[FrozenSet[int], Tuple[str, np.ndarray]] = {}
        self._nnz: Dict[Tuple[FrozenSet[int], FrozenSet[str]], int] = {}

    def _product(self, members: FrozenSet[int]) -> Tuple[str, np.ndarray]:
        if members not in self._products:
            letters = ''.join(c for c in self.space
                              if any(c in self.operands[k][1] for k in members))
            points = int(np.prod([self.sizes[c] for c in letters])) if letters else 1
            if points > self.max_points:
                raise SizeLimitExceeded(f"Wyrocznia: {points} punktów (limit {self.max_points})")
            grid = np.ones(tuple(self.sizes[c] for c in letters), dtype=bool)
            for k in members:
                pattern, own = self.operands[k]
                grid = grid & _broadcast(pattern.grid, own, letters)
            self._products[members] = (letters, grid)
        return self._products[members]

    def nnz(self, term) -> int:
        if term not in self._nnz:
            members, kept = term
            letters, grid = self._product(members)
            axes = tuple(i for i, c in enumerate(letters) if c not in kept)
            reduced = np.any(grid, axis=axes) if axes else grid
            self._nnz[term] = int(np.count_nonzero(reduced))
        return self._nnz[term]

    def solve(self) -> int:
        start = frozenset((frozenset([k]), frozenset(letters))
                          for k, (_, letters) in enumerate(self.operands))

        @lru_cache(maxsize=None)
        def search(state: FrozenSet) -> float:
            terms = sorted(state, key=lambda t: (sorted(t[0]), _word(t[1])))
            if len(terms) == 1 and terms[0][1] == self.result:
                return 0
            best = float('inf')
            for term in terms:
                others = set().union(*(t[1] for t in terms if t is not term))
                for letter in term[1]:
                    if letter in self.result or letter in others:
                        continue
                    smaller = (term[0], term[1] - {letter})
                    cost = self.nnz(term) - self.nnz(smaller)
                    best = min(best, cost + search((state - {term}) | {smaller}))
            for i in range(len(terms)):
                for j in range(i + 1, len(terms)):
                    joined = (terms[i][0] | terms[j][0], terms[i][1] | terms[j][1])
                    cost = self.nnz(joined)
                    best = min(best, cost + search((state - {terms[i], terms[j]}) | {joined}))
            return best

        return int(search(start))


def exhaustive_oracle(operands: Sequence[Operand], result: str,
                      limits: Optional[LimitSettings] = None) -> int:
    """Minimalny koszt znaleziony pełnym przeszukaniem (tylko małe przypadki)"""
    limits = limits or LimitSettings()
    letters = set().union(*(set(l) for _, l in operands))
    if len(operands) > limits.oracle_max_operands or len(letters) > limits.oracle_max_letters:
        raise SizeLimitExceeded(
            f"Wyrocznia: {len(operands)} operandów, {len(letters)} liter "
            f"(limit {limits.oracle_max_operands}/{limits.oracle_max_letters})")
    if not set(result) <= letters:
        raise IndexMismatch("Indeksy wyniku nie występują w operandach")
    return _Forest(operands, result, 8 * limits.brute_force_points).solve()
