"""
KONTRAKTOR v1.0 - LoG Mapper
============================
Odwzorowanie kontrakcji binarnych na pętle wokół GEMM (LoG),
optymalizacja permutacji indeksów tymczasowych i przydział prefetchu
"""

import logging
from dataclasses import dataclass, field
from functools import total_ordering
from itertools import product
from math import prod
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ast_nodes import Contraction, IndexSum, LoG, Node, Product, is_fixed_order
from errors import PipelineError, SizeLimitExceeded
from layout import ALIGNED, CSC, MemoryLayout, can_fuse, layout_for_pattern
from tensor_core import spp_of_product
from utils import IndexUtils

logger = logging.getLogger(__name__)


# ===================== Koszt =====================

@total_ordering
@dataclass(frozen=True, eq=False)
class CostTuple:
    """(s, l, r, -f): nie-jednostkowe kroki, transpozycje lewa/prawa, ujemna liczba fuzji"""
    s: int = 0
    l: int = 0
    r: int = 0
    neg_f: int = 0
    infinite: bool = False

    def key(self) -> Tuple:
        if self.infinite:
            return (1,)
        return (0, self.s, self.l + self.r, self.neg_f, self.l)

    def __add__(self, other: 'CostTuple') -> 'CostTuple':
        if self.infinite or other.infinite:
            return INFINITE
        return CostTuple(self.s + other.s, self.l + other.l, self.r + other.r, self.neg_f + other.neg_f)

    def __eq__(self, other) -> bool:
        return isinstance(other, CostTuple) and self.key() == other.key()

    def __lt__(self, other: 'CostTuple') -> bool:
        return self.key() < other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __str__(self) -> str:
        if self.infinite:
            return "inf"
        return f"({self.s}, {self.l}, {self.r}, {self.neg_f})"


ZERO = CostTuple()
INFINITE = CostTuple(infinite=True)
# kontrakcja bez odwzorowania liczona ogólnymi pętlami
FALLBACK = CostTuple(s=10 ** 6)


@dataclass(frozen=True)
class OperandView:
    """Operand widziany przez GEMM: litery w kolejności pamięci i układ"""
    letters: str
    layout: MemoryLayout

    def position(self, letter: str) -> int:
        return self.letters.index(letter)

    def stride(self, letter: str) -> int:
        return self.layout.strides[self.letters.index(letter)]

    def interval(self, letter: str) -> Tuple[int, int]:
        return self.layout.intervals[self.letters.index(letter)]


@dataclass(frozen=True)
class LoGDescriptor:
    """C_(m)[batch](n) = op(A) op(B) z pętlami po literach wsadowych"""
    gemm_left: int
    batched: Tuple[str, ...]
    m: Tuple[str, ...]
    n: Tuple[str, ...]
    k: Tuple[str, ...]
    trans_a: bool
    trans_b: bool
    csc_b: bool = False
    cost: CostTuple = ZERO

    def tiebreak(self) -> Tuple:
        return (self.gemm_left, IndexUtils.word_key(''.join(self.batched)),
                IndexUtils.word_key(''.join(self.m)), IndexUtils.word_key(''.join(self.n)))

    def notation(self) -> str:
        group = lambda g: f"({''.join(g)})" if g else "()"
        a = 'A^T' if self.trans_a else 'A'
        b = 'B^T' if self.trans_b else 'B'
        batch = f"[{''.join(self.batched)}]" if self.batched else ''
        return f"C_{group(self.m)}{batch}{group(self.n)} = {a}_{group(self.k)} {b}"

    def to_dict(self) -> Dict:
        return {
            'gemm_left': self.gemm_left,
            'batched': ''.join(self.batched),
            'm': ''.join(self.m), 'n': ''.join(self.n), 'k': ''.join(self.k),
            'trans_a': self.trans_a, 'trans_b': self.trans_b, 'csc_b': self.csc_b,
            'cost': str(self.cost),
            'notation': self.notation(),
        }


# ===================== Wyliczanie odwzorowań =====================

def _consecutive(view: OperandView, group: Sequence[str]) -> bool:
    positions = [view.position(c) for c in group]
    return positions == list(range(positions[0], positions[0] + len(group)))


def _fusable(view: OperandView, group: Sequence[str]) -> bool:
    if len(group) < 2:
        return True
    if not _consecutive(view, group):
        return False
    first = view.position(group[0])
    return can_fuse(view.layout, first, first + len(group) - 1)


def _leading_non_unit(view: OperandView, batched: set) -> int:
    if view.layout.variant == CSC:
        return 0
    remaining = [c for c in view.letters if c not in batched]
    if not remaining:
        return 0
    return int(view.stride(remaining[0]) != 1)


def _try_mapping(result: OperandView, x: OperandView, y: OperandView, batched: set,
                 contracted: set, gemm_left: int) -> Optional[LoGDescriptor]:
    sx, sy = set(x.letters), set(y.letters)
    m_set = (sx - sy) - batched
    n_set = (sy - sx) - batched
    c_rem = [c for c in result.letters if c not in batched]
    m = tuple(c_rem[:len(m_set)])
    n = tuple(c_rem[len(m_set):])
    if set(m) != m_set or set(n) != n_set:
        return None
    x_rem = tuple(c for c in x.letters if c not in batched)
    y_rem = tuple(c for c in y.letters if c not in batched)
    k = tuple(c for c in x_rem if c in contracted)
    if tuple(c for c in y_rem if c in contracted) != k:
        return None
    if x_rem == m + k:
        trans_a = False
    elif x_rem == k + m:
        trans_a = True
    else:
        return None
    if y_rem == k + n:
        trans_b = False
    elif y_rem == n + k:
        trans_b = True
    else:
        return None
    for group, views in ((m, (x, result)), (n, (y, result)), (k, (x, y))):
        if not all(_fusable(view, group) for view in views):
            return None
    if x.layout.variant == CSC or result.layout.variant == CSC:
        return None
    csc_b = y.layout.variant == CSC
    if csc_b and (batched or trans_b or len(k) != 1 or len(n) != 1):
        return None
    s = sum(_leading_non_unit(view, batched) for view in (x, y, result))
    f = sum(len(g) - 1 for g in (m, n, k) if g)
    cost = CostTuple(s, int(trans_a), int(trans_b), -f)
    ordered_batch = tuple(c for c in result.letters if c in batched)
    return LoGDescriptor(gemm_left, ordered_batch, m, n, k, trans_a, trans_b, csc_b, cost)


def enumerate_logs(result: OperandView, left: OperandView, right: OperandView) -> List[LoGDescriptor]:
    """Wszystkie poprawne odwzorowania kontrakcji `left * right -> result`"""
    sa, sb, sc = set(left.letters), set(right.letters), set(result.letters)
    contracted = (sa & sb) - sc
    if not contracted or (sa | sb) - contracted != sc:
        return []
    hadamard = sa & sb & sc
    optional = sorted((sa ^ sb), key=IndexUtils.letter_key)
    found = []
    for bits in range(1 << len(optional)):
        batched = set(hadamard) | {optional[i] for i in range(len(optional)) if bits >> i & 1}
        for gemm_left in (0, 1):
            x, y = (left, right) if gemm_left == 0 else (right, left)
            descriptor = _try_mapping(result, x, y, batched, contracted, gemm_left)
            if descriptor is not None:
                found.append(descriptor)
    return found


def min_log(result: OperandView, left: OperandView, right: OperandView) -> Tuple[CostTuple, Optional[LoGDescriptor]]:
    """Najtańsze odwzorowanie albo (INFINITE, None)"""
    candidates = enumerate_logs(result, left, right)
    if not candidates:
        return INFINITE, None
    best = min(candidates, key=lambda d: (d.cost.key(), d.tiebreak()))
    return best.cost, best


def rebind(descriptor: LoGDescriptor, result: OperandView, left: OperandView,
           right: OperandView) -> Optional[LoGDescriptor]:
    """Sprawdza, czy odwzorowanie pozostaje poprawne dla nowych układów"""
    x, y = (left, right) if descriptor.gemm_left == 0 else (right, left)
    contracted = set(descriptor.k)
    fresh = _try_mapping(result, x, y, set(descriptor.batched), contracted, descriptor.gemm_left)
    if fresh is None:
        return None
    if (fresh.m, fresh.n, fresh.k, fresh.trans_a, fresh.trans_b) != \
            (descriptor.m, descriptor.n, descriptor.k, descriptor.trans_a, descriptor.trans_b):
        return None
    return fresh


# ===================== Geometria wywołania =====================

@dataclass(frozen=True)
class LoopSpec:
    """Pętla po literze z krokami dla (wynik, A, B)"""
    letter: str
    start: int
    stop: int
    strides: Tuple[int, ...]

    @property
    def length(self) -> int:
        return max(self.stop - self.start, 0)


@dataclass(frozen=True)
class GemmGeometry:
    batch: Tuple[LoopSpec, ...]
    m: int
    n: int
    k: int
    offsets: Tuple[int, int, int]
    a_strides: Tuple[int, int]
    b_strides: Tuple[int, int]
    c_strides: Tuple[int, int]
    covers_result: bool
    csc_n: Tuple[int, int] = (0, 0)
    csc_k: Tuple[int, int] = (0, 0)


def letter_ranges(views: Sequence[OperandView]) -> Dict[str, Tuple[int, int]]:
    """Przecięcie pudełek wszystkich operandów zawierających literę"""
    ranges: Dict[str, Tuple[int, int]] = {}
    for view in views:
        for letter, (start, end) in zip(view.letters, view.layout.intervals):
            low, high = ranges.get(letter, (start, end))
            ranges[letter] = (max(low, start), min(high, end))
    return ranges


def base_offset(view: OperandView, ranges: Dict[str, Tuple[int, int]], skip=()) -> int:
    if view.layout.variant == CSC:
        return 0
    offset = 0
    for letter, (start, _), stride in zip(view.letters, view.layout.intervals, view.layout.strides):
        if letter not in skip:
            offset += (ranges[letter][0] - start) * stride
    return offset


def covers(view: OperandView, ranges: Dict[str, Tuple[int, int]]) -> bool:
    return all(ranges[c] == interval for c, interval in zip(view.letters, view.layout.intervals))


def _group_size(group, ranges, views) -> int:
    for letter in group[:-1]:
        for view in views:
            if letter in view.letters and view.interval(letter) != (0, view.layout.shape[view.position(letter)]):
                raise PipelineError(f"Scalona grupa {''.join(group)} nie obejmuje pełnego wymiaru {letter}")
    return prod(max(ranges[c][1] - ranges[c][0], 0) for c in group)


def _matrix_strides(view: OperandView, batched, first_len: int, transposed: bool) -> Tuple[int, int]:
    """Kroki (wiersz, kolumna) według położenia grup w pamięci"""
    remaining = [c for c in view.letters if c not in batched]
    first = view.stride(remaining[0]) if remaining else 0
    second = view.stride(remaining[first_len]) if first_len < len(remaining) else 0
    return (second, first) if transposed else (first, second)


def bind_gemm(descriptor: LoGDescriptor, result: OperandView, left: OperandView,
              right: OperandView) -> GemmGeometry:
    """Konkretne rozmiary, przesunięcia i kroki wywołania GEMM"""
    x, y = (left, right) if descriptor.gemm_left == 0 else (right, left)
    views = (result, x, y)
    ranges = letter_ranges(views)
    batched = set(descriptor.batched)
    batch = tuple(
        LoopSpec(letter, ranges[letter][0], ranges[letter][1],
                 tuple(v.stride(letter) if letter in v.letters else 0 for v in views))
        for letter in descriptor.batched)
    m = _group_size(descriptor.m, ranges, (result, x)) if descriptor.m else 1
    n = _group_size(descriptor.n, ranges, (result, y)) if descriptor.n else 1
    k = _group_size(descriptor.k, ranges, (x, y))
    a_strides = _matrix_strides(x, batched, len(descriptor.k) if descriptor.trans_a else len(descriptor.m),
                                descriptor.trans_a)
    if y.layout.variant == CSC:
        b_strides = (0, 0)
    else:
        b_strides = _matrix_strides(y, batched, len(descriptor.n) if descriptor.trans_b else len(descriptor.k),
                                    descriptor.trans_b)
    c_strides = (result.stride(descriptor.m[0]) if descriptor.m else 0,
                 result.stride(descriptor.n[0]) if descriptor.n else 0)
    offsets = tuple(base_offset(v, ranges) for v in views)
    csc_n = ranges[descriptor.n[0]] if descriptor.csc_b else (0, 0)
    csc_k = ranges[descriptor.k[0]] if descriptor.csc_b else (0, 0)
    return GemmGeometry(batch, m, n, k, offsets, a_strides, b_strides, c_strides,
                        covers(result, ranges), csc_n, csc_k)


# ===================== Wykrywanie kontrakcji =====================

def _pattern_for(nodes: Sequence[Node], letters: str):
    return spp_of_product([(n.spp, n.indices) for n in nodes], letters)


def _as_contraction(node: Node) -> Node:
    summed = []
    current = node
    while current.kind == 'indexsum':
        summed.append(current.letter)
        current = current.children[0]
    if current.kind != 'product' or len(current.children) != 2:
        return node
    left, right = current.children
    both = set(left.indices) & set(right.indices)
    inner = [c for c in summed if c in both]
    outer = [c for c in summed if c not in both]
    if not inner:
        return node
    letters = IndexUtils.sort_letters((set(left.indices) | set(right.indices)) - set(inner))
    contraction = Contraction(left, right, IndexUtils.sort_letters(inner))
    contraction.indices = letters
    contraction.spp = _pattern_for([left, right], letters)
    contraction.eqspp = contraction.spp
    result: Node = contraction
    for letter in outer:
        remaining = IndexUtils.sort_letters(set(result.indices) - {letter})
        wrapped = IndexSum(result, letter)
        wrapped.indices = remaining
        wrapped.spp = _pattern_for([result], remaining)
        wrapped.eqspp = wrapped.spp
        result = wrapped
    if result.indices != node.indices:
        result.spp = result.spp.reorder(result.indices, node.indices)
        result.eqspp = result.spp
        result.indices = node.indices
    for attribute in ('schedule', 'location'):
        if hasattr(node, attribute):
            setattr(result, attribute, getattr(node, attribute))
    return result


def find_contractions(node: Node) -> Node:
    """Zamienia serie IndexSum nad Product na węzły Contraction"""
    node.children = [find_contractions(child) for child in node.children]
    if node.kind == 'indexsum':
        return _as_contraction(node)
    return node


def contraction_fallback(node: Contraction) -> Node:
    """Ogólne pętle zamiast kontrakcji bez odwzorowania LoG"""
    left, right = node.children
    letters = IndexUtils.sort_letters(set(left.indices) | set(right.indices))
    result: Node = Product([left, right])
    result.indices = letters
    result.spp = _pattern_for([left, right], letters)
    result.eqspp = result.spp
    for letter in node.contracted:
        remaining = IndexUtils.sort_letters(set(result.indices) - {letter})
        wrapped = IndexSum(result, letter)
        wrapped.indices = remaining
        wrapped.spp = _pattern_for([result], remaining)
        wrapped.eqspp = wrapped.spp
        result = wrapped
    result.spp = result.spp.reorder(result.indices, node.indices)
    result.eqspp = result.spp
    result.indices = node.indices
    return result


# ===================== Optymalizacja permutacji =====================

@dataclass
class _Choice:
    cost: CostTuple
    children: Tuple[str, ...] = ()
    descriptor: Optional[LoGDescriptor] = None


@dataclass
class PermutationPlan:
    """Wybrane kolejności indeksów i odwzorowania LoG"""
    cost: CostTuple
    orders: Dict[int, str] = field(default_factory=dict)
    descriptors: Dict[int, Optional[LoGDescriptor]] = field(default_factory=dict)


class PermutationOptimizer:
    """Programowanie dynamiczne po drzewie: koszt poddrzewa dla każdej kolejności węzła"""

    def __init__(self, leaf_view: Callable[[Node], OperandView], alignment: int = 1, max_rank: int = 7):
        self.leaf_view = leaf_view
        self.alignment = alignment
        self.max_rank = max_rank
        self._views: Dict[Tuple[int, str], OperandView] = {}
        self._memo: Dict[Tuple[int, str], _Choice] = {}

    def domain(self, node: Node) -> List[str]:
        if is_fixed_order(node):
            return [node.indices]
        if len(node.indices) > self.max_rank:
            raise SizeLimitExceeded(f"Rząd {len(node.indices)} przekracza limit permutacji {self.max_rank}")
        return IndexUtils.permutations_of(node.indices)

    def view(self, node: Node, order: str) -> OperandView:
        if node.kind == 'indexed':
            return self.leaf_view(node)
        key = (id(node), order)
        if key not in self._views:
            pattern = node.spp.reorder(node.indices, order)
            self._views[key] = OperandView(order, layout_for_pattern(pattern, ALIGNED, self.alignment))
        return self._views[key]

    def _best_child(self, child: Node) -> Tuple[CostTuple, str]:
        options = [(self.cost(child, x), x) for x in self.domain(child)]
        return min(options, key=lambda o: (o[0].key(), IndexUtils.word_key(o[1])))

    def choice(self, node: Node, order: str) -> _Choice:
        key = (id(node), order)
        if key in self._memo:
            return self._memo[key]
        kind = node.kind
        if kind == 'indexed':
            result = _Choice(ZERO)
        elif kind == 'assign':
            expression = node.children[1]
            result = _Choice(self.cost(expression, node.indices), (node.indices,))
        elif kind in ('permute', 'scalar', 'add'):
            total, orders = ZERO, []
            for child in node.children:
                wanted = child.indices if (kind == 'permute' or is_fixed_order(child)) else order
                total = total + self.cost(child, wanted)
                orders.append(wanted)
            result = _Choice(total, tuple(orders))
        elif kind == 'contraction':
            result = self._contraction(node, order)
        else:
            total, orders = ZERO, []
            for child in node.children:
                cost, chosen = self._best_child(child)
                total = total + cost
                orders.append(chosen)
            result = _Choice(total, tuple(orders))
        self._memo[key] = result
        return result

    def cost(self, node: Node, order: str) -> CostTuple:
        return self.choice(node, order).cost

    def _contraction(self, node: Node, order: str) -> _Choice:
        left, right = node.children
        target = self.view(node, order)
        best: Optional[Tuple] = None
        for x_left in self.domain(left):
            cost_left = self.cost(left, x_left)
            for x_right in self.domain(right):
                local, descriptor = min_log(target, self.view(left, x_left), self.view(right, x_right))
                if descriptor is None:
                    local = FALLBACK
                total = cost_left + self.cost(right, x_right) + local
                rank = (total.key(), IndexUtils.word_key(x_left), IndexUtils.word_key(x_right))
                if best is None or rank < best[0]:
                    best = (rank, _Choice(total, (x_left, x_right), descriptor))
        return best[1]

    def optimize(self, statement: Node) -> PermutationPlan:
        """Pełny plan dla przypisania (korzeń ma kolejność celu)"""
        self._memo.clear()
        plan = PermutationPlan(self.cost(statement, statement.indices))
        self._collect(statement, statement.indices, plan)
        return plan

    def _collect(self, node: Node, order: str, plan: PermutationPlan):
        chosen = self.choice(node, order)
        plan.orders[id(node)] = order
        if node.kind == 'contraction':
            plan.descriptors[id(node)] = chosen.descriptor
        for child, child_order in zip(node.children if node.kind != 'assign' else node.children[1:],
                                      chosen.children):
            self._collect(child, child_order, plan)


def apply_permutations(node: Node, plan: PermutationPlan) -> Node:
    """Ustawia wybrane kolejności i zamienia kontrakcje na LoG lub ogólne pętle"""
    order = plan.orders.get(id(node), node.indices)
    if node.kind not in ('indexed', 'assign') and order != node.indices:
        node.spp = node.spp.reorder(node.indices, order)
        if node.eqspp is not None:
            node.eqspp = node.eqspp.reorder(node.indices, order)
        node.indices = order
    descriptor = plan.descriptors.get(id(node))
    node.children = [apply_permutations(child, plan) for child in node.children]
    if node.kind == 'contraction':
        if descriptor is None:
            replacement = contraction_fallback(node)
            logger.warning(f"⚠️ Kontrakcja {node.indices} bez odwzorowania LoG, ogólne pętle")
        else:
            replacement = LoG(node.children[0], node.children[1], descriptor)
            replacement.indices, replacement.spp, replacement.eqspp = node.indices, node.spp, node.eqspp
        for attribute in ('schedule', 'location'):
            if hasattr(node, attribute):
                setattr(replacement, attribute, getattr(node, attribute))
        return replacement
    return node


def configuration_oracle(statement: Node, optimizer: PermutationOptimizer, limit: int = 200000) -> CostTuple:
    """Pełne przeszukanie konfiguracji kolejności (tylko małe drzewa)"""
    nodes = [n for n in statement.walk() if n.kind not in ('assign',) and not is_fixed_order(n)]
    domains = [optimizer.domain(n) for n in nodes]
    count = prod(len(d) for d in domains)
    if count > limit:
        raise SizeLimitExceeded(f"Wyrocznia konfiguracji: {count} kombinacji (limit {limit})")
    best = INFINITE
    for assignment in product(*domains):
        orders = {id(n): x for n, x in zip(nodes, assignment)}
        total = _configuration_cost(statement, statement.indices, orders, optimizer)
        if total < best:
            best = total
    return best


def _configuration_cost(node, order, orders, optimizer) -> CostTuple:
    of = lambda child: orders.get(id(child), child.indices)
    if node.kind == 'assign':
        expression = node.children[1]
        if of(expression) != node.indices:
            return INFINITE
        return _configuration_cost(expression, node.indices, orders, optimizer)
    total = ZERO
    for child in node.children:
        if node.kind in ('scalar', 'add') and not is_fixed_order(child) and of(child) != order:
            return INFINITE
        total = total + _configuration_cost(child, of(child), orders, optimizer)
    if node.kind == 'contraction':
        left, right = node.children
        local, descriptor = min_log(optimizer.view(node, order), optimizer.view(left, of(left)),
                                    optimizer.view(right, of(right)))
        total = total + (local if descriptor is not None else FALLBACK)
    return total


# ===================== Prefetch =====================

@dataclass
class PrefetchPlan:
    assignments: List[Tuple[str, int]] = field(default_factory=list)
    unmatched: List[str] = field(default_factory=list)


def assign_prefetch(log_nodes: Sequence[LoG], requests: Sequence, capabilities: Sequence[int],
                    element_bytes: int) -> PrefetchPlan:
    """
    Zachłanny przydział: największe żądanie do LoG o najbliższej
    pojemności (rozmiar wyniku w bajtach); każdy LoG najwyżej raz.
    """
    plan = PrefetchPlan()
    free = list(range(len(log_nodes)))
    ordered = sorted(requests, key=lambda t: -t.size * element_bytes)
    for tensor in ordered:
        wanted = tensor.size * element_bytes
        if not free:
            plan.unmatched.append(tensor.name)
            continue
        best = min(free, key=lambda i: (abs(capabilities[i] - wanted), i))
        free.remove(best)
        log_nodes[best].prefetch = tensor
        plan.assignments.append((tensor.name, best))
    return plan
