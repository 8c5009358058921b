"""
KONTRAKTOR v1.0 - Sparsity Patterns
===================================
Wzorce rzadkości, propagacja przez drzewo i wyznaczanie EQSPP
(najmniejszych wzorców równoważnych)
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import IndexMismatch, SizeLimitExceeded, SizeMismatch
from utils import IndexUtils

logger = logging.getLogger(__name__)

Operand = Tuple['SparsityPattern', str]


class SparsityPattern:
    """Niezmienna tablica logiczna o kształcie tensora"""

    __slots__ = ('_grid', '_hash')

    def __init__(self, grid):
        array = np.array(grid, dtype=bool, copy=True)
        array.setflags(write=False)
        self._grid = array
        self._hash = None

    @classmethod
    def dense(cls, shape: Sequence[int]) -> 'SparsityPattern':
        return cls(np.ones(tuple(shape), dtype=bool))

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> 'SparsityPattern':
        return cls(np.zeros(tuple(shape), dtype=bool))

    @classmethod
    def from_coords(cls, shape: Sequence[int], coords: Iterable[Sequence[int]]) -> 'SparsityPattern':
        grid = np.zeros(tuple(shape), dtype=bool)
        for point in coords:
            grid[tuple(point)] = True
        return cls(grid)

    @classmethod
    def from_values(cls, values: np.ndarray) -> 'SparsityPattern':
        return cls(np.asarray(values) != 0)

    @property
    def grid(self) -> np.ndarray:
        return self._grid

    @property
    def extents(self) -> Tuple[int, ...]:
        return tuple(self._grid.shape)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.extents

    @property
    def rank(self) -> int:
        return self._grid.ndim

    def nnz(self) -> int:
        return int(np.count_nonzero(self._grid))

    def density(self) -> float:
        return self.nnz() / self._grid.size if self._grid.size else 0.0

    def coords(self) -> List[Tuple[int, ...]]:
        """Niezerowe pozycje w kolejności kolumnowej (pierwszy indeks najszybszy)"""
        points = np.argwhere(self._grid)
        keys = [tuple(int(v) for v in reversed(p)) for p in points]
        order = sorted(range(len(keys)), key=keys.__getitem__)
        return [tuple(int(v) for v in points[i]) for i in order]

    def transpose(self, axes: Sequence[int]) -> 'SparsityPattern':
        return SparsityPattern(np.transpose(self._grid, tuple(axes)))

    def reorder(self, source: str, target: str) -> 'SparsityPattern':
        """Przestawia osie z kolejności liter `source` na `target`"""
        if source == target:
            return self
        return self.transpose(IndexUtils.transpose_axes(source, target))

    def is_subset(self, other: 'SparsityPattern') -> bool:
        return bool(np.all(~self._grid | other._grid))

    def __and__(self, other: 'SparsityPattern') -> 'SparsityPattern':
        return SparsityPattern(self._grid & other._grid)

    def __or__(self, other: 'SparsityPattern') -> 'SparsityPattern':
        return SparsityPattern(self._grid | other._grid)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparsityPattern):
            return NotImplemented
        return self.extents == other.extents and bool(np.array_equal(self._grid, other._grid))

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.extents, np.packbits(self._grid).tobytes()))
        return self._hash

    def __deepcopy__(self, memo):
        return self

    def __repr__(self) -> str:
        return f"SparsityPattern(shape={self.extents}, nnz={self.nnz()})"


# ===================== Przestrzeń indeksów =====================

def _index_sizes(operands: Sequence[Operand]) -> Dict[str, int]:
    sizes: Dict[str, int] = {}
    for pattern, letters in operands:
        if len(letters) != pattern.rank:
            raise IndexMismatch(f"Ciąg indeksów '{letters}' nie pasuje do rzędu {pattern.rank}")
        for letter, extent in zip(letters, pattern.extents):
            if sizes.setdefault(letter, extent) != extent:
                raise SizeMismatch(
                    f"Indeks '{letter}' ma rozmiary {sizes[letter]} i {extent}")
    return sizes


def _einsum_any(operands: Sequence[Operand], target: str, optimize) -> np.ndarray:
    """Logiczna suma iloczynów wzorców rzutowana na `target`"""
    sizes = _index_sizes(operands)
    missing = set(target) - set(sizes)
    if missing:
        raise IndexMismatch(f"Indeksy wyniku {sorted(missing)} nie występują w operandach")
    if not operands:
        return np.ones((), dtype=bool)
    subscripts = ','.join(letters for _, letters in operands) + '->' + target
    arrays = [p.grid.astype(np.int64) for p, _ in operands]
    counts = np.einsum(subscripts, *arrays, optimize=optimize)
    return np.asarray(counts) > 0


# ===================== EQSPP =====================

@dataclass
class EqsppResult:
    """Wzorce operandów po maskowaniu oraz wzorzec wyniku"""
    operands: List[SparsityPattern]
    result: SparsityPattern


def compute_eqspp(operands: Sequence[Operand], target: str,
                  result_mask: Optional[SparsityPattern] = None,
                  optimize='greedy') -> EqsppResult:
    """
    Wyznacza najmniejsze równoważne wzorce operandów jednego Einsuma.

    Pozycja operandu zostaje zachowana tylko wtedy, gdy przynajmniej jeden
    iloczyn przez nią przechodzący jest strukturalnie niezerowy (wliczając
    maskę wyniku narzuconą przez rodzica).
    """
    extended = list(operands)
    if result_mask is not None:
        extended.append((result_mask, target))
    masked: List[SparsityPattern] = []
    for pattern, letters in operands:
        support = _einsum_any(extended, letters, optimize)
        masked.append(SparsityPattern(support & pattern.grid))
    restricted = list(zip(masked, [letters for _, letters in operands]))
    result = SparsityPattern(_einsum_any(restricted, target, optimize))
    return EqsppResult(operands=masked, result=result)


def _space_of(operands: Sequence[Operand]) -> Tuple[str, Dict[str, int]]:
    sizes = _index_sizes(operands)
    letters = ''.join(sorted(sizes, key=IndexUtils.letter_key))
    return letters, sizes


def _broadcast(grid: np.ndarray, letters: str, space: str) -> np.ndarray:
    """Rozciąga wzorzec operandu na całą przestrzeń indeksów"""
    order = [c for c in space if c in letters]
    moved = np.transpose(grid, IndexUtils.transpose_axes(letters, ''.join(order)))
    shape = [moved.shape[order.index(c)] if c in letters else 1 for c in space]
    return moved.reshape(shape)


def _full_product(grids: Sequence[np.ndarray], operands: Sequence[Operand],
                  space: str, sizes: Dict[str, int]) -> np.ndarray:
    full = np.ones(tuple(sizes[c] for c in space), dtype=bool)
    for grid, (_, letters) in zip(grids, operands):
        full = full & _broadcast(grid, letters, space)
    return full


def check_minimality(operands: Sequence[Operand], masked: Sequence[SparsityPattern],
                     max_points: int = 2 ** 20) -> bool:
    """
    Sprawdza siłowo, że wzorce `masked` dają ten sam iloczyn co oryginalne
    i że usunięcie dowolnej niezerowej pozycji zmienia wynik.
    """
    space, sizes = _space_of(operands)
    points = int(np.prod([sizes[c] for c in space])) if space else 1
    if points > max_points:
        raise SizeLimitExceeded(f"Przestrzeń indeksów ma {points} punktów (limit {max_points})")

    original = _full_product([p.grid for p, _ in operands], operands, space, sizes)
    grids = [m.grid.copy() for m in masked]
    reduced = _full_product(grids, operands, space, sizes)
    if not np.array_equal(original, reduced):
        return False

    for k, (_, letters) in enumerate(operands):
        for position in np.argwhere(grids[k]):
            position = tuple(position)
            grids[k][position] = False
            flipped = _full_product(grids, operands, space, sizes)
            grids[k][position] = True
            if np.array_equal(flipped, reduced):
                logger.debug(f"Pozycja {position} operandu {k} jest zbędna")
                return False
    return True


def bounding_box(pattern: SparsityPattern) -> List[Tuple[int, int]]:
    """Najmniejsze pudełko [b, B) zawierające wszystkie niezera"""
    if pattern.nnz() == 0:
        return [(0, 0)] * pattern.rank
    box = []
    for axis in range(pattern.rank):
        others = tuple(a for a in range(pattern.rank) if a != axis)
        used = np.flatnonzero(np.any(pattern.grid, axis=others) if others else pattern.grid)
        box.append((int(used[0]), int(used[-1]) + 1))
    return box


# ===================== Propagacja po drzewie =====================

def _reordered(pattern: SparsityPattern, source: str, target: str) -> SparsityPattern:
    return pattern.reorder(source, target)


def propagate_spp(node) -> SparsityPattern:
    """Wzorce wyników od liści w górę (wzorzec w kolejności node.indices)"""
    kind = node.kind
    if kind == 'indexed':
        node.spp = node.tensor.spp
    elif kind == 'assign':
        expression = node.children[1]
        propagate_spp(node.children[0])
        node.spp = _reordered(propagate_spp(expression), expression.indices, node.indices)
    elif kind in ('permute', 'scalar'):
        child = node.children[0]
        node.spp = _reordered(propagate_spp(child), child.indices, node.indices)
    elif kind == 'add':
        combined = None
        for child in node.children:
            pattern = _reordered(propagate_spp(child), child.indices, node.indices)
            combined = pattern if combined is None else combined | pattern
        node.spp = combined
    else:
        operands = [(propagate_spp(child), child.indices) for child in node.children]
        node.spp = SparsityPattern(_einsum_any(operands, node.indices, 'greedy'))
    return node.spp


def propagate_eqspp(node, mask: Optional[SparsityPattern] = None, use_eqspp: bool = True):
    """Maski od korzenia w dół; zakłada policzone `spp`"""
    if not use_eqspp:
        for sub in node.walk():
            sub.eqspp = sub.spp
        return
    kind = node.kind
    if kind == 'assign':
        node.eqspp = node.spp
        target, expression = node.children
        target.eqspp = target.spp
        propagate_eqspp(expression, expression.spp, use_eqspp)
        return
    node.eqspp = node.spp if mask is None else (mask & node.spp)
    if kind == 'indexed':
        return
    if kind in ('permute', 'scalar', 'add'):
        for child in node.children:
            propagate_eqspp(child, _reordered(node.eqspp, node.indices, child.indices), use_eqspp)
        return
    operands = [(child.spp, child.indices) for child in node.children]
    result = compute_eqspp(operands, node.indices, result_mask=node.eqspp)
    for child, pattern in zip(node.children, result.operands):
        propagate_eqspp(child, pattern, use_eqspp)


def annotate_sparsity(statement, use_eqspp: bool = True):
    """Oznacza każdy węzeł przypisania wzorcem `spp` i maską `eqspp`"""
    propagate_spp(statement)
    propagate_eqspp(statement, use_eqspp=use_eqspp)
    return statement


def derive_spp(expression, target_indices: str) -> SparsityPattern:
    """Wzorzec wyniku wyrażenia w kolejności `target_indices`"""
    from ast_nodes import deduce_indices

    deduce_indices(expression, target_indices)
    if set(expression.indices) != set(target_indices):
        raise IndexMismatch(
            f"Wyrażenie ma indeksy '{expression.indices}', oczekiwano '{target_indices}'")
    pattern = propagate_spp(expression)
    return pattern.reorder(expression.indices, target_indices)
