"""
KONTRAKTOR v1.0 - Memory Layouts
================================
Układy pamięci: gęsty kolumnowy, pudełko ograniczające (z wyrównaniem)
i CSC dla macierzy
"""

import logging
from dataclasses import dataclass
from itertools import product
from math import prod
from typing import Dict, Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np

from errors import CscRankError, OutOfBox
from sparsity import SparsityPattern, bounding_box
from tensor_core import Tensor

logger = logging.getLogger(__name__)

DENSE = 'dense'
BBOX = 'bbox'
ALIGNED = 'aligned'
CSC = 'csc'


@dataclass(frozen=True)
class MemoryLayout:
    """Odwzorowanie indeksu wielowymiarowego na pozycję w pamięci"""
    variant: str
    shape: Tuple[int, ...]
    intervals: Tuple[Tuple[int, int], ...]
    strides: Tuple[int, ...]
    alignment: int = 1
    colptr: Tuple[int, ...] = ()
    rowidx: Tuple[int, ...] = ()

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def widths(self) -> Tuple[int, ...]:
        return tuple(end - start for start, end in self.intervals)

    @property
    def size(self) -> int:
        """Liczba elementów w pamięci"""
        if self.variant == CSC:
            return len(self.rowidx)
        return prod(self.widths)

    def contains(self, index: Sequence[int]) -> bool:
        if self.variant == CSC:
            row, column = index
            return row in self.rowidx[self.colptr[column]:self.colptr[column + 1]]
        return all(start <= i < end for i, (start, end) in zip(index, self.intervals))

    def address(self, index: Sequence[int]) -> int:
        if len(index) != self.rank:
            raise OutOfBox(f"Indeks {tuple(index)} ma zły rząd dla układu rzędu {self.rank}")
        if self.variant == CSC:
            row, column = index
            if not 0 <= column < self.shape[1]:
                raise OutOfBox(f"Kolumna {column} poza macierzą CSC {self.shape}")
            for position in range(self.colptr[column], self.colptr[column + 1]):
                if self.rowidx[position] == row:
                    return position
            raise OutOfBox(f"Pozycja {tuple(index)} nie należy do wzorca CSC")
        if not self.contains(index):
            raise OutOfBox(f"Indeks {tuple(index)} poza pudełkiem {self.intervals}")
        return sum((i - start) * stride for i, (start, _), stride in zip(index, self.intervals, self.strides))

    def positions(self) -> Iterator[Tuple[int, ...]]:
        """Indeksy przechowywane w kolejności pamięci"""
        if self.variant == CSC:
            for column in range(self.shape[1]):
                for position in range(self.colptr[column], self.colptr[column + 1]):
                    yield (self.rowidx[position], column)
            return
        ranges = [range(start, end) for start, end in reversed(self.intervals)]
        for point in product(*ranges):
            yield tuple(reversed(point))

    def pack(self, dense: np.ndarray, dtype=np.float64) -> np.ndarray:
        """Gęsta tablica -> płaska pamięć w tym układzie (wypełnienie zerami)"""
        dense = np.asarray(dense)
        if dense.shape != self.shape:
            raise OutOfBox(f"Tablica ma kształt {dense.shape}, układ {self.shape}")
        if self.variant == CSC:
            values = [dense[r, c] for r, c in self.positions()]
            return np.array(values, dtype=dtype)
        box = np.zeros(self.widths, dtype=dtype)
        inside, source = self._overlap()
        box[inside] = dense[source]
        return box.flatten(order='F')

    def unpack(self, storage: np.ndarray) -> np.ndarray:
        dense = np.zeros(self.shape, dtype=np.asarray(storage).dtype)
        if self.variant == CSC:
            for value, (r, c) in zip(storage, self.positions()):
                dense[r, c] = value
            return dense
        box = np.asarray(storage).reshape(self.widths, order='F')
        inside, source = self._overlap()
        dense[source] = box[inside]
        return dense

    def _overlap(self):
        inside, source = [], []
        for (start, end), extent in zip(self.intervals, self.shape):
            stop = min(end, extent)
            inside.append(slice(0, max(stop - start, 0)))
            source.append(slice(start, max(stop, start)))
        return tuple(inside), tuple(source)

    def describe(self) -> str:
        if self.variant == CSC:
            return f"csc nnz={self.size}"
        box = ' x '.join(f"[{s},{e})" for s, e in self.intervals)
        return f"{self.variant} {box}"

    def to_dict(self) -> Dict:
        result = {
            'variant': self.variant,
            'shape': list(self.shape),
            'intervals': [list(i) for i in self.intervals],
            'strides': list(self.strides),
            'alignment': self.alignment,
            'elements': self.size,
        }
        if self.variant == CSC:
            result['colptr'] = list(self.colptr)
            result['rowidx'] = list(self.rowidx)
        return result


def _strides(widths: Sequence[int]) -> Tuple[int, ...]:
    strides, step = [], 1
    for width in widths:
        strides.append(step)
        step *= width
    return tuple(strides)


def _aligned(interval: Tuple[int, int], alignment: int) -> Tuple[int, int]:
    start, end = interval
    if alignment <= 1 or start == end:
        return interval
    return start - start % alignment, end + (alignment - end % alignment) % alignment


def layout_for_pattern(pattern: SparsityPattern, policy: str, alignment: int = 1,
                       name: str = '') -> MemoryLayout:
    """Układ pamięci dla wzorca według polityki"""
    shape = pattern.extents
    if policy == CSC:
        if pattern.rank != 2:
            raise CscRankError(f"Układ CSC wymaga rzędu 2, {name or 'tensor'} ma rząd {pattern.rank}")
        colptr, rowidx = [0], []
        for column in range(shape[1]):
            rows = np.flatnonzero(pattern.grid[:, column])
            rowidx.extend(int(r) for r in rows)
            colptr.append(len(rowidx))
        intervals = tuple((0, n) for n in shape)
        return MemoryLayout(CSC, shape, intervals, (1, 0), 1, tuple(colptr), tuple(rowidx))
    if policy == DENSE:
        intervals = [(0, n) for n in shape]
        alignment = 1
    elif policy in (BBOX, ALIGNED):
        intervals = bounding_box(pattern)
        if policy == ALIGNED and intervals:
            intervals[0] = _aligned(intervals[0], alignment)
        else:
            alignment = 1
    else:
        raise ValueError(f"Nieznana polityka układu: {policy}")
    intervals = tuple(tuple(i) for i in intervals)
    widths = [end - start for start, end in intervals]
    return MemoryLayout(policy if policy != ALIGNED else BBOX, shape, intervals,
                        _strides(widths), alignment)


def assign_layout(tensor: Tensor, policy: str, alignment: int = 1,
                  pattern: Optional[SparsityPattern] = None) -> MemoryLayout:
    """Układ pamięci tensora; `pattern` zastępuje zadeklarowany wzorzec"""
    return layout_for_pattern(pattern if pattern is not None else tensor.spp, policy, alignment, tensor.name)


def can_fuse(layout: MemoryLayout, first: int, last: int) -> bool:
    """Czy wymiary first..last (włącznie) można traktować jako jeden wymiar"""
    if layout.variant == CSC:
        return first == last
    for i in range(first, last):
        if layout.strides[i + 1] != layout.shape[i] * layout.strides[i]:
            return False
    return True


# ===================== Wybór polityki =====================

def resolve_policy(tensor: Tensor, default_policy: str = 'auto',
                   overrides: Optional[Dict[str, str]] = None,
                   auto_csc: bool = True, csc_threshold: float = 0.4) -> Tuple[str, bool]:
    """
    Polityka dla tensora i informacja, czy została zażądana jawnie.
    Kolejność: nadpisanie z konfiguracji, deklaracja w pliku, polityka
    domyślna, a w trybie auto CSC dla rzadkich macierzy stałych.
    """
    overrides = overrides or {}
    if tensor.name in overrides and overrides[tensor.name] != 'auto':
        return overrides[tensor.name], True
    if tensor.policy and tensor.policy != 'auto':
        return tensor.policy, True
    if default_policy != 'auto':
        return default_policy, False
    if auto_csc and tensor.is_constant and tensor.rank == 2 and tensor.spp.density() < csc_threshold:
        return CSC, False
    return ALIGNED, False


def storage_patterns(statements: Iterable) -> Dict[str, SparsityPattern]:
    """Suma wzorców EQSPP wszystkich wystąpień tensora (plus wzorzec celu)"""
    patterns: Dict[str, SparsityPattern] = {}
    for statement in statements:
        target = statement.children[0].tensor
        patterns[target.name] = patterns.get(target.name, target.spp) | target.spp
        for node in statement.walk():
            if node.kind != 'indexed':
                continue
            pattern = node.eqspp if node.eqspp is not None else node.tensor.spp
            known = patterns.get(node.tensor.name)
            patterns[node.tensor.name] = pattern if known is None else known | pattern
    return patterns
