"""
KONTRAKTOR v1.0 - Tensor Core
=============================
Tensory, skalary, przestrzeń indeksów i wzorcowa (naiwna) suma Einsteina
"""

import re
import logging
import itertools
from dataclasses import dataclass, field
from math import prod
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np

from errors import AlphabetExhausted, DuplicateIndexInTensor, IndexMismatch, SizeMismatch
from sparsity import SparsityPattern, _einsum_any
from utils import IndexUtils

logger = logging.getLogger(__name__)

NAME_PATTERN = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*$')


# ===================== Skalary i współczynniki =====================

@dataclass(frozen=True)
class Scalar:
    """Skalar: literał albo nazwany parametr kernela"""
    name: Optional[str] = None
    value: Optional[float] = None

    def __post_init__(self):
        if (self.name is None) == (self.value is None):
            raise ValueError("Skalar musi mieć albo nazwę, albo wartość")
        if self.name is not None and not NAME_PATTERN.match(self.name):
            raise ValueError(f"Niepoprawna nazwa skalara: {self.name}")
        if self.value is not None and not np.isfinite(self.value):
            raise ValueError(f"Literał skalara musi być skończony: {self.value}")

    @property
    def is_literal(self) -> bool:
        return self.name is None

    def coefficient(self) -> 'Coefficient':
        if self.is_literal:
            return Coefficient(float(self.value))
        return Coefficient(1.0, (self.name,))


@dataclass(frozen=True)
class Coefficient:
    """Iloczyn literału i nazwanych skalarów"""
    value: float = 1.0
    symbols: Tuple[str, ...] = ()

    def __mul__(self, other: 'Coefficient') -> 'Coefficient':
        return Coefficient(self.value * other.value, self.symbols + other.symbols)

    def is_one(self) -> bool:
        return self.value == 1.0 and not self.symbols

    def evaluate(self, scalars: Dict[str, float], cast=float):
        """Wartość współczynnika; kolejność mnożenia jak w kodzie C"""
        result = cast(self.value)
        for name in self.symbols:
            result = result * cast(scalars[name])
        return result

    def __str__(self) -> str:
        parts = [] if self.value == 1.0 and self.symbols else [repr(self.value)]
        return ' * '.join(parts + list(self.symbols))


ONE = Coefficient()


# ===================== Tensory =====================

class Tensor:
    """Nazwany tensor o stałym kształcie i wzorcu rzadkości"""

    def __init__(self, name: str, shape: Sequence[int],
                 spp: Optional[SparsityPattern] = None,
                 values: Optional[np.ndarray] = None,
                 policy: Optional[str] = None):
        if not NAME_PATTERN.match(name):
            raise ValueError(f"Niepoprawna nazwa tensora: {name}")
        shape = tuple(int(n) for n in shape)
        if any(n < 1 for n in shape):
            raise ValueError(f"Tensor {name}: rozmiary muszą być dodatnie {shape}")
        if values is not None:
            values = np.array(values, dtype=np.float64)
            if values.shape != shape:
                raise SizeMismatch(f"Tensor {name}: wartości mają kształt {values.shape}, oczekiwano {shape}")
            if spp is None:
                spp = SparsityPattern.from_values(values)
        if spp is None:
            spp = SparsityPattern.dense(shape)
        if spp.extents != shape:
            raise SizeMismatch(f"Tensor {name}: wzorzec ma kształt {spp.extents}, oczekiwano {shape}")
        if values is not None and np.any(values[~spp.grid] != 0):
            raise ValueError(f"Tensor {name}: wartości niezerowe poza wzorcem rzadkości")
        self.name = name
        self.shape = shape
        self.spp = spp
        self.values = values
        self.policy = policy

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return prod(self.shape)

    @property
    def is_constant(self) -> bool:
        return self.values is not None

    def __getitem__(self, indices: str):
        from ast_nodes import IndexedTensor
        return IndexedTensor(self, indices)

    def __deepcopy__(self, memo):
        # tożsamość tensora jest częścią rodziny kerneli
        return self

    def __repr__(self) -> str:
        return f"Tensor({self.name}, {self.shape})"


# ===================== Przestrzeń indeksów =====================

@dataclass(frozen=True)
class IndexSpace:
    """Uporządkowany zbiór liter z rozmiarami"""
    letters: str
    sizes: Dict[str, int] = field(hash=False)

    def position(self, letter: str) -> int:
        return self.letters.index(letter)

    @property
    def extents(self) -> Tuple[int, ...]:
        return tuple(self.sizes[c] for c in self.letters)

    @property
    def size(self) -> int:
        return prod(self.extents)

    def points(self) -> Iterator[Tuple[int, ...]]:
        return itertools.product(*(range(n) for n in self.extents))


@dataclass(frozen=True)
class Projection:
    """Rzut punktu przestrzeni na indeks tensora"""
    letters: str
    space: IndexSpace

    @property
    def positions(self) -> Tuple[int, ...]:
        return tuple(self.space.position(c) for c in self.letters)

    def __call__(self, point: Sequence[int]) -> Tuple[int, ...]:
        return tuple(point[p] for p in self.positions)

    def restriction(self, index: Sequence[int]) -> Iterator[Tuple[int, ...]]:
        """Wszystkie punkty przestrzeni rzutowane na `index`"""
        fixed = dict(zip(self.letters, index))
        ranges = [[fixed[c]] if c in fixed else range(self.space.sizes[c]) for c in self.space.letters]
        return itertools.product(*ranges)


def _shape_of(item) -> Tuple[int, ...]:
    if hasattr(item, 'shape'):
        return tuple(item.shape)
    return tuple(item)


def check_index_string(letters: str, rank: int, name: str = '') -> None:
    if len(letters) > len(IndexUtils.ALPHABET):
        raise AlphabetExhausted(f"Indeks {name or 'tensora'} żąda {len(letters)} liter, "
                                f"alfabet ma {len(IndexUtils.ALPHABET)}")
    for letter in letters:
        if not IndexUtils.is_valid_letter(letter):
            raise IndexMismatch(f"Niepoprawna litera indeksu '{letter}' w {name or letters}")
    if len(set(letters)) != len(letters):
        raise DuplicateIndexInTensor(f"Powtórzona litera w indeksie '{letters}' {name}".strip())
    if len(letters) != rank:
        raise IndexMismatch(f"Indeks '{letters}' ma długość {len(letters)}, rząd {name} to {rank}")


def build_index_space(operands: Sequence[Tuple[object, str]]) -> IndexSpace:
    """Przestrzeń indeksów dla par (tensor lub kształt, ciąg liter)"""
    sizes: Dict[str, int] = {}
    for item, letters in operands:
        shape = _shape_of(item)
        check_index_string(letters, len(shape), getattr(item, 'name', ''))
        for letter, extent in zip(letters, shape):
            if sizes.setdefault(letter, extent) != extent:
                raise SizeMismatch(f"Indeks '{letter}' ma rozmiary {sizes[letter]} i {extent}")
    letters = ''.join(sorted(sizes, key=IndexUtils.letter_key))
    return IndexSpace(letters, sizes)


def naive_einsum(result: Tuple[object, str], operands: Sequence[Tuple[object, str]],
                 values: Sequence[np.ndarray]) -> np.ndarray:
    """Bezpośrednia suma iloczynów po całej przestrzeni indeksów"""
    if len(values) != len(operands):
        raise ValueError("Liczba tablic nie zgadza się z liczbą operandów")
    space = build_index_space(operands)
    result_shape = _shape_of(result[0])
    build_index_space(list(operands) + [result])
    missing = set(result[1]) - set(space.letters)
    if missing:
        raise IndexMismatch(f"Indeksy wyniku {sorted(missing)} nie występują w operandach")
    arrays = []
    for (item, letters), array in zip(operands, values):
        array = np.asarray(array)
        if array.shape != _shape_of(item):
            raise SizeMismatch(f"Tablica ma kształt {array.shape}, oczekiwano {_shape_of(item)}")
        arrays.append(array)
    subscripts = ','.join(letters for _, letters in operands) + '->' + result[1]
    output = np.einsum(subscripts, *arrays, optimize=False)
    return np.asarray(output).reshape(result_shape)


def spp_of_product(operands: Sequence[Tuple[SparsityPattern, str]], result_index: str) -> SparsityPattern:
    """Wzorzec rzadkości iloczynu, logiczna suma po indeksach sumowanych"""
    return SparsityPattern(_einsum_any(operands, result_index, 'greedy'))


def random_values(pattern: SparsityPattern, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Losowe wartości z [-1, 1) zgodne ze wzorcem"""
    values = rng.uniform(-1.0, 1.0, size=pattern.extents)
    values[~pattern.grid] = 0.0
    return values.astype(dtype)
