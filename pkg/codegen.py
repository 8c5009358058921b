"""
KONTRAKTOR v1.0 - Code Generation Runtime
=========================================
Klasyfikacja akcji, wybór backendu, geometria wywołań,
liczenie flopów i artefakt kernela gotowy do uruchomienia
"""

import logging
from dataclasses import dataclass
from enum import Enum
from math import prod
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from cfg import Action, CfgProgram, CopyRhs, IndexSumRhs, LoGRhs, ProductRhs, Variable
from errors import OutOfBox, PipelineError, UnboundSlot
from layout import MemoryLayout
from log_mapper import GemmGeometry, LoopSpec, base_offset, bind_gemm, covers, letter_ranges
from precision_config import PrecisionProfile
from tensor_core import Tensor

logger = logging.getLogger(__name__)


class OperationKind(str, Enum):
    COPYSCALEADD = 'copyscaleadd'
    INDEXSUM = 'indexsum'
    PRODUCT = 'product'
    LOG = 'log'


def classify(action: Action) -> OperationKind:
    rhs = action.rhs
    if isinstance(rhs, CopyRhs):
        return OperationKind.COPYSCALEADD
    if isinstance(rhs, IndexSumRhs):
        return OperationKind.INDEXSUM
    if isinstance(rhs, ProductRhs):
        return OperationKind.PRODUCT
    if isinstance(rhs, LoGRhs):
        return OperationKind.LOG
    raise PipelineError(f"Nieznany rodzaj akcji: {action}")


# ===================== Backendy =====================

class Backend:
    """Generator kodu dla wybranych rodzajów operacji"""

    name = 'base'
    available = True

    def supports(self, kind: OperationKind, action: Action, precision: str) -> bool:
        raise NotImplementedError


class PortableBackend(Backend):
    """Przenośne pętle C99, obsługuje wszystko"""

    name = 'portable'

    def supports(self, kind, action, precision) -> bool:
        return True


class ExternalGemmBackend(Backend):
    """Zewnętrzny generator GEMM; tylko wpis interfejsu, bez implementacji"""

    available = False

    def __init__(self, name: str, sparse: bool = False, max_dimension: int = 256):
        self.name = name
        self.sparse = sparse
        self.max_dimension = max_dimension

    def supports(self, kind, action, precision) -> bool:
        if not self.available or kind != OperationKind.LOG:
            return False
        is_sparse = action.rhs.descriptor.csc_b
        return is_sparse == self.sparse


class BackendFactory:
    """Wybiera backend o najwyższym priorytecie, który obsługuje akcję"""

    REGISTRY: Dict[str, Backend] = {
        'portable': PortableBackend(),
        'libxsmm': ExternalGemmBackend('libxsmm'),
        'pspamm': ExternalGemmBackend('pspamm', sparse=True),
    }

    def __init__(self, priority: Optional[Sequence[str]] = None):
        names = list(priority or ['portable'])
        unknown = [n for n in names if n not in self.REGISTRY]
        if unknown:
            raise ValueError(f"Nieznane backendy: {unknown}")
        if 'portable' not in names:
            names.append('portable')
        self.priority = names

    def create(self, kind: OperationKind, action: Action, precision: str) -> Backend:
        for name in self.priority:
            backend = self.REGISTRY[name]
            if backend.supports(kind, action, precision):
                return backend
            logger.debug(f"Backend {name} pomija {kind.value}")
        raise PipelineError("Brak backendu dla akcji")


# ===================== Geometria wywołań =====================

@dataclass(frozen=True)
class OpCall:
    """Akcja z konkretnymi zakresami, przesunięciami i krokami"""
    kind: OperationKind
    action: Action
    backend: str
    variables: Tuple[Variable, ...]
    loops: Tuple[LoopSpec, ...] = ()
    inner: Optional[LoopSpec] = None
    offsets: Tuple[int, ...] = ()
    zero_fill: bool = False
    gemm: Optional[GemmGeometry] = None

    @property
    def lhs(self) -> Variable:
        return self.variables[0]


def _loops(letters: str, views, ranges) -> Tuple[LoopSpec, ...]:
    """Pętle od najbardziej zewnętrznej (ostatni wymiar) do wewnętrznej"""
    loops = []
    for letter in reversed(letters):
        strides = tuple(v.stride(letter) if letter in v.letters else 0 for v in views)
        loops.append(LoopSpec(letter, ranges[letter][0], ranges[letter][1], strides))
    return tuple(loops)


def build_call(action: Action, backend: str) -> OpCall:
    kind = classify(action)
    rhs = action.rhs
    lhs_view = action.lhs.view()
    if kind == OperationKind.LOG:
        left, right = rhs.left.view(), rhs.right.view()
        geometry = bind_gemm(rhs.descriptor, lhs_view, left, right)
        x, y = (rhs.left, rhs.right) if rhs.descriptor.gemm_left == 0 else (rhs.right, rhs.left)
        return OpCall(kind, action, backend, (action.lhs.var, x.var, y.var),
                      offsets=geometry.offsets,
                      zero_fill=not action.add and not geometry.covers_result, gemm=geometry)
    views = (lhs_view,) + tuple(ref.view() for ref in rhs.refs())
    if set(action.lhs.letters) - set().union(*(set(v.letters) for v in views[1:])):
        raise PipelineError(f"Akcja {action} ma litery wyniku bez źródła")
    ranges = letter_ranges(views)
    loops = _loops(action.lhs.letters, views, ranges)
    inner = None
    if kind == OperationKind.INDEXSUM:
        letter = rhs.letter
        inner = LoopSpec(letter, ranges[letter][0], ranges[letter][1], (0, views[1].stride(letter)))
    offsets = tuple(base_offset(v, ranges) for v in views)
    return OpCall(kind, action, backend, tuple(ref.var for ref in (action.lhs,) + rhs.refs()),
                  loops=loops, inner=inner, offsets=offsets,
                  zero_fill=not action.add and not covers(lhs_view, ranges))


def build_calls(program: CfgProgram, factory: Optional[BackendFactory] = None,
                precision: str = 'double') -> List[OpCall]:
    factory = factory or BackendFactory()
    calls = []
    for action in program.actions:
        backend = factory.create(classify(action), action, precision)
        calls.append(build_call(action, backend.name))
    return calls


# ===================== Flopy =====================

@dataclass(frozen=True)
class FlopCount:
    nonzero: int
    hardware: int
    box: int
    dense: int

    @property
    def eqspp_ratio(self) -> float:
        return self.box / self.dense if self.dense else 1.0

    def to_dict(self) -> Dict:
        return {
            'nonzero_flops': self.nonzero,
            'hardware_flops': self.hardware,
            'box_flops': self.box,
            'dense_flops': self.dense,
            'eqspp_ratio': self.eqspp_ratio,
        }


def _csc_entries(layout: MemoryLayout, columns: Tuple[int, int], rows: Tuple[int, int]) -> int:
    count = 0
    for column in range(max(columns[0], 0), min(columns[1], layout.shape[1])):
        for position in range(layout.colptr[column], layout.colptr[column + 1]):
            if rows[0] <= layout.rowidx[position] < rows[1]:
                count += 1
    return count


def _full_extent(call: OpCall, letter: str) -> int:
    for ref in (call.action.lhs,) + call.action.rhs.refs():
        if letter in ref.letters:
            return ref.var.layout.shape[ref.letters.index(letter)]
    raise PipelineError(f"Litera {letter} nie występuje w akcji")


def call_flops(call: OpCall, mode: str = 'hardware') -> int:
    """Flopy wywołania: hardware (wykonane), box (CSC jak gęste), dense (pełne rozmiary)"""
    action = call.action
    if call.kind == OperationKind.LOG:
        descriptor = action.rhs.descriptor
        geometry = call.gemm
        if mode == 'dense':
            extent = lambda letters: prod(_full_extent(call, c) for c in letters)
            return 2 * extent(descriptor.m) * extent(descriptor.n) * extent(descriptor.k) \
                * extent(descriptor.batched)
        batches = prod(loop.length for loop in geometry.batch)
        if descriptor.csc_b and mode == 'hardware':
            entries = _csc_entries(call.variables[2].layout, geometry.csc_n, geometry.csc_k)
            return 2 * geometry.m * entries * batches
        return 2 * geometry.m * geometry.n * geometry.k * batches

    if mode == 'dense':
        elements = prod(_full_extent(call, loop.letter) for loop in call.loops)
        inner = _full_extent(call, call.inner.letter) if call.inner else 1
    else:
        elements = prod(loop.length for loop in call.loops)
        inner = call.inner.length if call.inner else 1
    accumulate = int(action.add)
    if call.kind == OperationKind.COPYSCALEADD:
        return elements
    if call.kind == OperationKind.PRODUCT:
        return elements * (1 + accumulate)
    return elements * (inner + accumulate)


def count_flops(program: CfgProgram, calls: Sequence[OpCall]) -> FlopCount:
    """(niezerowe, sprzętowe, pudełkowe, gęste) dla programu kernela

    Pudełkowe i gęste liczą tylko kontrakcje (kopie i skalowania pomijane).
    """
    contractions = [c for c in calls if c.kind != OperationKind.COPYSCALEADD]
    return FlopCount(
        nonzero=program.nonzero_flops,
        hardware=sum(call_flops(c, 'hardware') for c in calls),
        box=sum(call_flops(c, 'box') for c in contractions),
        dense=sum(call_flops(c, 'dense') for c in contractions),
    )


# ===================== Artefakt =====================

class TensorView:
    """Dostęp do elementów tensora przez jego układ pamięci"""

    def __init__(self, layout: MemoryLayout, storage: np.ndarray):
        self.layout = layout
        self.storage = storage

    def __getitem__(self, index) -> float:
        index = index if isinstance(index, tuple) else (index,)
        try:
            return self.storage[self.layout.address(index)]
        except OutOfBox:
            if all(0 <= i < n for i, n in zip(index, self.layout.shape)):
                return self.storage.dtype.type(0)
            raise

    def __setitem__(self, index, value):
        index = index if isinstance(index, tuple) else (index,)
        self.storage[self.layout.address(index)] = value


class KernelArtifact:
    """Skompilowany kernel: program, wywołania, układy i podpięte dane"""

    def __init__(self, family: str, name: str, program: CfgProgram, calls: List[OpCall],
                 tensors: Dict[str, Tensor], layouts: Dict[str, MemoryLayout],
                 scalars: List[str], profile: PrecisionProfile, flops: FlopCount, kernel=None):
        self.family = family
        self.kernel = kernel
        self.name = name
        self.program = program
        self.calls = calls
        self.tensors = tensors
        self.layouts = layouts
        self.scalars = list(scalars)
        self.profile = profile
        self.flops = flops
        self.prefetch: List[Tuple[str, int]] = []
        self.diagnostics: List = []
        self.slots = [n for n in tensors if not tensors[n].is_constant]
        self.written = sorted({a.lhs.var.name for a in program.actions if not a.lhs.var.temporary})
        self._storage: Dict[str, np.ndarray] = {}
        self._scalars: Dict[str, float] = {}
        for name, tensor in tensors.items():
            if tensor.is_constant:
                self._storage[name] = layouts[name].pack(tensor.values, profile.dtype)

    @property
    def symbol(self) -> str:
        return f"{self.family}_{self.name}"

    def bind(self, name: str, values: np.ndarray) -> None:
        """Podpina gęstą tablicę wartości (pakowaną do układu tensora)"""
        if name not in self.tensors:
            raise KeyError(f"Kernel {self.name} nie używa tensora {name}")
        self._storage[name] = self.layouts[name].pack(np.asarray(values), self.profile.dtype)

    def bind_storage(self, name: str, storage: np.ndarray) -> None:
        """Podpina pamięć już w układzie tensora"""
        storage = np.asarray(storage, dtype=self.profile.dtype)
        if storage.shape != (self.layouts[name].size,):
            raise OutOfBox(f"Pamięć {name} ma {storage.size} elementów, układ {self.layouts[name].size}")
        self._storage[name] = storage.copy()

    def bind_scalar(self, name: str, value: float) -> None:
        if name not in self.scalars:
            raise KeyError(f"Kernel {self.name} nie ma skalara {name}")
        self._scalars[name] = value

    def storage(self, name: str) -> np.ndarray:
        return self._storage[name]

    def result(self, name: str) -> np.ndarray:
        """Gęsta kopia tensora po wykonaniu"""
        return self.layouts[name].unpack(self._storage[name])

    def view(self, name: str) -> TensorView:
        return TensorView(self.layouts[name], self._storage[name])

    def execute(self) -> int:
        """Uruchamia kernel w interpreterze; zwraca liczbę wykonanych flopów"""
        missing = [n for n in self.slots if n not in self._storage]
        if missing:
            raise UnboundSlot(f"Kernel {self.name}: niepodpięte tensory {missing}")
        unbound = [s for s in self.scalars if s not in self._scalars]
        if unbound:
            raise UnboundSlot(f"Kernel {self.name}: niepodpięte skalary {unbound}")
        from interpreter import Interpreter
        return Interpreter(self.profile).run(self.calls, self._storage, self._scalars, self.program.buffers)

    def summary(self) -> Dict:
        return {
            'kernel': self.name,
            'symbol': self.symbol,
            **self.flops.to_dict(),
            'actions': self.program.dump(),
            'kinds': [c.kind.value for c in self.calls],
            'descriptors': [c.action.rhs.descriptor.to_dict() for c in self.calls
                            if c.kind == OperationKind.LOG],
            'buffers': self.program.buffers.to_dict(self.profile.element_bytes) if self.program.buffers else None,
            'prefetch': [{'tensor': t, 'log': i} for t, i in self.prefetch],
            'diagnostics': [d.to_dict() for d in self.diagnostics],
        }
