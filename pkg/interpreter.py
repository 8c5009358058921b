"""
KONTRAKTOR v1.0 - Interpreter
=============================
Wykonanie wywołań kernela w Pythonie, w tej samej kolejności
operacji co generowany kod C (wyniki zgodne bit w bit)
"""

import logging
from itertools import product
from typing import Dict, List, Sequence

import numpy as np

from cfg import BufferPlan
from codegen import OpCall, OperationKind
from precision_config import PrecisionProfile

logger = logging.getLogger(__name__)


class Interpreter:
    """Wykonuje listę wywołań na płaskich tablicach pamięci"""

    def __init__(self, profile: PrecisionProfile):
        self.profile = profile
        self.flops = 0

    def run(self, calls: Sequence[OpCall], storages: Dict[str, np.ndarray],
            scalars: Dict[str, float], buffers: BufferPlan = None) -> int:
        """Mutuje `storages` (tensory jądra); zwraca liczbę flopów"""
        self.flops = 0
        cast = self.profile.cast
        memory: Dict[str, List] = {name: list(array) for name, array in storages.items()}
        if self.profile.dtype == np.float64:
            memory = {name: [float(v) for v in values] for name, values in memory.items()}
        if buffers is not None:
            zero = cast(0.0)
            pool = [[zero] * max(size, 1) for size in buffers.sizes]
            for name, index in buffers.assignment.items():
                memory[name] = pool[index]
        for call in calls:
            alpha = call.action.alpha.evaluate(scalars, cast)
            data = [memory[v.name] for v in call.variables]
            if call.zero_fill:
                zero = cast(0.0)
                lhs = data[0]
                for i in range(call.lhs.size):
                    lhs[i] = zero
            if call.kind == OperationKind.LOG:
                self._log(call, data, alpha)
            else:
                self._generic(call, data, alpha)
        for name, array in storages.items():
            array[:] = np.asarray(memory[name], dtype=self.profile.dtype)
        logger.debug(f"Wykonano {len(calls)} wywołań, {self.flops} flopów")
        return self.flops

    @staticmethod
    def _points(loops, count: int):
        """Przesunięcia wszystkich operandów dla kolejnych iteracji gniazda pętli"""
        axes = [[tuple((i - loop.start) * s for s in loop.strides[:count])
                 for i in range(loop.start, loop.stop)] for loop in loops]
        for combination in product(*axes):
            yield [sum(parts) for parts in zip(*combination)] if combination else [0] * count

    def _generic(self, call: OpCall, data: List[List], alpha) -> None:
        kind = call.kind
        add = call.action.add
        lhs = data[0]
        offsets = call.offsets
        zero = self.profile.cast(0.0)
        for shift in self._points(call.loops, len(data)):
            target = offsets[0] + shift[0]
            if kind == OperationKind.COPYSCALEADD:
                value = data[1][offsets[1] + shift[1]]
                self.flops += 1
            elif kind == OperationKind.PRODUCT:
                value = data[1][offsets[1] + shift[1]] * data[2][offsets[2] + shift[2]]
                self.flops += 1 + add
            else:
                inner = call.inner
                source = offsets[1] + shift[1]
                value = zero
                for step in range(inner.length):
                    value = value + data[1][source + step * inner.strides[1]]
                self.flops += inner.length + add
            value = alpha * value
            lhs[target] = value + lhs[target] if add else value

    def _log(self, call: OpCall, data: List[List], alpha) -> None:
        geometry = call.gemm
        csc = call.action.rhs.descriptor.csc_b
        c, a, b = data
        for shift in self._points(geometry.batch, 3):
            c0, a0, b0 = (o + s for o, s in zip(geometry.offsets, shift))
            if csc:
                self._gemm_csc(call, c, a, b, c0, a0, alpha)
            else:
                self._gemm(call, c, a, b, c0, a0, b0, alpha)

    def _store(self, c: List, index: int, value, add: bool) -> None:
        c[index] = value + c[index] if add else value

    def _gemm(self, call: OpCall, c, a, b, c0: int, a0: int, b0: int, alpha) -> None:
        g = call.gemm
        add = call.action.add
        zero = self.profile.cast(0.0)
        (a_rs, a_cs), (b_rs, b_cs), (c_rs, c_cs) = g.a_strides, g.b_strides, g.c_strides
        for col in range(g.n):
            for row in range(g.m):
                acc = zero
                for inner in range(g.k):
                    acc = acc + a[a0 + row * a_rs + inner * a_cs] * b[b0 + inner * b_rs + col * b_cs]
                self._store(c, c0 + row * c_rs + col * c_cs, alpha * acc, add)
        self.flops += 2 * g.m * g.n * g.k

    def _gemm_csc(self, call: OpCall, c, a, values, c0: int, a0: int, alpha) -> None:
        g = call.gemm
        add = call.action.add
        zero = self.profile.cast(0.0)
        layout = call.variables[2].layout
        (a_rs, a_cs), (c_rs, c_cs) = g.a_strides, g.c_strides
        (n0, n1), (k0, k1) = g.csc_n, g.csc_k
        for col in range(n0, n1):
            for row in range(g.m):
                acc = zero
                for position in range(layout.colptr[col], layout.colptr[col + 1]):
                    inner = layout.rowidx[position]
                    if k0 <= inner < k1:
                        acc = acc + a[a0 + row * a_rs + (inner - k0) * a_cs] * values[position]
                        self.flops += 2
                self._store(c, c0 + row * c_rs + (col - n0) * c_cs, alpha * acc, add)
