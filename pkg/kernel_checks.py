"""
KONTRAKTOR v1.0 - Kernel Checks
===============================
Porównanie kernela z naiwną implementacją, zgodność z kodem C
i generowanie testów jednostkowych
"""

import ctypes
import logging
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from mako.lookup import TemplateLookup

from ast_nodes import Node
from codegen import KernelArtifact
from config import APP_NAME, APP_VERSION
from tensor_core import naive_einsum, random_values
from utils import FileUtils, IndexUtils, NumericUtils

logger = logging.getLogger(__name__)

_LOOKUP = TemplateLookup(directories=[str(Path(__file__).resolve().parent / 'templates')],
                         input_encoding='utf-8', strict_undefined=True)


@dataclass
class CheckResult:
    """Wynik porównania kernela z implementacją naiwną"""
    kernel: str
    seed: int
    error: float
    tolerance: float
    flops: int
    expected_flops: int

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance and self.flops == self.expected_flops

    def describe(self) -> str:
        status = "✅" if self.passed else "❌"
        return (f"{status} {self.kernel} (seed {self.seed}): błąd {self.error:.3e} "
                f"(tolerancja {self.tolerance:.0e}), flopy {self.flops}/{self.expected_flops}")


# ===================== Ścieżka naiwna =====================

def _evaluate(node: Node, values: Dict[str, np.ndarray], scalars: Dict[str, float]) -> np.ndarray:
    kind = node.kind
    if kind == 'indexed':
        return values[node.tensor.name]
    children = [_evaluate(child, values, scalars) for child in node.children]
    if kind == 'permute':
        source = node.children[0].indices
        return np.transpose(children[0], IndexUtils.transpose_axes(source, node.indices))
    if kind == 'scalar':
        return node.coefficient.evaluate(scalars) * children[0]
    if kind == 'add':
        total = np.zeros_like(children[0])
        for child, array in zip(node.children, children):
            total = total + np.transpose(array, IndexUtils.transpose_axes(child.indices, node.indices))
        return total
    operands = [(array, child.indices) for child, array in zip(node.children, children)]
    sizes = {}
    for array, letters in operands:
        sizes.update(zip(letters, array.shape))
    shape = tuple(sizes[c] for c in node.indices)
    return naive_einsum((shape, node.indices), operands, children)


def naive_execute(statements: Sequence[Node], values: Dict[str, np.ndarray],
                  scalars: Dict[str, float]) -> Dict[str, np.ndarray]:
    """Przypisania wykonane bezpośrednio na gęstych tablicach (float64)"""
    values = {name: np.asarray(array, dtype=np.float64).copy() for name, array in values.items()}
    for statement in statements:
        target, expression = statement.children
        result = _evaluate(expression, values, scalars)
        values[target.tensor.name] = np.transpose(
            result, IndexUtils.transpose_axes(expression.indices, target.indices))
    return values


# ===================== Sprawdzenie kernela =====================

def random_inputs(artifact: KernelArtifact, seed: int):
    """Losowe wartości slotów (zgodne ze wzorcami) i skalarów"""
    rng = np.random.default_rng(seed)
    values = {name: random_values(artifact.tensors[name].spp, rng) for name in artifact.slots}
    scalars = {name: float(rng.uniform(0.5, 1.5)) for name in artifact.scalars}
    return values, scalars


def check_kernel(artifact: KernelArtifact, seed: int = 0) -> CheckResult:
    """Interpreter kontra ścieżka naiwna; błąd to maksimum po tensorach wynikowych"""
    values, scalars = random_inputs(artifact, seed)
    for name, array in values.items():
        artifact.bind(name, array)
    for name, value in scalars.items():
        artifact.bind_scalar(name, value)
    # ścieżka naiwna liczy na wartościach po zaokrągleniu do precyzji kernela
    rounded = {name: artifact.result(name) for name in artifact.tensors}
    flops = artifact.execute()
    expected = naive_execute(artifact.kernel.statements, rounded, scalars)
    error = 0.0
    for name in artifact.written:
        layout = artifact.layouts[name]
        reference = layout.unpack(layout.pack(expected[name], np.float64))
        error = max(error, NumericUtils.relative_frobenius(artifact.result(name), reference))
    result = CheckResult(artifact.name, seed, error, artifact.profile.tolerance,
                         flops, artifact.flops.hardware)
    logger.debug(result.describe())
    return result


# ===================== Kod C =====================

def find_compiler(cc: str = 'cc') -> Optional[str]:
    return shutil.which(cc)


def compile_shared(sources: Dict[str, str], workdir: Path, cc: str = 'cc') -> Path:
    """Kompiluje wygenerowane pliki do biblioteki współdzielonej"""
    workdir = Path(workdir)
    kernels = None
    for name, text in sources.items():
        path = FileUtils.write_text(workdir / name, text)
        if name.endswith('.c'):
            kernels = path
    library = workdir / f"{kernels.stem}.so"
    command = [cc, '-std=c99', '-O2', '-ffp-contract=off', '-fPIC', '-shared',
               '-o', str(library), str(kernels)]
    logger.info(f"🔧 {' '.join(command)}")
    subprocess.run(command, check=True, capture_output=True, text=True)
    return library


def run_compiled(library: Path, artifact: KernelArtifact, storages: Dict[str, np.ndarray],
                 scalars: Dict[str, float]) -> Dict[str, np.ndarray]:
    """Uruchamia `<symbol>_execute_flat` na kopiach pamięci slotów"""
    lib = ctypes.CDLL(str(library))
    element = ctypes.c_double if artifact.profile.element_bytes == 8 else ctypes.c_float
    pointer = ctypes.POINTER(element)
    arrays = {name: np.ascontiguousarray(storages[name], dtype=artifact.profile.dtype).copy()
              for name in artifact.slots}
    tensors = (pointer * max(len(arrays), 1))(*[arrays[n].ctypes.data_as(pointer) for n in artifact.slots])
    values = (element * max(len(artifact.scalars), 1))(*[scalars[s] for s in artifact.scalars])
    function = getattr(lib, f"{artifact.symbol}_execute_flat")
    function.restype = None
    function.argtypes = [ctypes.POINTER(pointer), pointer]
    function(tensors, values)
    return arrays


# ===================== Testy jednostkowe =====================

def emit_unit_test(family: str, kernel_file: str, kernels: Sequence[str], precision: str = 'double',
                   alignment: int = 1, seeds: int = 3) -> str:
    """Moduł pytest sprawdzający każdy kernel rodziny"""
    template = _LOOKUP.get_template('tests.py.mako')
    return template.render(app=APP_NAME, version=APP_VERSION, family=family,
                           kernel_file=kernel_file, kernels=list(kernels),
                           precision=precision, alignment=alignment, seeds=seeds)


def check_family(artifacts: Sequence[KernelArtifact], seeds: Sequence[int] = (0,)) -> List[CheckResult]:
    results = [check_kernel(artifact, seed) for artifact in artifacts for seed in seeds]
    failed = [r for r in results if not r.passed]
    if failed:
        logger.warning(f"⚠️ {len(failed)} z {len(results)} sprawdzeń nie przeszło")
    else:
        logger.info(f"✅ Wszystkie sprawdzenia ({len(results)}) przeszły")
    return results
