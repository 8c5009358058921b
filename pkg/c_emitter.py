"""
KONTRAKTOR v1.0 - C99 Emitter
=============================
Generowanie przenośnego kodu C99 (pętle + skalarny GEMM)
z szablonów mako: plik kerneli i nagłówek tensorów
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence

from mako.lookup import TemplateLookup

from codegen import KernelArtifact, OpCall, OperationKind
from config import APP_NAME, APP_VERSION
from layout import CSC
from precision_config import PrecisionProfile
from utils import FileUtils, NumericUtils

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent / 'templates'
_LOOKUP = TemplateLookup(directories=[str(TEMPLATE_DIR)], input_encoding='utf-8',
                         output_encoding=None, strict_undefined=True)


def c_name(name: str) -> str:
    return FileUtils.sanitize_identifier(name)


def pointer_name(variable) -> str:
    return variable.name if variable.temporary else f"t_{c_name(variable.name)}"


def _address(offset: int, terms: Sequence) -> str:
    parts = [str(offset)] + [f"{stride}*i_{letter}" for letter, stride in terms if stride]
    return ' + '.join(parts)


class CEmitter:
    """Renderuje kernel rodziny do tekstu C99"""

    def __init__(self, family: str, profile: PrecisionProfile):
        self.family = c_name(family)
        self.profile = profile

    # ===================== Wyrażenia =====================

    def literal(self, value: float) -> str:
        return self.profile.c_literal(NumericUtils.format_literal(value))

    def alpha(self, call: OpCall) -> str:
        coefficient = call.action.alpha
        parts = [self.literal(coefficient.value)]
        parts += [f"s_{c_name(s)}" for s in coefficient.symbols]
        return ' * '.join(parts)

    def generic(self, call: OpCall) -> Dict:
        count = len(call.variables)
        addresses = []
        for v in range(count):
            terms = [(loop.letter, loop.strides[v]) for loop in call.loops]
            if call.inner is not None and v == 1:
                terms.append((call.inner.letter, call.inner.strides[1]))
            addresses.append(_address(call.offsets[v], terms))
        return {
            'loops': [(loop.letter, loop.length) for loop in call.loops],
            'inner': (call.inner.letter, call.inner.length) if call.inner else None,
            'addresses': addresses,
        }

    def gemm(self, call: OpCall) -> Dict:
        g = call.gemm
        bases = [_address(g.offsets[v], [(loop.letter, loop.strides[v]) for loop in g.batch])
                 for v in range(3)]
        return {
            'loops': [(loop.letter, loop.length) for loop in g.batch],
            'bases': bases,
            'geometry': g,
            'csc': call.action.rhs.descriptor.csc_b,
            'csc_array': f"{self.family}_{c_name(call.variables[2].name)}",
            'prefetch': call.action.rhs.prefetch,
            'notation': call.action.rhs.descriptor.notation(),
        }

    def call_context(self, call: OpCall) -> Dict:
        context = {
            'kind': call.kind.value,
            'text': str(call.action),
            'alpha': self.alpha(call),
            'add': call.action.add,
            'zero_fill': call.zero_fill,
            'pointers': [pointer_name(v) for v in call.variables],
            'lhs_size': call.lhs.size,
            'backend': call.backend,
        }
        context.update(self.gemm(call) if call.kind == OperationKind.LOG else self.generic(call))
        return context

    def kernel_context(self, artifact: KernelArtifact) -> Dict:
        buffers = artifact.program.buffers
        temporaries = {v.name: v for v in artifact.program.temporaries()}
        return {
            'symbol': f"{self.family}_{c_name(artifact.name)}",
            'name': artifact.name,
            'slots': [(c_name(n), f"t_{c_name(n)}") for n in artifact.slots],
            'constants': [(f"{self.family}_{c_name(n)}", f"t_{c_name(n)}")
                          for n, t in artifact.tensors.items() if t.is_constant],
            'scalars': [(c_name(s), f"s_{c_name(s)}") for s in artifact.scalars],
            'buffers': [max(size, 1) for size in (buffers.sizes if buffers else ())],
            'temporaries': [(name, buffers.assignment[name]) for name in sorted(temporaries)
                            if buffers and name in buffers.assignment],
            'calls': [self.call_context(call) for call in artifact.calls],
            'flops': artifact.flops,
        }

    # ===================== Pliki =====================

    def emit_kernels(self, artifacts: Sequence[KernelArtifact]) -> str:
        template = _LOOKUP.get_template('kernels.c.mako')
        text = template.render(
            app=APP_NAME, version=APP_VERSION, family=self.family, T=self.profile.ctype,
            kernels=[self.kernel_context(a) for a in artifacts],
        )
        logger.debug(f"Wygenerowano kod C dla {len(artifacts)} kerneli rodziny {self.family}")
        return text

    def emit_tensors(self, artifacts: Sequence[KernelArtifact]) -> str:
        layouts, constants = {}, {}
        for artifact in artifacts:
            for name, tensor in artifact.tensors.items():
                layouts[name] = artifact.layouts[name]
                if tensor.is_constant:
                    constants[name] = artifact.storage(name)
        entries = []
        for name in sorted(layouts):
            layout = layouts[name]
            entry = {
                'name': c_name(name),
                'size': layout.size,
                'describe': layout.describe(),
                'values': None,
                'colptr': list(layout.colptr) if layout.variant == CSC else None,
                'rowidx': list(layout.rowidx) if layout.variant == CSC else None,
            }
            if name in constants:
                entry['values'] = [NumericUtils.format_literal(float(v)) for v in constants[name]] or ['0.0']
            entries.append(entry)
        template = _LOOKUP.get_template('tensors.h.mako')
        return template.render(app=APP_NAME, version=APP_VERSION, family=self.family,
                               T=self.profile.ctype, tensors=entries,
                               kernels=[self.kernel_context(a) for a in artifacts])

    def write(self, artifacts: Sequence[KernelArtifact], out_dir: Path) -> List[Path]:
        out_dir = Path(out_dir)
        paths = [
            FileUtils.write_text(out_dir / f"{self.family}_kernels.c", self.emit_kernels(artifacts)),
            FileUtils.write_text(out_dir / f"{self.family}_tensors.h", self.emit_tensors(artifacts)),
        ]
        logger.info(f"💾 Zapisano {paths[0].name} i {paths[1].name}")
        return paths


def emit_source(family: str, artifacts: Sequence[KernelArtifact], profile: PrecisionProfile) -> Dict[str, str]:
    """Teksty plików C rodziny: {nazwa pliku: treść}"""
    emitter = CEmitter(family, profile)
    return {
        f"{emitter.family}_kernels.c": emitter.emit_kernels(artifacts),
        f"{emitter.family}_tensors.h": emitter.emit_tensors(artifacts),
    }
