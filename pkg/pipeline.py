"""
KONTRAKTOR v1.0 - Compilation Pipeline
======================================
Przebieg kompilacji rodziny kerneli: walidacja, rzadkość, redukcja,
układy pamięci, odwzorowanie LoG, CFG, wywołania, emisja i raport
"""

import copy
import logging
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

from ast_nodes import Kernel, KernelFamily, Node
from cfg import CfgProgram, LoGRhs, Variable, lower, run_passes
from codegen import BackendFactory, KernelArtifact, build_calls, count_flops
from config import PipelineConfig
from errors import CscRankError, KontraktorError
from layout import ALIGNED, CSC, MemoryLayout, layout_for_pattern, resolve_policy, storage_patterns
from log_mapper import (OperandView, PermutationOptimizer, apply_permutations, assign_prefetch,
                        configuration_oracle, find_contractions)
from precision_config import PrecisionProfile, get_precision_profile
from sparsity import annotate_sparsity
from strength_reduction import exhaustive_oracle, reduce_tree
from tensor_core import Tensor
from validators import Diagnostic, diagnostic_from_error, validate_family

logger = logging.getLogger(__name__)


@dataclass
class KernelResult:
    """Wynik kompilacji jednego kernela"""
    kernel: str
    success: bool
    artifact: Optional[KernelArtifact]
    diagnostics: List[Diagnostic]
    processing_time: float = 0.0


@dataclass
class PipelineResult:
    """Wynik przebiegu dla całej rodziny"""
    family: str
    precision: str
    alignment: int
    results: List[KernelResult]
    layouts: Dict[str, MemoryLayout]
    diagnostics: List[Diagnostic]
    files: List[Path] = field(default_factory=list)
    processing_time: float = 0.0

    @property
    def artifacts(self) -> List[KernelArtifact]:
        return [r.artifact for r in self.results if r.artifact is not None]

    @property
    def all_diagnostics(self) -> List[Diagnostic]:
        collected = list(self.diagnostics)
        for result in self.results:
            collected.extend(result.diagnostics)
        return collected

    @property
    def success(self) -> bool:
        return all(d.severity != 'error' for d in self.all_diagnostics)

    def artifact(self, name: str) -> KernelArtifact:
        for artifact in self.artifacts:
            if artifact.name == name:
                return artifact
        raise KeyError(name)


@dataclass
class _Prepared:
    """Kernel po redukcji, przed wyborem układów"""
    kernel: Kernel
    statements: List[Node]
    nonzero_flops: int


# ===================== Etapy niezależne od układów =====================

def nonzero_flops(statements: List[Node]) -> int:
    """Koszt planów Einsumów plus (dzieci - 1) * nnz dla każdej sumy"""
    total = 0
    for statement in statements:
        for node in statement.walk():
            schedule = getattr(node, 'schedule', None)
            if schedule is not None:
                total += schedule.cost
            if node.kind == 'add':
                total += (len(node.children) - 1) * node.spp.nnz()
    return total


def prepare_kernel(kernel: Kernel, use_eqspp: bool = True) -> _Prepared:
    statements = []
    for statement in copy.deepcopy(kernel.statements):
        annotate_sparsity(statement, use_eqspp)
        statements.append(reduce_tree(statement))
    return _Prepared(kernel, statements, nonzero_flops(statements))


def csc_violations(program: CfgProgram) -> Set[str]:
    """Tensory CSC użyte inaczej niż jako prawy operand GEMM z csc_b"""
    offending: Set[str] = set()
    for action in program.actions:
        rhs = action.rhs
        allowed = None
        if isinstance(rhs, LoGRhs) and rhs.descriptor.csc_b:
            allowed = (rhs.right if rhs.descriptor.gemm_left == 0 else rhs.left).var.name
        for ref in (action.lhs,) + rhs.refs():
            if ref.var.layout.variant == CSC and ref.var.name != allowed:
                offending.add(ref.var.name)
    return offending


# ===================== Kompilator rodziny =====================

class FamilyCompiler:
    """Kompiluje rodzinę kerneli według PipelineConfig"""

    def __init__(self, family: KernelFamily, config: Optional[PipelineConfig] = None):
        config = config or PipelineConfig()
        # deklaracje w pliku mają pierwszeństwo przed konfiguracją
        self.config = replace(config,
                              precision=family.precision or config.precision,
                              alignment=family.alignment or config.alignment)
        self.family = family
        self.profile: PrecisionProfile = get_precision_profile(self.config.precision)
        self.factory = BackendFactory(self.config.backend_priority)
        self.diagnostics: List[Diagnostic] = []
        self._explicit: Dict[str, bool] = {}

    # ----- układy -----

    def family_layouts(self, prepared: List[_Prepared], demoted: Set[str]) -> Dict[str, MemoryLayout]:
        """Jeden układ na tensor przygotowanych kerneli: pudełko sumy wzorców wszystkich wystąpień"""
        patterns = storage_patterns([s for p in prepared for s in p.statements])
        written = {name for p in prepared for name in p.kernel.written}
        tensors: Dict[str, Tensor] = {}
        for item in prepared:
            for tensor in item.kernel.tensors:
                tensors.setdefault(tensor.name, tensor)
        layouts: Dict[str, MemoryLayout] = {}
        for name, tensor in tensors.items():
            policy, explicit = resolve_policy(tensor, self.config.default_policy,
                                              self.config.layout_overrides, self.config.auto_csc,
                                              self.config.csc_density_threshold)
            self._explicit[name] = explicit
            if policy == CSC and (name in demoted or name in written):
                policy = ALIGNED
            pattern = patterns.get(name, tensor.spp)
            try:
                layouts[name] = layout_for_pattern(pattern, policy, self.config.alignment, name)
            except CscRankError as e:
                self.diagnostics.append(Diagnostic('warning', e.code, f"{e.message}; układ bbox"))
                layouts[name] = layout_for_pattern(pattern, ALIGNED, self.config.alignment, name)
            logger.debug(f"Układ {name}: {layouts[name].describe()}")
        return layouts

    def _demote(self, names: Set[str]) -> None:
        for name in sorted(names):
            message = f"Tensor {name} nie może być CSC w tym użyciu, układ bbox"
            if self._explicit.get(name):
                self.diagnostics.append(Diagnostic('warning', 'csc_fallback', message))
                logger.warning(f"⚠️ {message}")
            else:
                logger.debug(message)

    # ----- kernel -----

    def compile_kernel(self, prepared: _Prepared,
                       layouts: Dict[str, MemoryLayout]) -> Tuple[Optional[KernelArtifact], Set[str], List[Diagnostic]]:
        kernel = prepared.kernel
        diagnostics: List[Diagnostic] = []
        statements = [find_contractions(s) for s in copy.deepcopy(prepared.statements)]

        leaf_view = lambda node: OperandView(node.indices, layouts[node.tensor.name])
        optimizer = PermutationOptimizer(leaf_view, self.config.alignment, self.config.limits.max_rank)
        statements = [apply_permutations(s, optimizer.optimize(s)) for s in statements]

        prefetch = []
        if self.config.prefetch and kernel.prefetch:
            logs = [n for s in statements for n in s.walk() if n.kind == 'log']
            capabilities = [layout_for_pattern(n.spp, ALIGNED, self.config.alignment).size
                            * self.profile.element_bytes for n in logs]
            plan = assign_prefetch(logs, kernel.prefetch, capabilities, self.profile.element_bytes)
            prefetch = plan.assignments
            for name in plan.unmatched:
                diagnostics.append(Diagnostic('warning', 'prefetch_unmatched',
                                              f"Brak wolnego LoG dla prefetchu {name}", kernel.name))

        variables = {t.name: Variable(t.name, layouts[t.name], False, t.name in kernel.written)
                     for t in kernel.tensors}
        program = run_passes(lower(statements, variables, self.config.alignment, prepared.nonzero_flops))
        offending = csc_violations(program)
        if offending:
            return None, offending, diagnostics

        calls = build_calls(program, self.factory, self.config.precision)
        artifact = KernelArtifact(self.family.name, kernel.name, program, calls,
                                  {t.name: t for t in kernel.tensors},
                                  {t.name: layouts[t.name] for t in kernel.tensors},
                                  kernel.scalars, self.profile, count_flops(program, calls), kernel=kernel)
        artifact.prefetch = prefetch
        artifact.diagnostics = diagnostics
        return artifact, set(), diagnostics

    def _guarded(self, prepared: _Prepared, layouts) -> Tuple[KernelResult, Set[str]]:
        start = time.time()
        name = prepared.kernel.name
        try:
            artifact, offending, diagnostics = self.compile_kernel(prepared, layouts)
            result = KernelResult(name, artifact is not None, artifact, diagnostics, time.time() - start)
            if artifact is not None:
                logger.info(f"✅ {name}: {artifact.flops.nonzero} flopów niezerowych, "
                            f"{artifact.flops.hardware} sprzętowych")
            return result, offending
        except KontraktorError as e:
            logger.error(f"❌ {name}: {e}")
            return KernelResult(name, False, None, [diagnostic_from_error(e, name)], time.time() - start), set()
        except Exception as e:
            logger.error(f"❌ Błąd wewnętrzny w kernelu {name}: {e}")
            logger.debug(traceback.format_exc())
            diagnostic = Diagnostic('error', 'internal', str(e), name)
            return KernelResult(name, False, None, [diagnostic], time.time() - start), set()

    def _compile_all(self, prepared: List[_Prepared], layouts) -> List[Tuple[KernelResult, Set[str]]]:
        if self.config.workers <= 1 or len(prepared) <= 1:
            return [self._guarded(p, layouts) for p in prepared]
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            futures = [pool.submit(self._guarded, p, layouts) for p in prepared]
            return [f.result() for f in futures]

    # ----- całość -----

    def run(self) -> PipelineResult:
        start = time.time()
        family = self.family
        logger.info(f"Kompilacja rodziny {family.name}: {len(family.kernels)} kerneli, "
                    f"precyzja {self.config.precision}, wyrównanie {self.config.alignment}")

        results: List[Optional[KernelResult]] = [None] * len(family.kernels)
        prepared: List[_Prepared] = []
        positions: List[int] = []
        validations = validate_family(family, self.config.limits)
        for position, (kernel, validation) in enumerate(zip(family.kernels, validations)):
            if not validation.is_valid:
                results[position] = KernelResult(kernel.name, False, None, validation.diagnostics)
                continue
            try:
                prepared.append(prepare_kernel(kernel, self.config.use_eqspp))
                positions.append(position)
                self.diagnostics.extend(validation.diagnostics)
            except KontraktorError as e:
                results[position] = KernelResult(kernel.name, False, None,
                                                 validation.diagnostics + [diagnostic_from_error(e, kernel.name)])

        demoted: Set[str] = set()
        while True:
            layouts = self.family_layouts(prepared, demoted)
            outcomes = self._compile_all(prepared, layouts)
            offending = set().union(*(o for _, o in outcomes)) if outcomes else set()
            if not offending:
                break
            self._demote(offending - demoted)
            demoted |= offending

        for position, (result, _) in zip(positions, outcomes):
            results[position] = result
        outcome = PipelineResult(family.name, self.config.precision, self.config.alignment, results,
                                 layouts, self.diagnostics)
        outcome.files = self.emit(outcome)
        outcome.processing_time = time.time() - start
        logger.info(f"Zakończono rodzinę {family.name} w {outcome.processing_time:.2f}s")
        return outcome

    def emit(self, outcome: PipelineResult) -> List[Path]:
        out_dir = self.config.output_dir
        if out_dir is None:
            return []
        out_dir = Path(out_dir)
        files: List[Path] = []
        artifacts = outcome.artifacts
        if self.config.emit == 'c99' and artifacts:
            from c_emitter import CEmitter
            from kernel_checks import emit_unit_test
            from parsers import export_family
            from utils import FileUtils

            files += CEmitter(self.family.name, self.profile).write(artifacts, out_dir)
            compiled = KernelFamily(self.family.name, [a.kernel for a in artifacts])
            kernel_file = export_family(compiled, out_dir, self.config.precision, self.config.alignment)
            test = emit_unit_test(self.family.name, kernel_file.name, [a.name for a in artifacts],
                                  self.config.precision, self.config.alignment)
            files.append(FileUtils.write_text(out_dir / f"{self.family.name}_tests.py", test))
        if self.config.json_report or self.config.excel_report:
            from report_generator import write_reports
            files += write_reports(outcome, out_dir, json_report=self.config.json_report,
                                   excel_report=self.config.excel_report)
        return files


def run_pipeline(family: KernelFamily, config: Optional[PipelineConfig] = None) -> PipelineResult:
    """Pełna kompilacja rodziny; błędy kerneli trafiają do diagnostyki"""
    return FamilyCompiler(family, config).run()


# ===================== Wyrocznie =====================

def verify_family(family: KernelFamily, config: Optional[PipelineConfig] = None) -> List[Dict]:
    """
    Porównuje plany Einsumów z pełnym przeszukaniem, a koszt permutacji
    z przeszukaniem wszystkich konfiguracji kolejności
    """
    compiler = FamilyCompiler(family, config)
    limits = compiler.config.limits
    prepared = [prepare_kernel(k, compiler.config.use_eqspp) for k in family.kernels]
    layouts = compiler.family_layouts(prepared, set())
    leaf_view = lambda node: OperandView(node.indices, layouts[node.tensor.name])
    rows = []
    for item in prepared:
        for number, statement in enumerate(item.statements):
            for node in statement.walk():
                schedule = getattr(node, 'schedule', None)
                if schedule is None or len(schedule.operands) < 2:
                    continue
                operands = schedule.planner.operands
                row = {'kernel': item.kernel.name, 'statement': number, 'check': 'schedule',
                       'found': schedule.cost}
                try:
                    row['oracle'] = exhaustive_oracle(operands, node.indices, limits)
                except KontraktorError as e:
                    row['oracle'] = None
                    row['note'] = str(e)
                rows.append(row)
            contracted = find_contractions(copy.deepcopy(statement))
            optimizer = PermutationOptimizer(leaf_view, compiler.config.alignment, limits.max_rank)
            row = {'kernel': item.kernel.name, 'statement': number, 'check': 'permutations',
                   'found': str(optimizer.optimize(contracted).cost)}
            try:
                row['oracle'] = str(configuration_oracle(contracted, optimizer, limits.configuration_oracle_max))
            except KontraktorError as e:
                row['oracle'] = None
                row['note'] = str(e)
            rows.append(row)
    return rows

