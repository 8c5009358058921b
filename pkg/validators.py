"""
KONTRAKTOR v1.0 - Kernel Validators
===================================
Walidacja kerneli przed kompilacją i diagnostyka
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

from ast_nodes import Kernel, KernelFamily
from config import LimitSettings
from errors import KontraktorError
from tensor_core import Tensor

logger = logging.getLogger(__name__)


@dataclass
class Diagnostic:
    """Pojedynczy komunikat diagnostyczny"""
    severity: str  # error, warning, info
    code: str
    message: str
    kernel: Optional[str] = None
    location: Optional[Tuple[int, int]] = None

    def __str__(self) -> str:
        where = f" [{self.kernel}]" if self.kernel else ''
        if self.location:
            where += f" (linia {self.location[0]}, kolumna {self.location[1]})"
        return f"{self.severity.upper()} {self.code}{where}: {self.message}"

    def to_dict(self) -> Dict:
        return {
            'severity': self.severity,
            'code': self.code,
            'message': self.message,
            'kernel': self.kernel,
            'location': list(self.location) if self.location else None,
        }


def diagnostic_from_error(error: KontraktorError, kernel: Optional[str] = None) -> Diagnostic:
    return Diagnostic('error', error.code, error.message, kernel, error.location)


@dataclass
class ValidationResult:
    """Wynik walidacji"""
    is_valid: bool
    errors: List[Diagnostic] = field(default_factory=list)
    warnings: List[Diagnostic] = field(default_factory=list)
    suggestions: List[Diagnostic] = field(default_factory=list)
    kernel: Optional[str] = None

    @property
    def diagnostics(self) -> List[Diagnostic]:
        return self.errors + self.warnings + self.suggestions

    def reject(self, diagnostic: Diagnostic) -> None:
        self.errors.append(diagnostic)
        self.is_valid = False


class KernelValidator:
    """Kompleksowy walidator kerneli"""

    def __init__(self, limits: Optional[LimitSettings] = None):
        self.limits = limits or LimitSettings()
        self.errors: List[Diagnostic] = []
        self.warnings: List[Diagnostic] = []
        self.suggestions: List[Diagnostic] = []
        self._kernel = None

    def validate(self, kernel: Kernel) -> ValidationResult:
        """Przeprowadza pełną walidację kernela"""
        self.errors.clear()
        self.warnings.clear()
        self.suggestions.clear()
        self._kernel = kernel.name

        if not kernel.statements:
            self._warn('empty_kernel', "Kernel nie zawiera przypisań")

        self._validate_identity(kernel)
        self._validate_limits(kernel)
        self._validate_targets(kernel)
        self._validate_names(kernel)
        self._validate_prefetch(kernel)

        return ValidationResult(
            is_valid=len(self.errors) == 0,
            errors=self.errors.copy(),
            warnings=self.warnings.copy(),
            suggestions=self.suggestions.copy(),
            kernel=kernel.name,
        )

    def _error(self, code: str, message: str, location=None):
        self.errors.append(Diagnostic('error', code, message, self._kernel, location))

    def _warn(self, code: str, message: str, location=None):
        self.warnings.append(Diagnostic('warning', code, message, self._kernel, location))

    def _validate_identity(self, kernel: Kernel):
        """Jedna nazwa to jeden tensor"""
        seen: Dict[str, Tensor] = {}
        for statement in kernel.statements:
            for node in statement.walk():
                if node.kind != 'indexed':
                    continue
                known = seen.setdefault(node.tensor.name, node.tensor)
                if known is not node.tensor:
                    self._error('size_mismatch', f"Dwa różne tensory o nazwie {known.name}: "
                                                 f"{known.shape} i {node.tensor.shape}", statement.location)
                    return

    def _validate_limits(self, kernel: Kernel):
        """Limity rzędu, rozmiaru i liczby operandów"""
        for tensor in kernel.tensors:
            if tensor.rank > self.limits.max_rank:
                self._error('size_limit', f"Tensor {tensor.name} ma rząd {tensor.rank} "
                                          f"(limit {self.limits.max_rank})")
            if tensor.size > self.limits.max_elements:
                self._error('size_limit', f"Tensor {tensor.name} ma {tensor.size} elementów "
                                          f"(limit {self.limits.max_elements})")
        for statement in kernel.statements:
            for node in statement.walk():
                if node.kind == 'einsum' and len(node.children) > self.limits.max_operands:
                    self._error('size_limit', f"Einsum ma {len(node.children)} operandów "
                                              f"(limit {self.limits.max_operands})", statement.location)

    def _validate_targets(self, kernel: Kernel):
        """Nie wolno pisać do tensorów stałych"""
        for statement in kernel.statements:
            target = statement.target.tensor
            if target.is_constant:
                self._error('write_to_constant', f"Przypisanie do tensora stałego {target.name}",
                            statement.location)
            if target.policy == 'csc':
                self._warn('csc_output', f"Tensor wyjściowy {target.name} nie może mieć układu CSC",
                           statement.location)

    def _validate_names(self, kernel: Kernel):
        tensor_names = {t.name for t in kernel.tensors}
        for scalar in kernel.scalars:
            if scalar in tensor_names:
                self._error('name_clash', f"Skalar {scalar} ma tę samą nazwę co tensor")

    def _validate_prefetch(self, kernel: Kernel):
        names = {t.name for t in kernel.tensors}
        for tensor in kernel.prefetch:
            if tensor.name not in names:
                self._warn('prefetch_unused', f"Prefetch tensora {tensor.name}, którego kernel nie używa")


KernelSource = Union[Kernel, str, Callable[[], Kernel]]


def validate_kernel(source: KernelSource, limits: Optional[LimitSettings] = None) -> List[Diagnostic]:
    """
    Błędy deklaracji, kształtów i indeksów; pusta lista oznacza, że kernel
    przejdzie walidację potoku. `source` to gotowy Kernel, funkcja budująca
    kernel albo tekst pliku z kernelami. Ostrzeżenia zwraca KernelValidator.
    """
    if isinstance(source, Kernel):
        return KernelValidator(limits).validate(source).errors
    if isinstance(source, str):
        from parsers import FamilyBuilder, parse

        diagnostics: List[Diagnostic] = []
        try:
            family = FamilyBuilder(parse(source)).build(diagnostics=diagnostics)
        except KontraktorError as e:
            return [diagnostic_from_error(e)]
        for result in validate_family(family, limits):
            diagnostics.extend(result.errors)
        return diagnostics
    try:
        kernel = source()
    except KontraktorError as e:
        return [diagnostic_from_error(e)]
    return KernelValidator(limits).validate(kernel).errors


def validate_family(family: KernelFamily, limits: Optional[LimitSettings] = None) -> List[ValidationResult]:
    """Wyniki w kolejności family.kernels; powtórzona nazwa albo inny tensor pod znaną nazwą odrzuca kernel"""
    validator = KernelValidator(limits)
    results = []
    names = set()
    tensors: Dict[str, Tensor] = {}
    for kernel in family.kernels:
        result = validator.validate(kernel)
        if kernel.name in names:
            result.reject(Diagnostic('error', 'duplicate_kernel',
                                     f"Powtórzona nazwa kernela {kernel.name}", kernel.name))
        names.add(kernel.name)
        if result.is_valid:
            for tensor in kernel.tensors:
                known = tensors.get(tensor.name)
                if known is not None and known is not tensor:
                    result.reject(Diagnostic('error', 'size_mismatch',
                                             f"Tensor {tensor.name} {tensor.shape} różni się od tensora "
                                             f"rodziny o tej nazwie {known.shape}", kernel.name))
                    break
            else:
                for tensor in kernel.tensors:
                    tensors.setdefault(tensor.name, tensor)
        if not result.is_valid:
            logger.warning(f"⚠️ Kernel {kernel.name} odrzucony: {len(result.errors)} błędów")
        results.append(result)
    return results
