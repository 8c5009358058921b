"""
KONTRAKTOR v1.0 - Kernel File Parsers
=====================================
Gramatyka plików z kernelami (pyparsing), budowa rodziny kerneli,
pliki wzorców rzadkości i wartości stałych, wydruk kanoniczny
"""

import logging
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pyparsing as pp

from ast_nodes import Add, Einsum, Kernel, KernelFamily, accumulate, assign, combine
from config import LAYOUT_POLICIES, SUPPORTED_PRECISIONS
from errors import KernelSyntaxError, KontraktorError, SppFormatError
from sparsity import SparsityPattern
from tensor_core import Coefficient, Scalar, Tensor
from utils import FileUtils, NumericUtils
from validators import diagnostic_from_error

logger = logging.getLogger(__name__)

Location = Tuple[int, int]


# ===================== Drzewo składni pliku =====================

@dataclass
class Access:
    name: str
    letters: str
    location: Optional[Location] = field(default=None, compare=False)


@dataclass
class Number:
    value: float


@dataclass
class Name:
    name: str
    location: Optional[Location] = field(default=None, compare=False)


@dataclass
class Term:
    """Iloczyn czynników"""
    factors: List


@dataclass
class Sum:
    """Suma składników"""
    terms: List


@dataclass
class StatementDecl:
    target: Access
    accumulate: bool
    expression: object
    location: Optional[Location] = field(default=None, compare=False)


@dataclass
class KernelDecl:
    name: str
    statements: List[StatementDecl]
    prefetch: List[str] = field(default_factory=list)
    location: Optional[Location] = field(default=None, compare=False)


@dataclass
class TensorDecl:
    name: str
    shape: Tuple[int, ...]
    spp: Optional[str] = None
    values: Optional[str] = None
    layout: Optional[str] = None
    location: Optional[Location] = field(default=None, compare=False)


@dataclass
class ScalarDecl:
    name: str
    value: Optional[float] = None
    location: Optional[Location] = field(default=None, compare=False)


@dataclass
class KernelFile:
    """Deklaracje i bloki kerneli jednego pliku"""
    family: Optional[str] = None
    precision: Optional[str] = None
    alignment: Optional[int] = None
    tensors: List[TensorDecl] = field(default_factory=list)
    scalars: List[ScalarDecl] = field(default_factory=list)
    kernels: List[KernelDecl] = field(default_factory=list)


@dataclass
class Setting:
    key: str
    value: object


# ===================== Gramatyka =====================

def _location(text: str, loc: int) -> Location:
    return pp.lineno(loc, text), pp.col(loc, text)


def _single(cls):
    """Składnik z jednym elementem zastępowany samym elementem"""
    def action(tokens):
        items = list(tokens)
        return items[0] if len(items) == 1 else cls(items)
    return action


def _build_grammar() -> pp.ParserElement:
    LBRACE, RBRACE, LPAR, RPAR, LBRACK, RBRACK = map(pp.Suppress, '{}()[]')
    name = pp.Word(pp.alphas + '_', pp.alphanums + '_')
    integer = pp.Word(pp.nums).set_parse_action(lambda t: int(t[0]))
    number = pp.Regex(r'[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?')
    number.set_parse_action(lambda t: Number(float(t[0])))
    string = pp.QuotedString('"') | pp.QuotedString("'")
    letters = pp.QuotedString("'") | pp.QuotedString('"') | pp.Word(pp.alphas)

    access = name + LBRACK + letters + RBRACK
    access.set_parse_action(lambda s, loc, t: Access(t[0], t[1], _location(s, loc)))
    reference = name.copy().set_parse_action(lambda s, loc, t: Name(t[0], _location(s, loc)))

    expression = pp.Forward()
    factor = access | number | reference | (LPAR + expression + RPAR)
    term = factor + pp.ZeroOrMore(pp.Suppress('*') + factor)
    term.set_parse_action(_single(Term))
    expression <<= term + pp.ZeroOrMore(pp.Suppress('+') + term)
    expression.set_parse_action(_single(Sum))

    operator = pp.Literal('<=') | pp.Literal('+=')
    statement = access + operator + expression + pp.Optional(pp.Suppress(';'))
    statement.set_parse_action(
        lambda s, loc, t: StatementDecl(t[0], t[1] == '+=', t[2], _location(s, loc)))

    prefetch = pp.Keyword('prefetch').suppress() + pp.OneOrMore(name)
    kernel = pp.Keyword('kernel').suppress() - (
        name('name') + LBRACE + pp.Group(pp.OneOrMore(statement))('statements')
        + pp.Optional(pp.Group(prefetch)('prefetch')) + RBRACE)
    kernel.set_parse_action(lambda s, loc, t: KernelDecl(
        t.name, list(t.statements), list(t.prefetch) if t.prefetch else [], _location(s, loc)))

    policy = pp.one_of(' '.join(p for p in LAYOUT_POLICIES if p != 'auto'))
    tensor = pp.Keyword('tensor').suppress() - (
        name('name') + LPAR + pp.Group(pp.DelimitedList(integer))('shape') + RPAR
        + pp.Optional(pp.Keyword('spp').suppress() + string('spp'))
        + pp.Optional(pp.Keyword('values').suppress() + string('values'))
        + pp.Optional(pp.Keyword('layout').suppress() + policy('layout')))
    tensor.set_parse_action(lambda s, loc, t: TensorDecl(
        t.name, tuple(t.shape), t.spp or None, t.get('values') or None, t.layout or None, _location(s, loc)))

    scalar = (pp.Keyword('scalar').suppress() + name('name')
              + pp.Optional(pp.Suppress('=') + number('value')))
    scalar.set_parse_action(lambda s, loc, t: ScalarDecl(
        t.name, t.value.value if t.value else None, _location(s, loc)))

    precision = pp.Keyword('precision').suppress() + pp.one_of(' '.join(SUPPORTED_PRECISIONS))
    precision.set_parse_action(lambda t: Setting('precision', t[0]))
    align = pp.Keyword('align').suppress() + integer
    align.set_parse_action(lambda t: Setting('align', t[0]))
    family = pp.Keyword('family').suppress() + name
    family.set_parse_action(lambda t: Setting('family', t[0]))

    grammar = pp.ZeroOrMore(tensor | scalar | precision | align | family | kernel)
    grammar.ignore(pp.python_style_comment)
    return grammar


GRAMMAR = _build_grammar()


def parse(text: str) -> KernelFile:
    """Tekst pliku -> KernelFile (błędy składni z położeniem)"""
    try:
        items = GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseBaseException as e:
        raise KernelSyntaxError(f"Błąd składni: {e.msg}", (e.lineno, e.col)) from e
    result = KernelFile()
    for item in items:
        if isinstance(item, TensorDecl):
            result.tensors.append(item)
        elif isinstance(item, ScalarDecl):
            result.scalars.append(item)
        elif isinstance(item, KernelDecl):
            result.kernels.append(item)
        elif item.key == 'precision':
            result.precision = item.value
        elif item.key == 'align':
            result.alignment = item.value
        else:
            result.family = item.value
    logger.debug(f"Sparsowano {len(result.kernels)} kerneli, {len(result.tensors)} tensorów")
    return result


# ===================== Budowa rodziny =====================

class FamilyBuilder:
    """Zamienia KernelFile na obiekty Tensor/Kernel"""

    def __init__(self, kernel_file: KernelFile, base_dir: Optional[Path] = None):
        self.file = kernel_file
        self.base_dir = Path(base_dir) if base_dir else Path('.')
        self.tensors: Dict[str, Tensor] = {}
        self.scalars: Dict[str, Scalar] = {}

    def _declare(self) -> None:
        for decl in self.file.tensors:
            if decl.name in self.tensors:
                raise KernelSyntaxError(f"Tensor {decl.name} zadeklarowany dwukrotnie", decl.location)
            try:
                spp = load_spp(self.base_dir / decl.spp) if decl.spp else None
                values = load_values(self.base_dir / decl.values, decl.shape) if decl.values else None
                self.tensors[decl.name] = Tensor(decl.name, decl.shape, spp, values, decl.layout)
            except KontraktorError as e:
                e.location = e.location or decl.location
                raise
            except ValueError as e:
                raise KernelSyntaxError(str(e), decl.location) from e
        for decl in self.file.scalars:
            if decl.name in self.tensors or decl.name in self.scalars:
                raise KernelSyntaxError(f"Nazwa {decl.name} zadeklarowana dwukrotnie", decl.location)
            self.scalars[decl.name] = Scalar(value=decl.value) if decl.value is not None else Scalar(decl.name)

    def _operand(self, item):
        if isinstance(item, Access):
            if item.name not in self.tensors:
                raise KernelSyntaxError(f"Nieznany tensor {item.name}", item.location)
            try:
                return self.tensors[item.name][item.letters]
            except KontraktorError as e:
                e.location = e.location or item.location
                raise
        if isinstance(item, Number):
            return Coefficient(item.value)
        if isinstance(item, Name):
            if item.name not in self.scalars:
                raise KernelSyntaxError(f"Nieznany skalar {item.name}", item.location)
            return self.scalars[item.name].coefficient()
        if isinstance(item, Term):
            return reduce(lambda a, b: combine(a, b, Einsum), (self._operand(f) for f in item.factors))
        return reduce(lambda a, b: combine(a, b, Add), (self._operand(t) for t in item.terms))

    def kernel(self, decl: KernelDecl) -> Kernel:
        kernel = Kernel(decl.name)
        for statement in decl.statements:
            try:
                target = self._operand(statement.target)
                expression = self._operand(statement.expression)
                builder = accumulate if statement.accumulate else assign
                kernel.add(builder(target, expression))
            except KontraktorError as e:
                e.location = e.location or statement.location
                raise
            except TypeError as e:
                raise KernelSyntaxError(str(e), statement.location) from e
        for name in decl.prefetch:
            if name not in self.tensors:
                raise KernelSyntaxError(f"Prefetch nieznanego tensora {name}", decl.location)
            kernel.prefetch.append(self.tensors[name])
        return kernel

    def build(self, name: str = 'family', diagnostics: Optional[list] = None) -> KernelFamily:
        """Rodzina kerneli; z listą `diagnostics` błędny kernel jest pomijany"""
        self._declare()
        family = KernelFamily(self.file.family or name, precision=self.file.precision,
                              alignment=self.file.alignment)
        for decl in self.file.kernels:
            try:
                family.add(self.kernel(decl))
            except KontraktorError as e:
                if diagnostics is None:
                    raise
                diagnostics.append(diagnostic_from_error(e, decl.name))
                logger.error(f"❌ Kernel {decl.name}: {e}")
        return family


def parse_file(path: Union[str, Path], diagnostics: Optional[list] = None) -> KernelFamily:
    """Plik z kernelami -> KernelFamily (ścieżki spp/values względem pliku)"""
    path = Path(path)
    kernel_file = parse(path.read_text(encoding='utf-8'))
    return FamilyBuilder(kernel_file, path.parent).build(path.stem, diagnostics)


# ===================== Pliki wzorców i wartości =====================

def _read_table(path: Path, with_value: bool):
    try:
        lines = [line.split() for line in Path(path).read_text(encoding='utf-8').splitlines()]
    except OSError as e:
        raise SppFormatError(f"Nie można odczytać {path}: {e}") from e
    lines = [(number, parts) for number, parts in enumerate(lines, 1) if parts]
    if not lines:
        raise SppFormatError(f"Pusty plik {path}")
    try:
        extents = tuple(int(v) for v in lines[0][1])
    except ValueError as e:
        raise SppFormatError(f"Błędne rozmiary w {path}", (lines[0][0], 1)) from e
    if not extents or any(n < 1 for n in extents):
        raise SppFormatError(f"Błędne rozmiary {extents} w {path}", (lines[0][0], 1))
    entries = []
    width = len(extents) + int(with_value)
    for number, parts in lines[1:]:
        if len(parts) != width:
            raise SppFormatError(f"Linia ma {len(parts)} pól, oczekiwano {width}", (number, 1))
        try:
            point = tuple(int(v) for v in parts[:len(extents)])
            value = float(parts[-1]) if with_value else None
        except ValueError as e:
            raise SppFormatError(f"Błędna linia w {path}", (number, 1)) from e
        if any(not 0 <= i < n for i, n in zip(point, extents)):
            raise SppFormatError(f"Współrzędne {point} poza rozmiarami {extents}", (number, 1))
        entries.append((point, value))
    return extents, entries


def load_spp(path: Union[str, Path]) -> SparsityPattern:
    """Pierwsza linia: rozmiary; kolejne: współrzędne niezerowych (od zera)"""
    extents, entries = _read_table(Path(path), with_value=False)
    return SparsityPattern.from_coords(extents, [p for p, _ in entries])


def save_spp(pattern: SparsityPattern, path: Union[str, Path]) -> Path:
    lines = [' '.join(str(n) for n in pattern.extents)]
    lines += [' '.join(str(i) for i in point) for point in pattern.coords()]
    return FileUtils.write_text(path, '\n'.join(lines) + '\n')


def load_values(path: Union[str, Path], shape: Optional[Sequence[int]] = None) -> np.ndarray:
    """Jak plik wzorca, z wartością na końcu każdej linii"""
    extents, entries = _read_table(Path(path), with_value=True)
    if shape is not None and tuple(shape) != extents:
        raise SppFormatError(f"Plik {path} ma rozmiary {extents}, oczekiwano {tuple(shape)}")
    values = np.zeros(extents)
    for point, value in entries:
        values[point] = value
    return values


def save_values(values: np.ndarray, path: Union[str, Path]) -> Path:
    values = np.asarray(values)
    lines = [' '.join(str(n) for n in values.shape)]
    for point in SparsityPattern.from_values(values).coords():
        lines.append(' '.join(str(i) for i in point) + ' ' + repr(float(values[point])))
    return FileUtils.write_text(path, '\n'.join(lines) + '\n')


# ===================== Wydruk =====================

def format_expression(item, nested: bool = False) -> str:
    if isinstance(item, Access):
        return f"{item.name}['{item.letters}']"
    if isinstance(item, Number):
        return NumericUtils.format_literal(item.value)
    if isinstance(item, Name):
        return item.name
    if isinstance(item, Term):
        return '*'.join(format_expression(f, nested=True) for f in item.factors)
    text = ' + '.join(format_expression(t) for t in item.terms)
    return f"({text})" if nested else text


def format_kernel_file(kernel_file: KernelFile) -> str:
    """Kanoniczny tekst pliku; parse(format_kernel_file(f)) == f"""
    lines = []
    if kernel_file.family:
        lines.append(f"family {kernel_file.family}")
    if kernel_file.precision:
        lines.append(f"precision {kernel_file.precision}")
    if kernel_file.alignment is not None:
        lines.append(f"align {kernel_file.alignment}")
    for t in kernel_file.tensors:
        line = f"tensor {t.name}({', '.join(str(n) for n in t.shape)})"
        if t.spp:
            line += f' spp "{t.spp}"'
        if t.values:
            line += f' values "{t.values}"'
        if t.layout:
            line += f" layout {t.layout}"
        lines.append(line)
    for s in kernel_file.scalars:
        lines.append(f"scalar {s.name}" + (f" = {NumericUtils.format_literal(s.value)}"
                                           if s.value is not None else ''))
    for k in kernel_file.kernels:
        lines.append('')
        lines.append(f"kernel {k.name} {{")
        for statement in k.statements:
            operator = '+=' if statement.accumulate else '<='
            lines.append(f"  {format_expression(statement.target)} {operator} "
                         f"{format_expression(statement.expression)}")
        if k.prefetch:
            lines.append(f"  prefetch {' '.join(k.prefetch)}")
        lines.append('}')
    return '\n'.join(lines) + '\n'


def _node_to_syntax(node):
    kind = node.kind
    if kind == 'indexed':
        return Access(node.tensor.name, node.indices)
    if kind == 'einsum':
        factors = []
        for child in node.children:
            item = _node_to_syntax(child)
            factors.extend(item.factors if isinstance(item, Term) else [item])
        return Term(factors)
    if kind == 'add':
        terms = []
        for child in node.children:
            item = _node_to_syntax(child)
            terms.extend(item.terms if isinstance(item, Sum) else [item])
        return Sum(terms)
    if kind == 'scalar':
        coefficient = node.coefficient
        factors = [] if coefficient.value == 1.0 else [Number(coefficient.value)]
        factors += [Name(s) for s in coefficient.symbols]
        body = _node_to_syntax(node.children[0])
        factors.extend(body.factors if isinstance(body, Term) else [body])
        return Term(factors) if len(factors) > 1 else factors[0]
    raise KernelSyntaxError(f"Węzeł {kind} nie ma zapisu w pliku kerneli")


def export_family(family: KernelFamily, directory: Union[str, Path],
                  precision: Optional[str] = None, alignment: Optional[int] = None) -> Path:
    """Zapisuje rodzinę jako plik kerneli z plikami wzorców i wartości obok"""
    directory = Path(directory)
    kernel_file = KernelFile(family.name, precision or family.precision,
                             alignment if alignment is not None else family.alignment)
    symbols: List[str] = []
    for name, tensor in family.tensors.items():
        decl = TensorDecl(name, tensor.shape, layout=tensor.policy)
        if tensor.values is not None:
            decl.values = f"{family.name}_{name}.values"
            save_values(tensor.values, directory / decl.values)
        if tensor.spp != SparsityPattern.dense(tensor.shape) and \
                (tensor.values is None or tensor.spp != SparsityPattern.from_values(tensor.values)):
            decl.spp = f"{family.name}_{name}.spp"
            save_spp(tensor.spp, directory / decl.spp)
        kernel_file.tensors.append(decl)
    for kernel in family.kernels:
        for symbol in kernel.scalars:
            if symbol not in symbols:
                symbols.append(symbol)
        statements = [StatementDecl(Access(s.target.tensor.name, s.target.indices), s.accumulate,
                                    _node_to_syntax(s.expression)) for s in kernel.source]
        kernel_file.kernels.append(KernelDecl(kernel.name, statements, [t.name for t in kernel.prefetch]))
    kernel_file.scalars = [ScalarDecl(s) for s in symbols]
    path = FileUtils.write_text(directory / f"{family.name}.kernels", format_kernel_file(kernel_file))
    logger.info(f"💾 Zapisano plik kerneli {path}")
    return path
