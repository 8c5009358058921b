"""
KONTRAKTOR v1.0 - Kernel AST
============================
Węzły drzewa wyrażeń, budowanie wyrażeń operatorami Pythona,
dedukcja indeksów i normalizacja przypisań
"""

import copy
import logging
from collections import Counter
from typing import Dict, Iterator, List, Optional, Sequence, Union

from errors import FreeIndexNotInTarget, IndexMismatch, SizeMismatch
from tensor_core import Coefficient, Scalar, Tensor, check_index_string
from utils import IndexUtils

logger = logging.getLogger(__name__)

Number = Union[int, float]


class Node:
    """Węzeł drzewa wyrażenia"""

    kind = 'node'

    def __init__(self, children: Optional[Sequence['Node']] = None):
        self.children: List[Node] = list(children or [])
        self.indices: Optional[str] = None
        self.spp = None
        self.eqspp = None
        self.location = None

    # ----- przeglądanie -----

    def walk(self) -> Iterator['Node']:
        """Pre-order"""
        yield self
        for child in self.children:
            yield from child.walk()

    def post_order(self) -> Iterator['Node']:
        for child in self.children:
            yield from child.post_order()
        yield self

    @property
    def letters(self) -> frozenset:
        return frozenset(self.indices or '')

    @property
    def is_leaf(self) -> bool:
        return self.kind == 'indexed'

    # ----- operatory budowniczego -----

    def __mul__(self, other):
        return combine(self, _as_operand(other), Einsum)

    def __rmul__(self, other):
        return combine(_as_operand(other), self, Einsum)

    def __add__(self, other):
        return combine(self, _as_operand(other), Add)

    def __radd__(self, other):
        return combine(_as_operand(other), self, Add)

    def label(self) -> str:
        return self.kind

    def __repr__(self) -> str:
        inner = ', '.join(repr(c) for c in self.children)
        return f"{type(self).__name__}[{self.indices}]({inner})"


class IndexedTensor(Node):
    kind = 'indexed'

    def __init__(self, tensor: Tensor, indices: str):
        super().__init__()
        check_index_string(indices, tensor.rank, tensor.name)
        self.tensor = tensor
        self.indices = indices

    def __le__(self, other) -> 'Assign':
        return Assign(self, _as_operand(other))

    def __repr__(self) -> str:
        return f"{self.tensor.name}[{self.indices}]"


class Einsum(Node):
    kind = 'einsum'


class Add(Node):
    kind = 'add'


class ScalarMultiplication(Node):
    kind = 'scalar'

    def __init__(self, coefficient: Coefficient, child: Node):
        super().__init__([child])
        self.coefficient = coefficient

    def __repr__(self) -> str:
        return f"Scalar[{self.coefficient}]({self.children[0]!r})"


class Assign(Node):
    kind = 'assign'

    def __init__(self, target: IndexedTensor, expression: Node, accumulate: bool = False):
        if not isinstance(target, IndexedTensor):
            raise IndexMismatch("Celem przypisania musi być tensor z indeksami")
        if isinstance(expression, Coefficient):
            raise IndexMismatch("Nie można przypisać samego skalara do tensora")
        super().__init__([target, expression])
        self.accumulate = accumulate
        self.indices = target.indices

    @property
    def target(self) -> IndexedTensor:
        return self.children[0]

    @property
    def expression(self) -> Node:
        return self.children[1]


class Permute(Node):
    """Jawna permutacja liścia do kolejności rodzica"""
    kind = 'permute'

    def __init__(self, child: Node, indices: str):
        super().__init__([child])
        self.indices = indices


class Product(Node):
    kind = 'product'


class IndexSum(Node):
    kind = 'indexsum'

    def __init__(self, child: Node, letter: str):
        super().__init__([child])
        self.letter = letter


class Contraction(Node):
    """Iloczyn dwóch operandów z sumowaniem po wspólnych literach"""
    kind = 'contraction'

    def __init__(self, left: Node, right: Node, contracted: str):
        super().__init__([left, right])
        self.contracted = contracted


class LoG(Node):
    """Kontrakcja odwzorowana na pętle wokół GEMM"""
    kind = 'log'

    def __init__(self, left: Node, right: Node, descriptor):
        super().__init__([left, right])
        self.descriptor = descriptor
        self.prefetch = None


FIXED_ORDER_KINDS = ('indexed', 'permute', 'add')


def is_fixed_order(node: Node) -> bool:
    """Czy kolejność indeksów węzła jest ustalona przed optymalizacją permutacji"""
    if node.kind in FIXED_ORDER_KINDS:
        return True
    if node.kind == 'scalar':
        return is_fixed_order(node.children[0])
    return False


# ===================== Składanie wyrażeń =====================

def _as_operand(value):
    if isinstance(value, Node):
        return value
    if isinstance(value, Scalar):
        return value.coefficient()
    if isinstance(value, Coefficient):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Scalar(value=float(value)).coefficient()
    raise TypeError(f"Nieobsługiwany operand wyrażenia: {value!r}")


def _merge(op1: Node, op2: Node, node_type) -> Node:
    if isinstance(op1, node_type) and isinstance(op2, node_type):
        return node_type(op1.children + op2.children)
    if isinstance(op1, node_type):
        return node_type(op1.children + [op2])
    if isinstance(op2, node_type):
        return node_type([op1] + op2.children)
    return node_type([op1, op2])


def _split_scalar(operand):
    if isinstance(operand, Coefficient):
        return operand, None
    if isinstance(operand, ScalarMultiplication):
        return operand.coefficient, operand.children[0]
    return None, operand


def combine(op1, op2, node_type):
    """
    Łączy dwa operandy w węzeł `node_type` (Einsum albo Add), spłaszczając
    zagnieżdżenia tego samego typu. Przy mnożeniu skalary są wyciągane nad
    Einsum, więc ScalarMultiplication nigdy nie jest dzieckiem Einsuma.
    """
    if node_type is Add:
        if isinstance(op1, Coefficient) or isinstance(op2, Coefficient):
            raise IndexMismatch("Nie można dodać skalara do tensora")
        return _merge(op1, op2, Add)

    c1, body1 = _split_scalar(op1)
    c2, body2 = _split_scalar(op2)
    coefficients = [c for c in (c1, c2) if c is not None]
    coefficient = Coefficient()
    for c in coefficients:
        coefficient = coefficient * c
    if body1 is None and body2 is None:
        return coefficient
    if body1 is None or body2 is None:
        body = body2 if body1 is None else body1
    else:
        body = _merge(body1, body2, Einsum)
    if coefficient.is_one():
        return body
    return ScalarMultiplication(coefficient, body)


def assign(target: IndexedTensor, expression) -> Assign:
    return Assign(target, _as_operand(expression))


def accumulate(target: IndexedTensor, expression) -> Assign:
    """C += expr; rozwijane do C = C + expr podczas normalizacji"""
    return Assign(target, _as_operand(expression), accumulate=True)


# ===================== Dedukcja indeksów =====================

def _leaf_letters(node: Node) -> set:
    return {c for sub in node.walk() if sub.kind == 'indexed' for c in sub.indices}


def deduce_indices(node: Node, context: str, strict: bool = False) -> str:
    """
    Ustala node.indices od liści w górę. `context` to litery, które rodzic
    uznaje za swobodne; w Einsumie litera występująca raz jest swobodna,
    a litera z kontekstu zostaje zachowana nawet przy wielu wystąpieniach.
    """
    kind = node.kind
    if kind in ('indexed', 'permute'):
        if kind == 'permute':
            deduce_indices(node.children[0], node.indices)
        return node.indices

    if kind == 'scalar':
        child = node.children[0]
        node.indices = deduce_indices(child, context, strict)
        return node.indices

    if kind == 'add':
        for child in node.children:
            deduce_indices(child, context, strict)
        reference = set(node.children[0].indices)
        for child in node.children[1:]:
            if set(child.indices) != reference:
                raise IndexMismatch(
                    f"Składniki sumy mają różne indeksy: '{node.children[0].indices}' i '{child.indices}'",
                    node.location)
        node.indices = node.children[0].indices
        return node.indices

    if kind == 'einsum':
        fixed = [c for c in node.children if c.kind in ('indexed', 'permute')]
        for child in fixed:
            deduce_indices(child, context)
        known = set(context)
        for child in fixed:
            known |= set(child.indices)
        for child in node.children:
            if child in fixed:
                continue
            siblings = set()
            for other in node.children:
                if other is not child:
                    siblings |= set(other.indices) if other.indices else _leaf_letters(other)
            deduce_indices(child, ''.join(sorted(set(context) | siblings, key=IndexUtils.letter_key)))
        counts = Counter(c for child in node.children for c in child.indices)
        present = set(counts)
        kept = [c for c in context if c in present]
        free = [c for c in counts if counts[c] == 1 and c not in context]
        if strict and free:
            raise FreeIndexNotInTarget(
                f"Indeksy {IndexUtils.sort_letters(free)} nie występują w celu przypisania",
                node.location)
        node.indices = ''.join(kept) + IndexUtils.sort_letters(free)
        return node.indices

    raise IndexMismatch(f"Nieobsługiwany węzeł podczas dedukcji indeksów: {kind}")


# ===================== Normalizacja przypisań =====================

def _check_sizes(statement: Assign) -> None:
    sizes: Dict[str, int] = {}
    for sub in statement.walk():
        if sub.kind != 'indexed':
            continue
        for letter, extent in zip(sub.indices, sub.tensor.shape):
            if sizes.setdefault(letter, extent) != extent:
                raise SizeMismatch(
                    f"Indeks '{letter}' ma rozmiary {sizes[letter]} i {extent} ({sub.tensor.name})",
                    statement.location)


def _set_free_order(node: Node, order: str) -> None:
    """Nadaje węzłowi o swobodnej kolejności podaną kolejność liter"""
    if set(order) != set(node.indices):
        raise IndexMismatch(f"Niezgodne indeksy '{node.indices}' i '{order}'")
    node.indices = order
    if node.kind == 'scalar':
        _set_free_order(node.children[0], order)


def _fix_child_order(parent: Node, position: int, order: str) -> None:
    child = parent.children[position]
    if child.indices == order:
        return
    if is_fixed_order(child):
        wrapped = Permute(child, order)
        wrapped.location = child.location
        parent.children[position] = wrapped
    else:
        _set_free_order(child, order)


def _insert_permutes(node: Node) -> None:
    for child in node.children:
        _insert_permutes(child)
    if node.kind == 'add':
        for position in range(len(node.children)):
            _fix_child_order(node, position, node.indices)


def _order_adds(node: Node, required: Optional[str]) -> None:
    """Kolejność sum: wymuszona przez cel albo pierwszego składnika"""
    if node.kind == 'add':
        if required is not None:
            node.indices = required
        for child in node.children:
            _order_adds(child, node.indices)
        return
    if node.kind == 'scalar':
        _order_adds(node.children[0], required)
        if node.children[0].kind == 'add':
            node.indices = node.children[0].indices
        return
    for child in node.children:
        _order_adds(child, None)


def shape_statement(statement: Assign) -> Assign:
    """
    Zwraca znormalizowaną kopię przypisania: rozwinięte +=, ustalone indeksy,
    wstawione permutacje i sprawdzone rozmiary.
    """
    shaped = copy.deepcopy(statement)
    target = shaped.target
    if shaped.accumulate:
        own = IndexedTensor(target.tensor, target.indices)
        expression = _merge(own, shaped.expression, Add)
        shaped = Assign(target, expression)
        shaped.location = statement.location
    _check_sizes(shaped)
    expression = shaped.expression
    deduce_indices(expression, target.indices, strict=True)
    if set(expression.indices) != set(target.indices):
        raise IndexMismatch(
            f"Wyrażenie ma indeksy '{expression.indices}', cel {target.tensor.name}[{target.indices}]",
            statement.location)
    _order_adds(expression, target.indices)
    _insert_permutes(expression)
    _fix_child_order(shaped, 1, target.indices)
    shaped.indices = target.indices
    return shaped


# ===================== Kernel i rodzina =====================

class Kernel:
    """Nazwana lista przypisań wykonywana w kolejności"""

    def __init__(self, name: str, statements: Optional[Sequence[Assign]] = None,
                 prefetch: Optional[Sequence[Tensor]] = None):
        self.name = name
        self.source: List[Assign] = []
        self.statements: List[Assign] = []
        self.prefetch: List[Tensor] = list(prefetch or [])
        for statement in statements or []:
            self.add(statement)

    def add(self, statement: Assign) -> Assign:
        self.source.append(statement)
        shaped = shape_statement(statement)
        self.statements.append(shaped)
        return shaped

    @property
    def tensors(self) -> List[Tensor]:
        """Tensory w kolejności pierwszego użycia"""
        seen: Dict[str, Tensor] = {}
        for statement in self.statements:
            for sub in statement.walk():
                if sub.kind == 'indexed':
                    seen.setdefault(sub.tensor.name, sub.tensor)
        return list(seen.values())

    @property
    def written(self) -> List[str]:
        names: List[str] = []
        for statement in self.statements:
            if statement.target.tensor.name not in names:
                names.append(statement.target.tensor.name)
        return names

    @property
    def scalars(self) -> List[str]:
        names: List[str] = []
        for statement in self.statements:
            for sub in statement.walk():
                if sub.kind == 'scalar':
                    for symbol in sub.coefficient.symbols:
                        if symbol not in names:
                            names.append(symbol)
        return names

    def __repr__(self) -> str:
        return f"Kernel({self.name}, {len(self.statements)} przypisań)"


class KernelFamily:
    """Zbiór kerneli dzielących tensory"""

    def __init__(self, name: str, kernels: Optional[Sequence[Kernel]] = None,
                 precision: Optional[str] = None, alignment: Optional[int] = None):
        self.name = name
        self.kernels: List[Kernel] = list(kernels or [])
        self.precision = precision
        self.alignment = alignment

    def add(self, kernel: Kernel) -> Kernel:
        self.kernels.append(kernel)
        return kernel

    @property
    def tensors(self) -> Dict[str, Tensor]:
        table: Dict[str, Tensor] = {}
        for kernel in self.kernels:
            for tensor in kernel.tensors:
                known = table.setdefault(tensor.name, tensor)
                if known is not tensor:
                    raise SizeMismatch(f"Dwa różne tensory o nazwie {tensor.name} w rodzinie {self.name}")
        return table

    def kernel(self, name: str) -> Kernel:
        for kernel in self.kernels:
            if kernel.name == name:
                return kernel
        raise KeyError(name)

    def __repr__(self) -> str:
        return f"KernelFamily({self.name}, {len(self.kernels)} kerneli)"
