"""
KONTRAKTOR v1.0 - Control Flow
==============================
Liniowy program akcji (lhs op alpha*rhs), przepisywanie akcji,
żywotność zmiennych tymczasowych i współdzielenie buforów
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from ast_nodes import Node
from errors import PipelineError
from layout import ALIGNED, CSC, MemoryLayout, layout_for_pattern
from log_mapper import LoGDescriptor, OperandView, rebind
from tensor_core import ONE, Coefficient

logger = logging.getLogger(__name__)


# ===================== Zmienne i akcje =====================

@dataclass(frozen=True)
class Variable:
    """Tensor jądra albo zmienna tymczasowa"""
    name: str
    layout: MemoryLayout
    temporary: bool = False
    writable: bool = False

    @property
    def size(self) -> int:
        return self.layout.size


@dataclass(frozen=True)
class Ref:
    """Odwołanie do zmiennej z literami w kolejności pamięci"""
    var: Variable
    letters: str

    def view(self) -> OperandView:
        return OperandView(self.letters, self.var.layout)

    def __str__(self) -> str:
        return f"{self.var.name}[{self.letters}]"


@dataclass(frozen=True)
class CopyRhs:
    source: Ref

    def refs(self) -> Tuple[Ref, ...]:
        return (self.source,)

    def __str__(self) -> str:
        return str(self.source)


@dataclass(frozen=True)
class ProductRhs:
    left: Ref
    right: Ref

    def refs(self) -> Tuple[Ref, ...]:
        return (self.left, self.right)

    def __str__(self) -> str:
        return f"product({self.left}, {self.right})"


@dataclass(frozen=True)
class IndexSumRhs:
    source: Ref
    letter: str

    def refs(self) -> Tuple[Ref, ...]:
        return (self.source,)

    def __str__(self) -> str:
        return f"sum_{self.letter}({self.source})"


@dataclass(frozen=True)
class LoGRhs:
    left: Ref
    right: Ref
    descriptor: LoGDescriptor
    prefetch: Optional[str] = None

    def refs(self) -> Tuple[Ref, ...]:
        return (self.left, self.right)

    def __str__(self) -> str:
        return f"log({self.left}, {self.right})"


Rhs = Union[CopyRhs, ProductRhs, IndexSumRhs, LoGRhs]


def _replace_refs(rhs: Rhs, old: str, new: Variable) -> Rhs:
    swap = lambda ref: Ref(new, ref.letters) if ref.var.name == old else ref
    if isinstance(rhs, CopyRhs):
        return CopyRhs(swap(rhs.source))
    if isinstance(rhs, IndexSumRhs):
        return IndexSumRhs(swap(rhs.source), rhs.letter)
    return replace(rhs, left=swap(rhs.left), right=swap(rhs.right))


@dataclass(frozen=True)
class Action:
    """lhs = alpha*rhs albo lhs += alpha*rhs"""
    lhs: Ref
    rhs: Rhs
    add: bool = False
    alpha: Coefficient = ONE

    def reads(self) -> FrozenSet[str]:
        names = {ref.var.name for ref in self.rhs.refs()}
        if self.add:
            names.add(self.lhs.var.name)
        return frozenset(names)

    def writes(self) -> str:
        return self.lhs.var.name

    def touches(self, name: str) -> bool:
        return name == self.writes() or name in self.reads()

    def operands(self) -> FrozenSet[str]:
        return frozenset(ref.var.name for ref in self.rhs.refs())

    def is_identity(self) -> bool:
        return (isinstance(self.rhs, CopyRhs) and not self.add and self.alpha.is_one()
                and self.rhs.source.var.name == self.lhs.var.name
                and self.rhs.source.letters == self.lhs.letters)

    def substitute(self, old: str, new: Variable) -> 'Action':
        lhs = Ref(new, self.lhs.letters) if self.lhs.var.name == old else self.lhs
        return Action(lhs, _replace_refs(self.rhs, old, new), self.add, self.alpha)

    def __str__(self) -> str:
        op = '+=' if self.add else '='
        scale = '' if self.alpha.is_one() else f"{self.alpha} * "
        return f"{self.lhs} {op} {scale}{self.rhs}"


@dataclass(frozen=True)
class BufferPlan:
    """Przydział zmiennych tymczasowych do buforów"""
    assignment: Dict[str, int] = field(default_factory=dict)
    sizes: Tuple[int, ...] = ()

    def total_elements(self) -> int:
        return sum(self.sizes)

    def to_dict(self, element_bytes: int = 8) -> Dict:
        return {
            'count': len(self.sizes),
            'sizes': list(self.sizes),
            'bytes': self.total_elements() * element_bytes,
            'assignment': dict(self.assignment),
        }


@dataclass(frozen=True)
class CfgProgram:
    """Program jednego kernela"""
    actions: Tuple[Action, ...]
    nonzero_flops: int = 0
    buffers: Optional[BufferPlan] = None
    live: Optional[Tuple[FrozenSet[str], ...]] = None

    def with_actions(self, actions) -> "CfgProgram":
        """Nowe akcje unieważniają wynik analizy żywotności"""
        return replace(self, actions=tuple(actions), live=None)

    def variables(self) -> Dict[str, Variable]:
        table: Dict[str, Variable] = {}
        for action in self.actions:
            for ref in (action.lhs,) + action.rhs.refs():
                table.setdefault(ref.var.name, ref.var)
        return table

    def temporaries(self) -> List[Variable]:
        return [v for v in self.variables().values() if v.temporary]

    def dump(self) -> List[str]:
        return [str(action) for action in self.actions]


# ===================== Generowanie akcji =====================

class Lowering:
    """Zamienia drzewa przypisań na akcje; każdy węzeł wewnętrzny dostaje zmienną tymczasową"""

    def __init__(self, tensors: Dict[str, Variable], alignment: int = 1):
        self.tensors = tensors
        self.alignment = alignment
        self.actions: List[Action] = []
        self._counter = 0

    def temporary(self, node: Node) -> Ref:
        name = f"_tmp{self._counter}"
        self._counter += 1
        layout = layout_for_pattern(node.spp, ALIGNED, self.alignment, name)
        return Ref(Variable(name, layout, temporary=True, writable=True), node.indices)

    def statement(self, statement: Node) -> None:
        target = statement.children[0]
        lhs = Ref(self.tensors[target.tensor.name], target.indices)
        source = self.expression(statement.children[1])
        self.actions.append(Action(lhs, CopyRhs(source)))

    def expression(self, node: Node) -> Ref:
        kind = node.kind
        if kind == 'indexed':
            return Ref(self.tensors[node.tensor.name], node.indices)
        if kind == 'permute':
            return self.expression(node.children[0])
        if kind == 'scalar':
            source = self.expression(node.children[0])
            result = self.temporary(node)
            self.actions.append(Action(result, CopyRhs(source), alpha=node.coefficient))
            return result
        if kind == 'add':
            result = self.temporary(node)
            first = self.expression(node.children[0])
            self.actions.append(Action(result, CopyRhs(first)))
            for child in node.children[1:]:
                source = self.expression(child)
                self.actions.append(Action(result, CopyRhs(source), add=True))
            return result
        if kind == 'product':
            left, right = (self.expression(c) for c in node.children)
            result = self.temporary(node)
            self.actions.append(Action(result, ProductRhs(left, right)))
            return result
        if kind == 'indexsum':
            source = self.expression(node.children[0])
            result = self.temporary(node)
            self.actions.append(Action(result, IndexSumRhs(source, node.letter)))
            return result
        if kind == 'log':
            left, right = (self.expression(c) for c in node.children)
            result = self.temporary(node)
            prefetch = node.prefetch.name if node.prefetch is not None else None
            self.actions.append(Action(result, LoGRhs(left, right, node.descriptor, prefetch)))
            return result
        raise PipelineError(f"Węzeł {kind} nie powinien dotrwać do generowania akcji")


def lower(statements: Sequence[Node], tensors: Dict[str, Variable], alignment: int = 1,
          nonzero_flops: int = 0) -> CfgProgram:
    lowering = Lowering(tensors, alignment)
    for statement in statements:
        lowering.statement(statement)
    return CfgProgram(tuple(lowering.actions), nonzero_flops)


# ===================== Wykonalność =====================

def refresh(action: Action) -> Optional[Action]:
    """Akcja z odświeżonym odwzorowaniem albo None, gdy nie da się jej wykonać"""
    if action.lhs.var.layout.variant == CSC:
        return None
    if action.lhs.var.name in action.operands() and not action.is_identity():
        return None
    rhs = action.rhs
    if isinstance(rhs, LoGRhs):
        if rhs.left.var.layout.variant == CSC and rhs.descriptor.gemm_left == 0:
            return None
        descriptor = rebind(rhs.descriptor, action.lhs.view(), rhs.left.view(), rhs.right.view())
        if descriptor is None:
            return None
        return replace(action, rhs=replace(rhs, descriptor=descriptor))
    if any(ref.var.layout.variant == CSC for ref in rhs.refs()):
        return None
    return action


def _is_plain_copy(action: Action) -> bool:
    return (isinstance(action.rhs, CopyRhs) and not action.add and action.alpha.is_one()
            and action.rhs.source.letters == action.lhs.letters)


def _substitute_range(actions: List[Action], start: int, stop: int, old: str,
                      new: Variable) -> Optional[List[Action]]:
    updated = list(actions)
    for j in range(start, stop):
        if not actions[j].touches(old):
            continue
        changed = refresh(actions[j].substitute(old, new))
        if changed is None:
            return None
        updated[j] = changed
    return updated


# ===================== Przebiegi =====================

def substitute_forward(program: CfgProgram) -> CfgProgram:
    """T = X; ... -> dalej używaj X zamiast T"""
    actions = list(program.actions)
    for i, action in enumerate(actions):
        if not _is_plain_copy(action) or not action.lhs.var.temporary:
            continue
        temp, source = action.lhs.var, action.rhs.source.var
        if temp.name == source.name:
            continue
        later_writes = [j for j in range(i + 1, len(actions)) if actions[j].writes() == temp.name]
        uses = [j for j in range(i + 1, len(actions)) if actions[j].touches(temp.name)]
        if not uses:
            continue
        if not later_writes:
            last = uses[-1]
            if any(actions[j].writes() == source.name for j in range(i + 1, last + 1)):
                continue
            updated = _substitute_range(actions, i + 1, last + 1, temp.name, source)
        else:
            closing = [j for j in uses if _is_plain_copy(actions[j])
                       and actions[j].rhs.source.var.name == temp.name
                       and actions[j].lhs.var.name == source.name]
            if not closing or not source.writable:
                continue
            k = closing[0]
            if any(j > k for j in uses):
                continue
            between = range(i + 1, k)
            if any(actions[j].touches(source.name) for j in between):
                continue
            if any(temp.name in actions[j].operands() for j in between):
                continue
            updated = _substitute_range(actions, i + 1, k + 1, temp.name, source)
            last = k
        if updated is None:
            continue
        updated[i] = Action(Ref(source, action.lhs.letters), CopyRhs(Ref(source, action.lhs.letters)))
        logger.debug(f"Podstawienie w przód {temp.name} -> {source.name}")
        return program.with_actions(updated)
    return program


def substitute_backward(program: CfgProgram) -> CfgProgram:
    """T = f(...); ...; A = T -> A = f(...)"""
    actions = list(program.actions)
    for k, action in enumerate(actions):
        if not _is_plain_copy(action) or not action.rhs.source.var.temporary:
            continue
        temp, target = action.rhs.source.var, action.lhs.var
        if temp.name == target.name:
            continue
        writers = [j for j, a in enumerate(actions) if a.writes() == temp.name]
        readers = [j for j, a in enumerate(actions) if temp.name in a.reads()]
        if len(writers) != 1 or readers != [k] or writers[0] > k:
            continue
        i = writers[0]
        producer = actions[i]
        if producer.add or target.name in producer.operands():
            continue
        if any(actions[j].touches(target.name) for j in range(i + 1, k)):
            continue
        moved = refresh(Action(Ref(target, _rename_letters(producer, action)),
                               producer.rhs, False, producer.alpha))
        if moved is None:
            continue
        actions[i] = moved
        del actions[k]
        logger.debug(f"Podstawienie wstecz {temp.name} -> {target.name}")
        return program.with_actions(actions)
    return program


def _rename_letters(producer: Action, consumer: Action) -> str:
    """Litery celu konsumenta w nazwach liter producenta"""
    mapping = dict(zip(consumer.rhs.source.letters, producer.lhs.letters))
    return ''.join(mapping[c] for c in consumer.lhs.letters)


def _merge(program: CfgProgram, accept: Callable[[Action], bool]) -> CfgProgram:
    actions = list(program.actions)
    live = live_sets(program)
    for j, consumer in enumerate(actions):
        if not isinstance(consumer.rhs, CopyRhs) or not accept(consumer):
            continue
        temp = consumer.rhs.source.var
        if not temp.temporary or temp.name == consumer.lhs.var.name:
            continue
        if j + 1 < len(actions) and temp.name in live[j + 1]:
            continue
        writers = [i for i, a in enumerate(actions) if a.writes() == temp.name]
        if len(writers) != 1 or writers[0] > j:
            continue
        if any(temp.name in actions[b].reads() for b in range(writers[0] + 1, j)):
            continue
        i = writers[0]
        producer = actions[i]
        if producer.add:
            continue
        if not (producer.alpha.is_one() or consumer.alpha.is_one()):
            continue
        target = consumer.lhs.var
        if target.name in producer.operands():
            continue
        if any(actions[b].writes() in producer.operands() for b in range(i + 1, j)):
            continue
        merged = refresh(Action(Ref(target, _rename_letters(producer, consumer)), producer.rhs,
                                consumer.add, producer.alpha * consumer.alpha))
        if merged is None:
            continue
        actions[j] = merged
        del actions[i]
        logger.debug(f"Scalenie {temp.name} z akcją na {target.name}")
        return program.with_actions(actions)
    return program


def merge_scalar_multiplications(program: CfgProgram) -> CfgProgram:
    """T = f; B = a*T -> B = a*f"""
    return _merge(program, lambda c: not c.add and not c.alpha.is_one())


def merge_actions(program: CfgProgram) -> CfgProgram:
    """T = a1*f; B += a2*T -> B += a1*a2*f (jeden ze współczynników równy 1)"""
    return _merge(program, lambda c: c.add)


def remove_empty_statements(program: CfgProgram) -> CfgProgram:
    """Usuwa akcje A = A"""
    kept = tuple(a for a in program.actions if not a.is_identity())
    if len(kept) == len(program.actions):
        return program
    return program.with_actions(kept)


# ===================== Żywotność i bufory =====================

def liveness(program: CfgProgram) -> List[FrozenSet[str]]:
    """Zmienne tymczasowe żywe bezpośrednio przed każdą akcją"""
    live: set = set()
    result: List[FrozenSet[str]] = []
    temporaries = {v.name for v in program.temporaries()}
    for action in reversed(program.actions):
        if not action.add:
            live.discard(action.writes())
        live |= {name for name in action.reads() if name in temporaries}
        result.append(frozenset(live))
    return list(reversed(result))


def liveness_analysis(program: CfgProgram) -> CfgProgram:
    """Dołącza zbiory żywotności do programu; zmienna żywa na wejściu jest czytana przed zapisem"""
    live = tuple(liveness(program))
    if live and live[0]:
        raise PipelineError(f"Zmienne tymczasowe czytane przed zapisem: {', '.join(sorted(live[0]))}")
    return replace(program, live=live)


def live_sets(program: CfgProgram) -> Tuple[FrozenSet[str], ...]:
    if program.live is not None:
        return program.live
    return liveness_analysis(program).live


def occupancy(program: CfgProgram) -> Dict[str, FrozenSet[int]]:
    """Indeksy akcji, przy których zmienna tymczasowa zajmuje bufor"""
    live = live_sets(program)
    temporaries = {v.name for v in program.temporaries()}
    slots: Dict[str, set] = {name: set() for name in temporaries}
    for index, action in enumerate(program.actions):
        for name in live[index]:
            slots[name].add(index)
        if action.writes() in temporaries:
            slots[action.writes()].add(index)
    return {name: frozenset(indices) for name, indices in slots.items() if indices}


def buffer_plan(program: CfgProgram) -> BufferPlan:
    """Zachłanne pierwsze dopasowanie: bufor współdzielony przez rozłączne zakresy życia"""
    variables = program.variables()
    slots = occupancy(program)
    buffers: List[set] = []
    sizes: List[int] = []
    assignment: Dict[str, int] = {}
    for name in sorted(slots, key=lambda n: (min(slots[n]), n)):
        for index, occupied in enumerate(buffers):
            if not occupied & slots[name]:
                occupied |= slots[name]
                sizes[index] = max(sizes[index], variables[name].size)
                assignment[name] = index
                break
        else:
            buffers.append(set(slots[name]))
            sizes.append(variables[name].size)
            assignment[name] = len(buffers) - 1
    return BufferPlan(assignment, tuple(sizes))


def determine_local_initialization(program: CfgProgram) -> CfgProgram:
    return replace(program, buffers=buffer_plan(program))


DEFAULT_PASSES = (
    merge_scalar_multiplications,
    liveness_analysis,
    substitute_forward,
    substitute_backward,
    remove_empty_statements,
    liveness_analysis,
    merge_actions,
)


def run_passes(program: CfgProgram, passes: Sequence = DEFAULT_PASSES, limit: int = 1000) -> CfgProgram:
    """Stosuje przebiegi do punktu stałego, potem planuje bufory na świeżej żywotności"""
    for _ in range(limit):
        before = program.actions
        for rewrite in passes:
            program = rewrite(program)
        if program.actions == before:
            break
    else:
        logger.warning("⚠️ Przebiegi CFG nie osiągnęły punktu stałego")
    return determine_local_initialization(liveness_analysis(program))
