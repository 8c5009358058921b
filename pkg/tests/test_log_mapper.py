"""
Testy odwzorowania LoG, optymalizacji permutacji i prefetchu
"""

from types import SimpleNamespace

import numpy as np
import pytest

from ast_nodes import Kernel
from layout import ALIGNED, DENSE, layout_for_pattern
from log_mapper import (INFINITE, ZERO, CostTuple, OperandView, PermutationOptimizer,
                        apply_permutations, assign_prefetch, configuration_oracle,
                        enumerate_logs, find_contractions, min_log)
from pipeline import prepare_kernel
from sparsity import SparsityPattern
from tensor_core import Tensor


def view(letters, shape):
    return OperandView(letters, layout_for_pattern(SparsityPattern.dense(shape), DENSE))


def test_cost_order():
    assert CostTuple(0, 0, 1, -2) < CostTuple(0, 1, 0, -2)
    assert CostTuple(0, 1, 0, 0) < CostTuple(1, 0, 0, 0)
    assert CostTuple(0, 1, 1, -3) < CostTuple(0, 1, 1, -2)
    assert CostTuple(0, 2, 0, 0) < INFINITE
    assert CostTuple(1, 0, 0, 0) + INFINITE == INFINITE
    assert CostTuple(1, 1, 0, -1) + CostTuple(0, 0, 1, -1) == CostTuple(1, 1, 1, -2)


def test_plain_gemm():
    cost, descriptor = min_log(view('ij', (4, 5)), view('ik', (4, 3)), view('kj', (3, 5)))
    assert cost == ZERO
    assert descriptor.batched == () and not descriptor.trans_a and not descriptor.trans_b
    assert (descriptor.m, descriptor.n, descriptor.k) == (('i',), ('j',), ('k',))


def test_batched_gemm_without_transposes():
    result = view('snq', (4, 6, 3))
    cost, descriptor = min_log(result, view('slq', (4, 5, 3)), view('ln', (5, 6)))
    assert cost == ZERO
    assert descriptor.gemm_left == 0
    assert descriptor.batched == ('q',)
    assert (descriptor.m, descriptor.n, descriptor.k) == (('s',), ('n',), ('l',))


def test_batched_transposed_contraction():
    sizes = dict(a=2, b=3, c=2, i=3, j=2, k=2, m=4)
    shape = lambda letters: tuple(sizes[c] for c in letters)
    result = view('abcijk', shape('abcijk'))
    cost, descriptor = min_log(result, view('ijmc', shape('ijmc')), view('mkab', shape('mkab')))
    assert cost == CostTuple(0, 1, 1, -2)
    assert descriptor.batched == ('c', 'k')
    assert descriptor.m == ('a', 'b') and descriptor.n == ('i', 'j')
    assert descriptor.trans_a and descriptor.trans_b


def test_non_unit_stride_candidates_are_listed():
    sizes = dict(a=2, b=3, c=2, i=3, j=2, k=2, m=4)
    shape = lambda letters: tuple(sizes[c] for c in letters)
    candidates = enumerate_logs(view('abcijk', shape('abcijk')), view('ijmc', shape('ijmc')),
                                view('mkab', shape('mkab')))
    assert any(d.cost.s > 0 for d in candidates)
    assert min(d.cost for d in candidates) == CostTuple(0, 1, 1, -2)


def test_no_contraction_has_no_log():
    cost, descriptor = min_log(view('ij', (2, 3)), view('i', (2,)), view('j', (3,)))
    assert cost == INFINITE and descriptor is None


def test_padding_blocks_fusing():
    result = OperandView('ijn', layout_for_pattern(SparsityPattern.dense((3, 2, 4)), ALIGNED, 4))
    left = OperandView('ijk', layout_for_pattern(SparsityPattern.dense((3, 2, 5)), ALIGNED, 4))
    candidates = enumerate_logs(result, left, view('kn', (5, 4)))
    assert candidates
    assert all(d.m != ('i', 'j') for d in candidates)


def contracted(statement):
    return find_contractions(statement)


def test_find_contractions_on_three_operands():
    A, B, w, C = Tensor('A', (3, 4)), Tensor('B', (5, 2, 3)), Tensor('w', (2,)), Tensor('C', (5, 4))
    kernel = Kernel('k', [C['ij'] <= A['lj'] * B['ikl'] * w['k']])
    statement = contracted(prepare_kernel(kernel).statements[0])
    kinds = [n.kind for n in statement.walk()]
    assert kinds.count('contraction') == 2
    assert 'indexsum' not in kinds and 'product' not in kinds


def test_outer_product_stays_product():
    x, y, C = Tensor('x', (3,)), Tensor('y', (4,)), Tensor('C', (3, 4))
    statement = contracted(prepare_kernel(Kernel('outer', [C['ij'] <= x['i'] * y['j']])).statements[0])
    assert statement.expression.kind == 'product'


def random_chain(rng):
    """Łańcuch 2-3 tensorów z literami wiązań i losowymi kolejnościami"""
    count = int(rng.integers(2, 4))
    pool = list('abcdefghij')
    bonds = [pool.pop() for _ in range(count - 1)]
    operands, free = [], []
    for position in range(count):
        letters = []
        if position > 0:
            letters.append(bonds[position - 1])
        if position < count - 1:
            letters.append(bonds[position])
        if position in (0, count - 1) or rng.random() < 0.5:
            letter = pool.pop()
            letters.append(letter)
            free.append(letter)
        operands.append(''.join(rng.permutation(letters)))
    sizes = {c: int(rng.integers(2, 5)) for c in 'abcdefghij'}
    tensors = [Tensor(f"T{n}", tuple(sizes[c] for c in letters)) for n, letters in enumerate(operands)]
    target_letters = ''.join(rng.permutation(free))
    target = Tensor('R', tuple(sizes[c] for c in target_letters))
    expression = tensors[0][operands[0]]
    for tensor, letters in zip(tensors[1:], operands[1:]):
        expression = expression * tensor[letters]
    return Kernel('chain', [target[target_letters] <= expression])


@pytest.mark.parametrize('seed', range(200))
def test_permutation_program_matches_configuration_oracle(seed):
    rng = np.random.default_rng(seed)
    kernel = random_chain(rng)
    alignment = int(rng.choice([1, 2, 4]))
    layouts = {t.name: layout_for_pattern(t.spp, ALIGNED, alignment) for t in kernel.tensors}
    optimizer = PermutationOptimizer(lambda n: OperandView(n.indices, layouts[n.tensor.name]), alignment)
    statement = contracted(prepare_kernel(kernel).statements[0])
    assert optimizer.optimize(statement).cost == configuration_oracle(statement, optimizer)


def test_apply_permutations_produces_logs():
    A, B, C, D = Tensor('A', (4, 3)), Tensor('B', (3, 5)), Tensor('C', (5, 2)), Tensor('D', (4, 2))
    kernel = Kernel('k', [D['il'] <= A['ij'] * B['jk'] * C['kl']])
    layouts = {t.name: layout_for_pattern(t.spp, DENSE) for t in kernel.tensors}
    optimizer = PermutationOptimizer(lambda n: OperandView(n.indices, layouts[n.tensor.name]))
    statement = contracted(prepare_kernel(kernel).statements[0])
    plan = optimizer.optimize(statement)
    applied = apply_permutations(statement, plan)
    logs = [n for n in applied.walk() if n.kind == 'log']
    assert len(logs) == 2
    assert plan.cost == ZERO
    assert all(not (n.descriptor.trans_a or n.descriptor.trans_b) for n in logs)


def test_prefetch_matches_sizes():
    logs = [SimpleNamespace(prefetch=None), SimpleNamespace(prefetch=None)]
    large, small = Tensor('P', (100,)), Tensor('S', (20,))
    plan = assign_prefetch(logs, [small, large], [160, 800], element_bytes=8)
    assert dict(plan.assignments) == {'P': 1, 'S': 0}
    assert logs[1].prefetch is large and logs[0].prefetch is small
    assert plan.unmatched == []


def test_prefetch_without_logs():
    plan = assign_prefetch([], [Tensor('P', (10,))], [], element_bytes=8)
    assert plan.unmatched == ['P']
