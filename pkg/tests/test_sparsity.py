"""
Testy wzorców rzadkości i EQSPP
"""

import numpy as np
import pytest

from ast_nodes import Kernel
from errors import SizeLimitExceeded
from sparsity import (SparsityPattern, annotate_sparsity, bounding_box, check_minimality,
                      compute_eqspp, derive_spp)
from tensor_core import Tensor, naive_einsum


def block_patterns():
    K = np.zeros((2, 4), dtype=bool)
    K[:, :2] = True
    A = np.zeros((4, 2), dtype=bool)
    A[:2, :] = True
    return [(SparsityPattern(K), 'ik'), (SparsityPattern.dense((4, 4)), 'kl'), (SparsityPattern(A), 'lj')]


def test_block_example_keeps_top_left():
    result = compute_eqspp(block_patterns(), 'ij')
    expected = np.zeros((4, 4), dtype=bool)
    expected[:2, :2] = True
    assert np.array_equal(result.operands[1].grid, expected)
    assert result.result == SparsityPattern.dense((2, 2))


def test_block_example_is_minimal():
    operands = block_patterns()
    result = compute_eqspp(operands, 'ij')
    assert check_minimality(operands, result.operands)


def test_dense_operands_unchanged():
    operands = [(SparsityPattern.dense((3, 4)), 'ik'), (SparsityPattern.dense((4, 2)), 'kj')]
    result = compute_eqspp(operands, 'ij')
    assert [p for p in result.operands] == [p for p, _ in operands]
    assert check_minimality(operands, result.operands)


def test_staircase_restricts_contracted_dimension():
    sims, basis, face = 2, 20, 10
    K = np.zeros((basis, basis), dtype=bool)
    K[:face, :] = True
    operands = [(SparsityPattern.dense((sims, basis, 9)), 'slq'),
                (SparsityPattern(K), 'lk'),
                (SparsityPattern.dense((9, 9)), 'qp')]
    result = compute_eqspp(operands, 'skp')
    masked = result.operands[0]
    assert masked.nnz() == sims * face * 9
    assert bounding_box(masked) == [(0, sims), (0, face), (0, 9)]


@pytest.mark.parametrize('seed', range(50))
def test_random_instances_are_minimal(seed):
    rng = np.random.default_rng(seed)
    sizes = {c: int(rng.integers(1, 5)) for c in 'ijkl'}
    letters = ['ikl', 'klj', 'jl']
    operands = [(SparsityPattern(rng.random(tuple(sizes[c] for c in s)) < 0.5), s) for s in letters]
    result = compute_eqspp(operands, 'ij')
    assert check_minimality(operands, result.operands)
    for (original, _), masked in zip(operands, result.operands):
        assert masked.is_subset(original)


@pytest.mark.parametrize('seed', range(10))
def test_masking_preserves_values(seed):
    rng = np.random.default_rng(seed)
    shapes = {'ik': (3, 4), 'kl': (4, 4), 'lj': (4, 3)}
    operands = [(SparsityPattern(rng.random(shapes[s]) < 0.4), s) for s in shapes]
    result = compute_eqspp(operands, 'ij')
    values = [rng.random(shapes[s]) * p.grid for p, s in operands]
    masked = [v * m.grid for v, m in zip(values, result.operands)]
    tensors = [(Tensor(f"T{n}", shapes[s]), s) for n, s in enumerate(shapes)]
    target = (Tensor('R', (3, 3)), 'ij')
    assert np.array_equal(naive_einsum(target, tensors, values), naive_einsum(target, tensors, masked))


def test_eqspp_is_idempotent():
    first = compute_eqspp(block_patterns(), 'ij')
    again = compute_eqspp(list(zip(first.operands, ['ik', 'kl', 'lj'])), 'ij')
    assert again.operands == first.operands


def test_minimality_size_cap():
    operands = [(SparsityPattern.dense((4, 4)), 'ik'), (SparsityPattern.dense((4, 4)), 'kj')]
    with pytest.raises(SizeLimitExceeded):
        check_minimality(operands, [p for p, _ in operands], max_points=10)


def test_redundant_entry_is_not_minimal():
    operands = block_patterns()
    assert not check_minimality(operands, [p for p, _ in operands])


def test_bounding_boxes():
    diagonal = SparsityPattern.from_coords((4, 4), [(i, i) for i in range(4)])
    assert bounding_box(diagonal) == [(0, 4), (0, 4)]
    columns = np.zeros((20, 20), dtype=bool)
    columns[:, :10] = True
    assert bounding_box(SparsityPattern(columns)) == [(0, 20), (0, 10)]
    assert bounding_box(SparsityPattern.zeros((3, 2))) == [(0, 0), (0, 0)]
    single = SparsityPattern.from_coords((5, 5, 5), [(1, 2, 3), (2, 4, 3)])
    assert bounding_box(single) == [(1, 3), (2, 5), (3, 4)]


def test_annotate_masks_middle_operand():
    (k, _), _, (a, _) = block_patterns()
    K, Q, A, R = Tensor('K', (2, 4), k), Tensor('Q', (4, 4)), Tensor('A', (4, 2), a), Tensor('R', (2, 2))
    statement = Kernel('k', [R['ij'] <= K['ik'] * Q['kl'] * A['lj']]).statements[0]
    annotate_sparsity(statement)
    leaves = {n.tensor.name: n for n in statement.expression.walk() if n.kind == 'indexed'}
    assert leaves['Q'].eqspp.nnz() == 4
    assert leaves['Q'].spp.nnz() == 16

    annotate_sparsity(statement, use_eqspp=False)
    assert leaves['Q'].eqspp.nnz() == 16


def test_derive_spp_of_expression():
    K = Tensor('K', (3, 3), SparsityPattern.from_coords((3, 3), [(0, 1), (1, 2)]))
    Q = Tensor('Q', (3, 2))
    pattern = derive_spp(K['kl'] * Q['lp'], 'kp')
    assert pattern.extents == (3, 2)
    assert pattern.grid[:2].all() and not pattern.grid[2].any()


def test_coords_are_column_major():
    pattern = SparsityPattern.from_coords((2, 2), [(1, 0), (0, 1), (0, 0)])
    assert pattern.coords() == [(0, 0), (1, 0), (0, 1)]
