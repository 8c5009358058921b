"""
Testy przestrzeni indeksów i naiwnej sumy Einsteina
"""

import numpy as np
import pytest

from errors import DuplicateIndexInTensor, IndexMismatch, SizeMismatch
from sparsity import SparsityPattern
from tensor_core import (Coefficient, Projection, Scalar, Tensor, build_index_space,
                         check_index_string, naive_einsum, random_values, spp_of_product)


def test_index_space_is_lexical():
    A = Tensor('A', (2, 2, 2))
    space = build_index_space([(A, 'jik')])
    assert space.letters == 'ijk'
    assert space.sizes == {'i': 2, 'j': 2, 'k': 2}
    assert Projection('jik', space).positions == (1, 0, 2)


def test_lowercase_letters_come_first():
    space = build_index_space([(Tensor('A', (2, 3)), 'Ab')])
    assert space.letters == 'bA'
    assert space.extents == (3, 2)


def test_single_tensor_space():
    space = build_index_space([(Tensor('A', (3,)), 'i')])
    assert space.letters == 'i' and space.size == 3


def test_size_mismatch():
    with pytest.raises(SizeMismatch):
        build_index_space([(Tensor('A', (2, 3)), 'ij'), (Tensor('B', (4, 2)), 'ji')])


def test_duplicate_letter_rejected():
    with pytest.raises(DuplicateIndexInTensor):
        check_index_string('ii', 2)


def test_index_length_must_match_rank():
    with pytest.raises(IndexMismatch):
        check_index_string('ijk', 2, 'A')


def test_projection_restriction_partitions_space():
    space = build_index_space([(Tensor('A', (2, 3)), 'ik'), (Tensor('B', (3, 2)), 'kj')])
    projection = Projection('ij', space)
    seen = set()
    for i in range(2):
        for j in range(2):
            points = list(projection.restriction((i, j)))
            assert len(points) == 3
            assert all(projection(p) == (i, j) for p in points)
            seen.update(points)
    assert len(seen) == space.size


def test_identity_matmul():
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    result = naive_einsum((C, 'ij'), [(A, 'ik'), (B, 'kj')], [np.eye(2), np.eye(2)])
    assert np.array_equal(result, np.eye(2))


def test_mode2_product_matches_loops(rng):
    A, B, C = Tensor('A', (2, 2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2, 2))
    a, b = rng.standard_normal((2, 2, 2)), rng.standard_normal((2, 2))
    result = naive_einsum((C, 'ijk'), [(A, 'ilk'), (B, 'jl')], [a, b])
    expected = np.zeros((2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    expected[i, j, k] += a[i, l, k] * b[j, l]
    assert np.allclose(result, expected, rtol=1e-13, atol=0)


def test_three_operand_sum_matches_loops(rng):
    A, B, w, C = Tensor('A', (2, 2)), Tensor('B', (2, 2, 2)), Tensor('w', (2,)), Tensor('C', (2, 2))
    a, b, v = rng.standard_normal((2, 2)), rng.standard_normal((2, 2, 2)), rng.standard_normal(2)
    result = naive_einsum((C, 'ij'), [(A, 'lj'), (B, 'ikl'), (w, 'k')], [a, b, v])
    expected = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    expected[i, j] += a[l, j] * b[i, k, l] * v[k]
    assert np.linalg.norm(result - expected) <= 1e-13 * np.linalg.norm(expected)


def test_result_letters_must_exist():
    A, C = Tensor('A', (2, 2)), Tensor('C', (2, 2))
    with pytest.raises(IndexMismatch):
        naive_einsum((C, 'iz'), [(A, 'ik')], [np.ones((2, 2))])


def test_spp_of_product():
    dense = SparsityPattern.dense((2, 2))
    assert spp_of_product([(dense, 'ik'), (dense, 'kj')], 'ij') == dense
    diag = SparsityPattern.from_coords((2, 2), [(0, 0), (1, 1)])
    assert spp_of_product([(diag, 'ik'), (diag, 'kj')], 'ij') == diag
    row = SparsityPattern.from_coords((1, 2), [(0, 0)])
    assert spp_of_product([(row, 'ik'), (dense, 'kj')], 'ij') == SparsityPattern.dense((1, 2))


def test_pattern_soundness(rng):
    a = SparsityPattern(rng.random((3, 4)) < 0.4)
    b = SparsityPattern(rng.random((4, 3)) < 0.4)
    A, B, C = Tensor('A', (3, 4)), Tensor('B', (4, 3)), Tensor('C', (3, 3))
    values = naive_einsum((C, 'ij'), [(A, 'ik'), (B, 'kj')],
                          [random_values(a, rng), random_values(b, rng)])
    pattern = spp_of_product([(a, 'ik'), (b, 'kj')], 'ij')
    assert SparsityPattern.from_values(values).is_subset(pattern)


def test_tensor_validation():
    with pytest.raises(ValueError):
        Tensor('1A', (2,))
    with pytest.raises(ValueError):
        Tensor('A', (0, 2))
    with pytest.raises(SizeMismatch):
        Tensor('A', (2, 2), spp=SparsityPattern.dense((2, 3)))
    with pytest.raises(ValueError):
        Tensor('A', (2,), spp=SparsityPattern.from_coords((2,), [(0,)]), values=np.array([1.0, 1.0]))


def test_values_imply_pattern():
    tensor = Tensor('K', (2, 2), values=np.array([[1.0, 0.0], [0.0, 2.0]]))
    assert tensor.spp.nnz() == 2 and tensor.is_constant


def test_scalars():
    with pytest.raises(ValueError):
        Scalar()
    with pytest.raises(ValueError):
        Scalar(value=float('inf'))
    assert Scalar(value=2.0).coefficient() == Coefficient(2.0)
    assert Scalar('dt').coefficient() == Coefficient(1.0, ('dt',))
    product = Coefficient(0.5, ('dt',)) * Coefficient(2.0, ('dt',))
    assert product.evaluate({'dt': 3.0}) == 9.0
