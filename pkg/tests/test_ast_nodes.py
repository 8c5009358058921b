"""
Testy budowania wyrażeń, dedukcji indeksów i normalizacji przypisań
"""

import pytest

from ast_nodes import (Add, Einsum, Kernel, KernelFamily, Permute, ScalarMultiplication,
                       accumulate, combine, deduce_indices)
from errors import FreeIndexNotInTarget, IndexMismatch, SizeMismatch
from tensor_core import Coefficient, Scalar, Tensor


@pytest.fixture
def tensors():
    return {
        'A': Tensor('A', (3, 4)),
        'B': Tensor('B', (5, 2, 3)),
        'C': Tensor('C', (5, 4)),
        'w': Tensor('w', (2,)),
    }


def test_einsum_chain_is_flat(tensors):
    A, B, w = tensors['A'], tensors['B'], tensors['w']
    node = (A['lj'] * B['ikl']) * w['k']
    assert isinstance(node, Einsum)
    assert [c.tensor.name for c in node.children] == ['A', 'B', 'w']


def test_association_does_not_matter(tensors):
    A, B, w = tensors['A'], tensors['B'], tensors['w']
    left = (A['lj'] * B['ikl']) * w['k']
    right = A['lj'] * (B['ikl'] * w['k'])
    assert [c.tensor.name for c in left.children] == [c.tensor.name for c in right.children]


def test_add_is_not_distributed():
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    node = A['ik'] * (B['kj'] + C['kj'])
    assert isinstance(node, Einsum)
    assert isinstance(node.children[1], Add)


def test_add_is_flat():
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    node = combine(A['ij'] + B['ij'], C['ij'], Add)
    assert isinstance(node, Add) and len(node.children) == 3


def test_literal_scalars_fold():
    A = Tensor('A', (2, 2))
    node = 2.0 * (3.0 * A['ij'])
    assert isinstance(node, ScalarMultiplication)
    assert node.coefficient == Coefficient(6.0)
    assert node.children[0].kind == 'indexed'


def test_unit_coefficient_is_dropped():
    A = Tensor('A', (2, 2))
    node = 2.0 * (0.5 * A['ij'])
    assert node.kind == 'indexed'
    symbolic = 2.0 * (A['ij'] * Coefficient(0.5, ('alpha',)))
    assert isinstance(symbolic, ScalarMultiplication)
    assert symbolic.coefficient == Coefficient(1.0, ('alpha',))


def test_scalar_hoisted_above_einsum(tensors):
    A, B = tensors['A'], tensors['B']
    node = A['lj'] * Scalar('alpha').coefficient() * B['ikl']
    assert isinstance(node, ScalarMultiplication)
    assert isinstance(node.children[0], Einsum)
    for sub in node.children[0].walk():
        assert sub.kind != 'scalar'


def test_deduce_indices_contracts_repeated(tensors):
    A, B, w = tensors['A'], tensors['B'], tensors['w']
    node = A['lj'] * B['ikl'] * w['k']
    assert deduce_indices(node, 'ij') == 'ij'


def test_free_index_not_in_target():
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    kernel = Kernel('k')
    with pytest.raises(FreeIndexNotInTarget):
        kernel.add(C['ij'] <= A['ik'] * B['mj'])


def test_add_with_permuted_letters():
    A, B, C = Tensor('A', (2, 3)), Tensor('B', (3, 2)), Tensor('C', (2, 3))
    kernel = Kernel('k', [C['ij'] <= A['ij'] + B['ji']])
    expression = kernel.statements[0].expression
    assert isinstance(expression, Add)
    assert isinstance(expression.children[1], Permute)
    assert expression.children[1].indices == 'ij'


def test_add_with_different_letters():
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    with pytest.raises(IndexMismatch):
        Kernel('k', [C['ij'] <= A['ij'] + B['ik']])


def test_size_mismatch_in_statement():
    A, B, C = Tensor('A', (2, 3)), Tensor('B', (4, 2)), Tensor('C', (2, 2))
    with pytest.raises(SizeMismatch):
        Kernel('k', [C['ij'] <= A['ik'] * B['kj']])


def test_accumulate_expands():
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    kernel = Kernel('k', [accumulate(C['ij'], A['ik'] * B['kj'])])
    shaped = kernel.statements[0]
    assert not shaped.accumulate
    assert isinstance(shaped.expression, Add)
    assert shaped.expression.children[0].tensor is C
    assert kernel.source[0].accumulate


def test_outer_product_allowed():
    x, y, C = Tensor('x', (3,)), Tensor('y', (4,)), Tensor('C', (3, 4))
    kernel = Kernel('outer', [C['ij'] <= x['i'] * y['j']])
    assert kernel.statements[0].expression.indices == 'ij'


def test_normalized_tree_shape(tensors):
    A, B, C, w = tensors['A'], tensors['B'], tensors['C'], tensors['w']
    kernel = Kernel('k', [C['ij'] <= 2.0 * C['ij'] + A['lj'] * B['ikl'] * w['k']])
    for sub in kernel.statements[0].walk():
        for child in sub.children:
            if sub.kind == 'einsum':
                assert child.kind not in ('einsum', 'scalar')
            if sub.kind == 'add':
                assert child.kind != 'add'


def test_kernel_bookkeeping(tensors):
    A, B, C, w = tensors['A'], tensors['B'], tensors['C'], tensors['w']
    kernel = Kernel('k', [C['ij'] <= Scalar('alpha').coefficient() * A['lj'] * B['ikl'] * w['k']])
    assert kernel.written == ['C']
    assert kernel.scalars == ['alpha']
    assert {t.name for t in kernel.tensors} == {'A', 'B', 'C', 'w'}


def test_family_rejects_two_tensors_with_one_name():
    first, second = Tensor('A', (2, 2)), Tensor('A', (2, 2))
    C = Tensor('C', (2, 2))
    family = KernelFamily('f', [Kernel('a', [C['ij'] <= first['ij']]),
                                Kernel('b', [C['ij'] <= second['ij']])])
    with pytest.raises(SizeMismatch):
        family.tensors


def test_assign_scalar_rejected():
    C = Tensor('C', (2,))
    with pytest.raises(IndexMismatch):
        C['i'] <= 2.0
