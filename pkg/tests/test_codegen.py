"""
Testy klasyfikacji, backendów, flopów, interpretera i kodu C
"""

import numpy as np
import pytest
from conftest import make_config

from ast_nodes import Kernel, KernelFamily
from cfg import Action, CopyRhs, Ref, Variable
from codegen import BackendFactory, OperationKind, classify
from errors import UnboundSlot
from kernel_checks import check_kernel, compile_shared, find_compiler, run_compiled
from c_emitter import emit_source
from layout import CSC, DENSE, layout_for_pattern
from pipeline import prepare_kernel, run_pipeline
from sparsity import SparsityPattern
from tensor_core import Coefficient, Scalar, Tensor


def compiled(*kernels, **overrides):
    outcome = run_pipeline(KernelFamily('f', list(kernels)), make_config(**overrides))
    return outcome.artifacts[0] if len(kernels) == 1 else outcome


def matmul_reference(A, B):
    rows, inner = A.shape
    result = np.zeros((rows, B.shape[1]))
    for i in range(rows):
        for j in range(B.shape[1]):
            acc = 0.0
            for k in range(inner):
                acc = acc + A[i, k] * B[k, j]
            result[i, j] = acc
    return result


def test_scaled_copy_is_copyscaleadd():
    layout = layout_for_pattern(SparsityPattern.dense((2, 2)), DENSE)
    A, B = Variable('A', layout), Variable('B', layout, writable=True)
    action = Action(Ref(B, 'ij'), CopyRhs(Ref(A, 'ij')), alpha=Coefficient(2.0))
    assert classify(action) == OperationKind.COPYSCALEADD


def test_outer_product_is_product():
    x, y, C = Tensor('x', (3,)), Tensor('y', (4,)), Tensor('C', (3, 4))
    artifact = compiled(Kernel('outer', [C['ij'] <= x['i'] * y['j']]))
    assert [c.kind for c in artifact.calls] == [OperationKind.PRODUCT]


def test_dense_matmul_flops():
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    artifact = compiled(Kernel('mm', [C['ij'] <= A['ik'] * B['kj']]))
    assert [c.kind for c in artifact.calls] == [OperationKind.LOG]
    assert artifact.flops.nonzero == 12
    assert artifact.flops.hardware == 16


def test_zero_operand_has_no_nonzero_flops():
    Z = Tensor('Z', (2, 2), SparsityPattern.zeros((2, 2)))
    B, C = Tensor('B', (2, 2)), Tensor('C', (2, 2))
    assert prepare_kernel(Kernel('z', [C['ij'] <= Z['ik'] * B['kj']])).nonzero_flops == 0


def test_backend_priority_falls_back_to_portable():
    factory = BackendFactory(['libxsmm', 'pspamm'])
    assert factory.priority == ['libxsmm', 'pspamm', 'portable']
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    artifact = compiled(Kernel('mm', [C['ij'] <= A['ik'] * B['kj']]), backend_priority=['libxsmm'])
    assert [c.backend for c in artifact.calls] == ['portable']
    with pytest.raises(ValueError):
        BackendFactory(['cublas'])


def test_identity_kernel(rng):
    I, X, C = Tensor('I', (4, 4)), Tensor('X', (4, 3)), Tensor('C', (4, 3))
    artifact = compiled(Kernel('identity', [C['ij'] <= I['ik'] * X['kj']]))
    values = rng.standard_normal((4, 3))
    artifact.bind('I', np.eye(4))
    artifact.bind('X', values)
    artifact.bind('C', np.zeros((4, 3)))
    assert artifact.execute() == artifact.flops.hardware
    assert np.array_equal(artifact.result('C'), values)


def test_scaled_update_is_exact(rng):
    A, B, C = Tensor('A', (4, 4)), Tensor('B', (4, 4)), Tensor('C', (4, 4))
    artifact = compiled(Kernel('update', [C['ij'] <= 2.0 * C['ij'] + 0.5 * A['ik'] * B['kj']]))
    a, b, c = (rng.standard_normal((4, 4)) for _ in range(3))
    for name, values in zip('ABC', (a, b, c)):
        artifact.bind(name, values)
    flops = artifact.execute()
    assert np.array_equal(artifact.result('C'), 2.0 * c + 0.5 * matmul_reference(a, b))
    assert flops == artifact.flops.hardware
    assert artifact.flops.nonzero <= artifact.flops.hardware


def test_symbolic_scalar(rng):
    A, B, C = Tensor('A', (3, 2)), Tensor('B', (2, 3)), Tensor('C', (3, 3))
    alpha = Scalar('alpha').coefficient()
    artifact = compiled(Kernel('sym', [C['ij'] <= alpha * A['ik'] * B['kj']]))
    a, b = rng.standard_normal((3, 2)), rng.standard_normal((2, 3))
    artifact.bind('A', a)
    artifact.bind('B', b)
    artifact.bind('C', np.zeros((3, 3)))
    artifact.bind_scalar('alpha', 3.0)
    artifact.execute()
    assert np.allclose(artifact.result('C'), 3.0 * a @ b, rtol=1e-13, atol=0)


def test_unbound_slot():
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    artifact = compiled(Kernel('mm', [C['ij'] <= A['ik'] * B['kj']]))
    artifact.bind('A', np.ones((2, 2)))
    with pytest.raises(UnboundSlot):
        artifact.execute()


def test_unbound_scalar():
    A, C = Tensor('A', (2, 2)), Tensor('C', (2, 2))
    artifact = compiled(Kernel('s', [C['ij'] <= Scalar('beta').coefficient() * A['ij']]))
    artifact.bind('A', np.ones((2, 2)))
    artifact.bind('C', np.ones((2, 2)))
    with pytest.raises(UnboundSlot):
        artifact.execute()


def sparse_stiffness():
    values = np.eye(4)
    values[0, 3] = 2.0
    return Tensor('K', (4, 4), values=values)


def test_csc_right_operand():
    A, C, K = Tensor('A', (3, 4)), Tensor('C', (3, 4)), sparse_stiffness()
    artifact = compiled(Kernel('csc', [C['ij'] <= A['ik'] * K['kj']]))
    assert artifact.layouts['K'].variant == CSC
    (call,) = artifact.calls
    assert call.action.rhs.descriptor.csc_b
    assert artifact.flops.hardware == 2 * 3 * 5
    assert check_kernel(artifact, seed=1).passed


def test_csc_on_left_is_demoted():
    A, C, K = Tensor('A', (4, 3)), Tensor('C', (4, 3)), sparse_stiffness()
    outcome = compiled(Kernel('left', [C['ij'] <= K['ik'] * A['kj']]),
                       Kernel('right', [C['ij'] <= A['ij']]))
    assert outcome.layouts['K'].variant != CSC
    assert check_kernel(outcome.artifact('left')).passed


@pytest.mark.parametrize('seed', range(3))
def test_interpreter_flops_match_report(seed):
    A, B, C = Tensor('A', (5, 3, 2)), Tensor('B', (3, 4)), Tensor('C', (5, 4, 2))
    w, D = Tensor('w', (2,)), Tensor('D', (5, 4))
    outcome = compiled(Kernel('batched', [C['ilq'] <= A['ikq'] * B['kl']]),
                       Kernel('reduce', [D['il'] <= A['ikq'] * B['kl'] * w['q']]),
                       Kernel('outer', [C['ilq'] <= D['il'] * w['q']]),
                       alignment=4)
    for artifact in outcome.artifacts:
        result = check_kernel(artifact, seed)
        assert result.passed, result.describe()
        assert artifact.flops.nonzero <= artifact.flops.hardware


def test_tensor_view(rng):
    A, C = Tensor('A', (3, 5)), Tensor('C', (3, 5))
    artifact = compiled(Kernel('copy', [C['ij'] <= A['ij']]), alignment=4)
    values = rng.standard_normal((3, 5))
    artifact.bind('A', values)
    artifact.bind('C', np.zeros((3, 5)))
    artifact.execute()
    view = artifact.view('C')
    assert view[2, 4] == values[2, 4]
    assert artifact.flops.hardware == 20


def test_summary_lists_descriptors():
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    summary = compiled(Kernel('mm', [C['ij'] <= A['ik'] * B['kj']])).summary()
    assert summary['symbol'] == 'f_mm'
    assert summary['kinds'] == ['log']
    assert summary['descriptors'][0]['notation'] == 'C_(i)(j) = A_(k) B'


@pytest.mark.skipif(find_compiler() is None, reason="brak kompilatora C")
def test_c_code_matches_interpreter(tmp_path, rng):
    A, B, C, K = Tensor('A', (3, 4)), Tensor('B', (4, 4)), Tensor('C', (3, 4)), sparse_stiffness()
    outcome = compiled(Kernel('mm', [C['ij'] <= C['ij'] + 0.5 * A['ik'] * B['kj']]),
                       Kernel('csc', [C['ij'] <= A['ik'] * K['kj']]))
    library = compile_shared(emit_source('f', outcome.artifacts, outcome.artifacts[0].profile), tmp_path)
    for artifact in outcome.artifacts:
        for name in artifact.slots:
            artifact.bind(name, rng.standard_normal(artifact.tensors[name].shape))
        storages = {name: artifact.storage(name).copy() for name in artifact.slots}
        compiled_result = run_compiled(library, artifact, storages, {})
        artifact.execute()
        for name in artifact.written:
            assert np.array_equal(compiled_result[name], artifact.storage(name))
