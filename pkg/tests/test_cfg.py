"""
Testy programu CFG: generowanie akcji, przebiegi, żywotność, bufory
"""

import pytest
from conftest import make_config

from ast_nodes import Kernel, KernelFamily
from cfg import (DEFAULT_PASSES, Action, CfgProgram, CopyRhs, Ref, Variable, buffer_plan, liveness,
                 liveness_analysis, lower, merge_actions, merge_scalar_multiplications,
                 remove_empty_statements, run_passes, substitute_backward, substitute_forward)
from errors import PipelineError
from layout import DENSE, layout_for_pattern
from pipeline import prepare_kernel, run_pipeline
from sparsity import SparsityPattern
from tensor_core import Coefficient, Tensor


def compiled(kernel):
    return run_pipeline(KernelFamily('f', [kernel]), make_config()).artifact(kernel.name)


def variable(name, shape, temporary=False):
    return Variable(name, layout_for_pattern(SparsityPattern.dense(shape), DENSE), temporary, True)


def copy(target, source, letters='ij', add=False):
    return Action(Ref(target, letters), CopyRhs(Ref(source, letters)), add)


def test_matrix_multiplication_becomes_one_gemm():
    A, B, C = Tensor('A', (4, 4)), Tensor('B', (4, 4)), Tensor('C', (4, 4))
    artifact = compiled(Kernel('gemm', [C['ij'] <= C['ij'] + 0.5 * A['ik'] * B['kj']]))
    assert artifact.program.dump() == ['C[ij] += 0.5 * log(A[ik], B[kj])']
    action = artifact.program.actions[0]
    assert action.add and action.alpha == Coefficient(0.5)
    assert not artifact.program.temporaries()


def test_scalar_multiplication_is_merged():
    A, B, C = Tensor('A', (3, 2)), Tensor('B', (2, 3)), Tensor('C', (3, 3))
    artifact = compiled(Kernel('scaled', [C['ij'] <= 2.0 * A['ik'] * B['kj']]))
    assert artifact.program.dump() == ['C[ij] = 2.0 * log(A[ik], B[kj])']


def test_lowering_keeps_statement_order():
    A, B, C, D = (Tensor(n, (2, 3)) for n in 'ABCD')
    kernel = Kernel('copies', [C['ij'] <= A['ij'], D['ij'] <= B['ij']])
    variables = {t.name: variable(t.name, t.shape) for t in kernel.tensors}
    program = lower(prepare_kernel(kernel).statements, variables)
    assert program.dump() == ['C[ij] = A[ij]', 'D[ij] = B[ij]']


def test_self_assignment_removed():
    A, B = variable('A', (2, 2)), variable('B', (2, 2))
    program = CfgProgram((copy(A, A), copy(B, A)))
    assert remove_empty_statements(program).dump() == ['B[ij] = A[ij]']


def test_passes_are_idempotent():
    A, B, C = Tensor('A', (4, 4)), Tensor('B', (4, 4)), Tensor('C', (4, 4))
    program = compiled(Kernel('k', [C['ij'] <= 2.0 * C['ij'] + 0.5 * A['ik'] * B['kj']])).program
    assert run_passes(program).actions == program.actions


def test_disjoint_temporaries_share_buffer():
    A, B = variable('A', (10, 10)), variable('B', (10, 10))
    D, E = variable('D', (8, 10)), variable('E', (8, 10))
    first, second = variable('_t0', (10, 10), True), variable('_t1', (8, 10), True)
    program = CfgProgram((copy(first, A), copy(B, first), copy(second, D), copy(E, second)))
    plan = buffer_plan(program)
    assert plan.sizes == (100,)
    assert plan.assignment == {'_t0': 0, '_t1': 0}


def test_overlapping_temporaries_get_two_buffers():
    A, B = variable('A', (10, 10)), variable('B', (10, 10))
    D, E = variable('D', (8, 10)), variable('E', (8, 10))
    first, second = variable('_t0', (10, 10), True), variable('_t1', (8, 10), True)
    program = CfgProgram((copy(first, A), copy(second, D), copy(B, first), copy(E, second)))
    plan = buffer_plan(program)
    assert plan.sizes == (100, 80)
    assert plan.to_dict()['bytes'] == 180 * 8


def test_no_temporaries_no_buffers():
    A, B = variable('A', (2, 2)), variable('B', (2, 2))
    plan = buffer_plan(CfgProgram((copy(B, A),)))
    assert plan.sizes == () and plan.total_elements() == 0


def test_liveness():
    A, B = variable('A', (2, 2)), variable('B', (2, 2))
    temp = variable('_t0', (2, 2), True)
    program = CfgProgram((copy(temp, A), copy(temp, B, add=True), copy(B, temp)))
    assert liveness(program) == [frozenset(), frozenset({'_t0'}), frozenset({'_t0'})]


def test_live_temporaries_never_share_buffer():
    A, B, C, D = (Tensor(n, (4, 4)) for n in 'ABCD')
    kernel = Kernel('k', [D['ij'] <= A['ik'] * B['kl'] * C['lj'] + 3.0 * A['ij']])
    program = compiled(kernel).program
    assignment = program.buffers.assignment
    sizes = {v.name: v.size for v in program.temporaries()}
    for live in liveness(program):
        buffers = [assignment[name] for name in live]
        assert len(buffers) == len(set(buffers))
    for name, index in assignment.items():
        assert program.buffers.sizes[index] >= sizes[name]


def test_pass_order():
    assert DEFAULT_PASSES == (merge_scalar_multiplications, liveness_analysis, substitute_forward,
                              substitute_backward, remove_empty_statements, liveness_analysis,
                              merge_actions)


def test_liveness_attached_to_program():
    A, B = variable('A', (2, 2)), variable('B', (2, 2))
    temp = variable('_t0', (2, 2), True)
    program = liveness_analysis(CfgProgram((copy(temp, A), copy(B, temp))))
    assert program.live == (frozenset(), frozenset({'_t0'}))
    assert program.with_actions(program.actions).live is None


def test_compiled_program_carries_liveness():
    A, B, C, D = (Tensor(n, (4, 4)) for n in 'ABCD')
    program = compiled(Kernel('k', [D['ij'] <= A['ik'] * B['kl'] * C['lj'] + 3.0 * A['ij']])).program
    assert program.live == tuple(liveness(program))


def test_temporary_read_before_write_rejected():
    A, B = variable('A', (2, 2)), variable('B', (2, 2))
    temp = variable('_t0', (2, 2), True)
    with pytest.raises(PipelineError):
        liveness_analysis(CfgProgram((copy(B, temp), copy(temp, A))))


def test_merge_actions_respects_later_reads():
    A, B, D = variable('A', (2, 2)), variable('B', (2, 2)), variable('D', (2, 2))
    temp = variable('_t0', (2, 2), True)
    kept = CfgProgram((copy(temp, A), copy(B, temp, add=True), copy(D, temp)))
    assert merge_actions(kept).dump() == kept.dump()
    merged = merge_actions(CfgProgram((copy(temp, A), copy(B, temp, add=True))))
    assert merged.dump() == ['B[ij] += A[ij]']
