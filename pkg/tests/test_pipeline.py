"""
Testy przebiegu rodziny, raportów i interfejsu wiersza poleceń
"""

import json

import numpy as np
import pytest
from conftest import make_config
from openpyxl import load_workbook

import main
import pipeline
from ast_nodes import Kernel, KernelFamily
from config import PipelineConfig
from corpus import seissol_family
from report_generator import build_report, write_reports
from tensor_core import Tensor

KERNELS = """
family demo
tensor A(4, 3)
tensor B(3, 5)
tensor C(4, 5)

kernel gemm {
  C['ij'] <= C['ij'] + 0.5 * A['ik'] * B['kj']
}
"""


@pytest.fixture
def kernel_file(tmp_path):
    path = tmp_path / 'demo.kernels'
    path.write_text(KERNELS, encoding='utf-8')
    return path


def mixed_family():
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    K = Tensor('K', (2, 2), values=np.eye(2))
    return KernelFamily('mixed', [Kernel('good', [C['ij'] <= A['ik'] * B['kj']]),
                                  Kernel('bad', [K['ij'] <= A['ij']])])


def test_invalid_kernel_does_not_stop_family():
    outcome = pipeline.run_pipeline(mixed_family(), make_config())
    assert [a.name for a in outcome.artifacts] == ['good']
    assert not outcome.success
    assert any(d.code == 'write_to_constant' for d in outcome.all_diagnostics)


def test_conflicting_tensor_rejects_only_its_kernel(tmp_path):
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    other, D, E = Tensor('A', (3, 3)), Tensor('D', (3, 3)), Tensor('E', (3, 3))
    family = KernelFamily('conflict', [Kernel('first', [C['ij'] <= A['ik'] * B['kj']]),
                                        Kernel('second', [D['ij'] <= other['ik'] * E['kj']])])
    outcome = pipeline.run_pipeline(family, make_config(emit='c99', output_dir=tmp_path))
    assert [a.name for a in outcome.artifacts] == ['first']
    assert [r.kernel for r in outcome.results] == ['first', 'second']
    assert outcome.results[1].diagnostics[0].code == 'size_mismatch'
    assert 'second' not in (tmp_path / 'conflict.kernels').read_text(encoding='utf-8')


def test_duplicate_kernel_keeps_both_results():
    A, B, C = Tensor('A', (2, 2)), Tensor('B', (2, 2)), Tensor('C', (2, 2))
    family = KernelFamily('twice', [Kernel('k', [C['ij'] <= A['ik'] * B['kj']]),
                                     Kernel('k', [C['ij'] <= B['ik'] * A['kj']])])
    outcome = pipeline.run_pipeline(family, make_config())
    first, second = outcome.results
    assert first.success and not second.success
    assert second.diagnostics[-1].code == 'duplicate_kernel'


def test_config_rejects_unknown_alignment():
    with pytest.raises(ValueError):
        PipelineConfig(alignment=3)


def test_workers_give_same_plans():
    family = seissol_family(3)
    serial = pipeline.run_pipeline(family, make_config())
    parallel = pipeline.run_pipeline(family, make_config(workers=4))
    assert [a.program.dump() for a in serial.artifacts] == [a.program.dump() for a in parallel.artifacts]
    assert [a.flops for a in serial.artifacts] == [a.flops for a in parallel.artifacts]


def test_report_contents():
    report = build_report(pipeline.run_pipeline(mixed_family(), make_config()))
    assert report['family'] == 'mixed'
    assert 'eqspp_ratio' in report['ratio_convention']
    good, bad = report['kernels']
    assert good['success'] and good['symbol'] == 'mixed_good'
    assert not bad['success'] and bad['diagnostics'][0]['code'] == 'write_to_constant'
    assert set(report['layouts']) == {'A', 'B', 'C'}


def test_excel_report(tmp_path):
    outcome = pipeline.run_pipeline(seissol_family(2, kernels=('volume',)), make_config())
    (path,) = write_reports(outcome, tmp_path, json_report=False, excel_report=True)
    workbook = load_workbook(path)
    assert workbook.sheetnames == ['Podsumowanie', 'Deskryptory', 'Układy', 'Diagnostyka']


def test_cli_compile_writes_outputs(kernel_file, tmp_path):
    out = tmp_path / 'out'
    assert main.main(['compile', str(kernel_file), '--out-dir', str(out), '--align', '4']) == main.EXIT_OK
    for name in ('demo_kernels.c', 'demo_tensors.h', 'demo.kernels', 'demo_tests.py', 'demo_report.json'):
        assert (out / name).exists(), name
    report = json.loads((out / 'demo_report.json').read_text(encoding='utf-8'))
    assert report['alignment'] == 4
    assert report['kernels'][0]['symbol'] == 'demo_gemm'
    assert 'def test_kernel_matches_naive' in (out / 'demo_tests.py').read_text(encoding='utf-8')


def test_cli_report_skips_code(kernel_file, tmp_path):
    out = tmp_path / 'out'
    assert main.main(['report', str(kernel_file), '--out-dir', str(out)]) == main.EXIT_OK
    assert not (out / 'demo_kernels.c').exists()


def test_cli_syntax_error(tmp_path):
    path = tmp_path / 'broken.kernels'
    path.write_text("tensor A(2, 2)\nkernel k {\n  A['ij'] <=\n}\n", encoding='utf-8')
    assert main.main(['compile', str(path), '--emit', 'none', '--out-dir', str(tmp_path)]) == main.EXIT_DIAGNOSTICS


def test_cli_check(kernel_file):
    assert main.main(['check', str(kernel_file)]) == main.EXIT_OK
    assert main.main(['check', 'corpus:seissol:order=2', '--numeric', '--seeds', '2']) == main.EXIT_OK


def test_cli_oracle(kernel_file, tmp_path, capsys):
    assert main.main(['oracle', str(kernel_file), '--out-dir', str(tmp_path)]) == main.EXIT_OK
    assert '❌' not in capsys.readouterr().out


def test_cli_internal_error(kernel_file, tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(pipeline, 'run_pipeline', broken)
    assert main.main(['compile', str(kernel_file), '--out-dir', str(tmp_path)]) == main.EXIT_INTERNAL
