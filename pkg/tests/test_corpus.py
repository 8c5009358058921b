"""
Testy korpusów kerneli: poprawność numeryczna, stosunki flopów, kolejność MRA
"""

import pytest
from conftest import make_config

from corpus import (basis_size, corpus_family, face_basis_size, lina_family, mra_family,
                    seissol_family, stiffness_pattern, write_corpus)
from kernel_checks import check_family
from parsers import parse_file
from pipeline import run_pipeline, verify_family


def test_basis_sizes():
    assert [basis_size(d) for d in range(4)] == [1, 4, 10, 20]
    assert face_basis_size(3) == 10


def test_stiffness_uses_first_columns():
    pattern = stiffness_pattern(3)
    assert pattern.extents == (20, 20)
    assert not pattern.grid[:, 10:].any()
    assert pattern.grid[:, :10].any(axis=0).all()


@pytest.mark.parametrize('order,expected', [(4, 0.5), (6, 0.375)])
def test_volume_eqspp_ratio(order, expected):
    outcome = run_pipeline(seissol_family(order, kernels=('volume',)), make_config())
    assert outcome.artifact('volume').flops.eqspp_ratio == pytest.approx(expected, rel=0.01)


@pytest.mark.parametrize('family', [
    seissol_family(2),
    seissol_family(3),
    seissol_family(3, simulations=8, kernels=('volume', 'neighbour_flux')),
    lina_family(3, 2),
    lina_family(3, 3),
    mra_family(4, 2),
    mra_family(4, 1, pretransposed=True),
], ids=lambda f: f.name)
def test_corpus_kernels_match_naive(family):
    outcome = run_pipeline(family, make_config())
    assert outcome.success
    assert len(outcome.artifacts) == len(family.kernels)
    for result in check_family(outcome.artifacts, seeds=(0, 1)):
        assert result.passed, result.describe()
    for artifact in outcome.artifacts:
        assert artifact.flops.nonzero <= artifact.flops.hardware


def test_single_precision_tolerance():
    outcome = run_pipeline(seissol_family(3, kernels=('volume',)), make_config(precision='single'))
    (result,) = check_family(outcome.artifacts)
    assert result.tolerance == 1e-5
    assert result.passed, result.describe()


def test_aligned_corpus():
    outcome = run_pipeline(seissol_family(3, kernels=('volume', 'local_flux')), make_config(alignment=4))
    for result in check_family(outcome.artifacts):
        assert result.passed, result.describe()


@pytest.mark.parametrize('q', [1, 2])
def test_mra_schedule_is_optimal(q):
    rows = [r for r in verify_family(mra_family(4, q), make_config()) if r['check'] == 'schedule']
    assert rows
    for row in rows:
        assert row['found'] == row['oracle']


def test_pretransposed_mra_has_no_transposes():
    artifact = run_pipeline(mra_family(4, 2, pretransposed=True), make_config()).artifact('mra')
    descriptors = [call.action.rhs.descriptor for call in artifact.calls if call.kind == 'log']
    assert descriptors
    assert not any(d.trans_a or d.trans_b for d in descriptors)


def test_corpus_family_spec():
    family = corpus_family('mra:p=4,q=2,pretransposed=true')
    assert family.name == 'mra_p4_q2_t'
    assert corpus_family('seissol:order=3,simulations=8').name == 'seissol_o3_s8'
    with pytest.raises(ValueError):
        corpus_family('unknown')


def test_written_corpus_parses_back(tmp_path):
    family = seissol_family(2)
    again = parse_file(write_corpus(family, tmp_path))
    assert [k.name for k in again.kernels] == [k.name for k in family.kernels]
    assert again.tensors['kXi'].spp == family.tensors['kXi'].spp
