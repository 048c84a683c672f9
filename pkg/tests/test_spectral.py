import numpy as np
import pytest
from numpy.testing import assert_allclose

from randssm.errors import (CombinatorialCap, DefectiveMatrix, PairSplit,
                            UnstableSpectrum)
from randssm.spectral import (check_nonresonance, compute_spectrum,
                              slow_subspace, spectral_gap,
                              spectral_quotient, subspace_of_dimension)


def rotation_block(rate, freq):
    return np.array([[rate, freq], [-freq, rate]])


def stacked(*blocks):
    return np.asarray(
        np.block([[b if i == j else np.zeros((b.shape[0], c.shape[1]))
                   for j, c in enumerate(blocks)]
                  for i, b in enumerate(blocks)]))


def test_quarter_car_eigenvalues_frozen(quarter_car_fos):
    spec = compute_spectrum(quarter_car_fos.A)
    expected = np.array([
        -0.1301664194 + 7.7944733335j,
        -0.1301664194 - 7.7944733335j,
        -3.3139806435 + 52.6363357624j,
        -3.3139806435 - 52.6363357624j,
    ])
    assert_allclose(spec.eigenvalues, expected, rtol=1e-8)
    assert spec.block_sizes == (2, 2)
    assert spectral_quotient(spec) == 25
    assert spectral_gap(spec, 2) == 25


def test_ordering_slowest_first():
    A = stacked(rotation_block(-5.0, 2.0), rotation_block(-0.5, 9.0),
                np.array([[-2.0]]))
    spec = compute_spectrum(A)
    rates = spec.eigenvalues.real
    assert_allclose(sorted(-rates), -rates[np.argsort(-rates)])
    assert rates[0] == pytest.approx(-0.5)
    assert rates[-1] == pytest.approx(-5.0)
    # conjugate partners are adjacent, positive imaginary part first
    assert spec.eigenvalues[0].imag > 0
    assert spec.eigenvalues[1] == spec.eigenvalues[0].conjugate()


def test_left_right_bases_are_inverse():
    A = stacked(rotation_block(-1.0, 3.0), rotation_block(-4.0, 11.0))
    spec = compute_spectrum(A)
    assert_allclose(spec.T_L @ spec.T_R, np.eye(4), atol=1e-12)
    sub = slow_subspace(spec, 1)
    assert_allclose(sub.VE_L @ sub.VE_R, np.eye(2), atol=1e-12)
    # the subspace is A-invariant: A VE_R = VE_R AE
    assert_allclose(A @ sub.VE_R, sub.VE_R @ sub.AE, atol=1e-10)


def test_complement_projector_identities():
    A = stacked(rotation_block(-1.0, 3.0), rotation_block(-4.0, 11.0),
                np.array([[-9.0]]))
    spec = compute_spectrum(A)
    sub = slow_subspace(spec, 1)
    P = sub.complement_projector
    assert_allclose(P @ P, P, atol=1e-12)
    assert_allclose(sub.VE_L @ P, np.zeros((2, 5)), atol=1e-12)
    assert_allclose(P @ sub.VE_R, np.zeros((5, 2)), atol=1e-12)


def test_block_table_layout(quarter_car_fos):
    spec = compute_spectrum(quarter_car_fos.A)
    rows = list(spec.block_table())
    assert len(rows) == 4
    assert [r[1] for r in rows] == [0, 0, 1, 1]


def test_unstable_and_defective_rejected():
    with pytest.raises(UnstableSpectrum):
        compute_spectrum(np.array([[1.0]]))
    with pytest.raises(UnstableSpectrum):
        compute_spectrum(rotation_block(0.0, 2.0))
    with pytest.raises(DefectiveMatrix):
        compute_spectrum(np.array([[-1.0, 1.0], [0.0, -1.0]]))


def test_pair_split_detection():
    A = stacked(rotation_block(-1.0, 3.0), rotation_block(-4.0, 11.0))
    spec = compute_spectrum(A)
    with pytest.raises(PairSplit):
        subspace_of_dimension(spec, 1)
    with pytest.raises(PairSplit):
        subspace_of_dimension(spec, 3)
    assert subspace_of_dimension(spec, 2).d == 2
    with pytest.raises(PairSplit):
        spectral_gap(spec, 1)


def test_resonant_triple_is_detected():
    # 3*(-1 + 10i) = -3 + 30i lands exactly on the outer pair
    A = stacked(rotation_block(-1.0, 10.0), rotation_block(-3.0, 30.0))
    spec = compute_spectrum(A)
    hits = check_nonresonance(spec, 2, 3)
    assert any(h.exponents == (3, 0) for h in hits)
    for h in hits:
        assert h.defect < 1e-6 * 30.0
    # order 2 alone cannot reach the outer eigenvalue
    assert check_nonresonance(spec, 2, 2) == []


def test_irrational_spacing_has_no_resonances():
    A = stacked(rotation_block(-1.0, 1.0),
                rotation_block(-7.0, np.sqrt(2.0)))
    spec = compute_spectrum(A)
    assert check_nonresonance(spec, 2, 5) == []


def test_resonance_scan_budget():
    A = np.diag(-np.linspace(1.0, 30.0, 14))
    spec = compute_spectrum(A)
    with pytest.raises(CombinatorialCap):
        check_nonresonance(spec, 12, 25)


def test_slow_subspace_counts_blocks():
    A = stacked(np.array([[-0.5]]), rotation_block(-2.0, 4.0),
                np.array([[-8.0]]))
    spec = compute_spectrum(A)
    assert slow_subspace(spec, 1).d == 1
    assert slow_subspace(spec, 2).d == 3
    with pytest.raises(ValueError):
        slow_subspace(spec, 4)


def test_building_gap_and_quotient(building_fos):
    _, fos = building_fos
    spec = compute_spectrum(fos.A)
    assert spec.block_sizes[0] == 2
    assert spectral_quotient(spec) == 175
    assert spectral_gap(spec, 2) == 8
