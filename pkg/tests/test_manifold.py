import numpy as np
import pytest
from numpy.testing import assert_allclose

from randssm.errors import DimensionMismatch, InnerOuterResonance
from randssm.manifold import (SmallDivisorWarning, SSMExpansion,
                              compute_autonomous_ssm,
                              evaluate_parametrization, evaluate_reduced_rhs,
                              invariance_residual, invariance_residual_direct,
                              parametrization_jacobian)
from randssm.models import make_model
from randssm.polynomial import PolynomialMap
from randssm.spectral import compute_spectrum, slow_subspace
from randssm.systems import FirstOrderSystem, to_first_order


def residual_slope(fos, expansion, seed=11):
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(10, expansion.d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    amps = np.geomspace(1e-4, 1e-2, 9)
    res = np.array([[invariance_residual(fos, expansion, a * u)
                     for a in amps] for u in dirs]).max(axis=0)
    return np.polyfit(np.log(amps), np.log(res), 1)[0]


@pytest.mark.parametrize("order", [3, 5, 7])
def test_residual_order_scaling(quarter_car_fos, order):
    fos = quarter_car_fos
    sub = slow_subspace(compute_spectrum(fos.A), 1)
    expansion = compute_autonomous_ssm(fos, sub, order)
    slope = residual_slope(fos, expansion)
    # generic guarantee is order+1; the cubic-only nonlinearity makes the
    # system odd, the even defect orders vanish, and the slope lands on
    # order+2
    assert slope > order + 0.5
    assert slope == pytest.approx(order + 2, abs=0.2)


def test_graph_property(quarter_car_ssm):
    # the left basis recovers the reduced coordinates exactly: all
    # higher-order coefficients live in the complement
    fos, sub, expansion = quarter_car_ssm
    xi = 0.3 * np.random.default_rng(2).normal(size=(6, 2))
    x = evaluate_parametrization(expansion, xi)
    assert_allclose(x @ sub.VE_L.T, xi, atol=1e-10)


def test_linear_parts_are_exact(quarter_car_ssm):
    fos, sub, expansion = quarter_car_ssm
    for i, m in enumerate(expansion.monomials):
        if sum(m) != 1:
            continue
        var = m.index(1)
        assert_allclose(expansion.W[i], sub.VE_R[:, var], atol=0)
        assert_allclose(expansion.R[i], sub.AE[:, var], atol=0)


def test_reduced_rhs_linearization(quarter_car_ssm):
    fos, sub, expansion = quarter_car_ssm
    xi = np.array([1e-8, -1e-8])
    rhs = evaluate_reduced_rhs(expansion, xi)
    assert_allclose(rhs, sub.AE @ xi, rtol=1e-9)


def test_jacobian_matches_finite_differences(quarter_car_ssm):
    fos, sub, expansion = quarter_car_ssm
    xi = np.array([0.21, -0.13])
    DW = parametrization_jacobian(expansion, xi)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (evaluate_parametrization(expansion, xi + e)
              - evaluate_parametrization(expansion, xi - e)) / (2 * h)
        assert_allclose(DW[:, j], fd, rtol=1e-7, atol=1e-9)


def test_symbolic_residual_matches_direct(quarter_car_ssm):
    fos, sub, expansion = quarter_car_ssm
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(8, 2))
    pts = 0.5 * pts / np.linalg.norm(pts, axis=1, keepdims=True)
    sym = invariance_residual(fos, expansion, pts)
    direct = invariance_residual_direct(fos, expansion, pts)
    # the direct evaluation loses accuracy to cancellation; allow a
    # small relative slack plus its roundoff floor
    assert np.all(np.abs(sym - direct) <= 1e-4 * sym + 1e-13)


def test_whole_space_expansion_is_exact():
    # d = dim: the manifold is the full phase space and the invariance
    # equation is satisfied identically
    fos = to_first_order(make_model("duffing").system)
    sub = slow_subspace(compute_spectrum(fos.A), 1)
    assert sub.d == sub.dim == 2
    expansion = compute_autonomous_ssm(fos, sub, 5)
    pts = np.random.default_rng(8).normal(size=(8, 2))
    assert np.max(invariance_residual(fos, expansion, pts)) == 0.0


def test_truncation_coincides_with_lower_order_build(quarter_car_fos):
    fos = quarter_car_fos
    sub = slow_subspace(compute_spectrum(fos.A), 1)
    full = compute_autonomous_ssm(fos, sub, 5)
    cut = full.truncated(3)
    fresh = compute_autonomous_ssm(fos, sub, 3)
    assert cut.monomials == fresh.monomials
    assert_allclose(cut.W, fresh.W, atol=1e-12)
    assert_allclose(cut.R, fresh.R, atol=1e-12)
    assert max(sum(m) for m in cut.monomials) == 3
    with pytest.raises(ValueError):
        full.truncated(9)


def test_validity_radius_reported(quarter_car_ssm):
    _, _, expansion = quarter_car_ssm
    assert expansion.validity_radius is not None
    assert expansion.validity_radius > 0.0


def block(rate, freq):
    return np.array([[rate, freq], [-freq, rate]])


def two_pair_fos(outer):
    A = np.zeros((4, 4))
    A[:2, :2] = block(-1.0, 10.0)
    A[2:, 2:] = outer
    return FirstOrderSystem(mech=None, dim=4, A=A,
                            F=PolynomialMap.zero(4, 4))


def test_exact_resonance_is_fatal():
    fos = two_pair_fos(block(-3.0, 30.0))
    sub = slow_subspace(compute_spectrum(fos.A), 1)
    with pytest.raises(InnerOuterResonance):
        compute_autonomous_ssm(fos, sub, 3)


def test_near_resonance_warns_beyond_scanned_orders():
    # spectral quotient 2 limits the scan to order 2, so the near-hit at
    # order 3 is solved through a tiny divisor and recorded
    fos = two_pair_fos(block(-2.9999999, 30.0000001))
    sub = slow_subspace(compute_spectrum(fos.A), 1)
    with pytest.warns(SmallDivisorWarning):
        expansion = compute_autonomous_ssm(fos, sub, 3)
    assert len(expansion.small_divisors) > 0
    record = expansion.small_divisors[0]
    assert sum(record.exponents) == 3
    assert record.magnitude < 1e-6


def test_subspace_matrix_mismatch_rejected(quarter_car_fos, building_fos):
    _, fosb = building_fos
    sub = slow_subspace(compute_spectrum(fosb.A), 1)
    with pytest.raises(DimensionMismatch):
        compute_autonomous_ssm(quarter_car_fos, sub, 3)
