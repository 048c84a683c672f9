import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from randssm.errors import DimensionMismatch
from randssm.polynomial import (PolynomialMap, eval_polynomial,
                                graded_monomials, jacobian_polynomial,
                                monomials_of_degree)


def cubic_pair():
    # f(x, y) = (3x^2 - y^3, x*y)
    return PolynomialMap.from_terms(2, 2, [
        ((2, 0), 0, 3.0),
        ((0, 3), 0, -1.0),
        ((1, 1), 1, 1.0),
    ])


def test_eval_hand_values():
    p = cubic_pair()
    out = eval_polynomial(p, np.array([2.0, -1.0]))
    assert_allclose(out, [13.0, -2.0], rtol=0, atol=0)


def test_eval_batched_matches_loop():
    p = cubic_pair()
    pts = np.random.default_rng(3).normal(size=(7, 5, 2))
    batched = eval_polynomial(p, pts)
    for idx in np.ndindex(7, 5):
        assert_allclose(batched[idx], eval_polynomial(p, pts[idx]))


def test_zero_map():
    z = PolynomialMap.zero(3, 2)
    assert z.degree == 0
    assert eval_polynomial(z, np.ones(3)).tolist() == [0.0, 0.0]
    assert jacobian_polynomial(z, np.ones(3)).tolist() == [[0.0] * 3] * 2


def test_canonicalization_merges_and_drops():
    p = PolynomialMap.from_terms(2, 1, [
        ((2, 0), 0, 1.5),
        ((2, 0), 0, 0.5),
        ((1, 1), 0, 4.0),
        ((1, 1), 0, -4.0),
    ])
    assert p.terms == (((2, 0), 0, 2.0),)


def test_term_ordering_is_by_output_then_degree():
    p = PolynomialMap.from_terms(2, 2, [
        ((0, 3), 1, 1.0),
        ((2, 0), 1, 1.0),
        ((1, 1), 0, 1.0),
    ])
    keys = [(out, sum(e)) for e, out, _ in p.terms]
    assert keys == sorted(keys)


def test_rejects_low_degree_and_bad_indices():
    with pytest.raises(ValueError):
        PolynomialMap.from_terms(2, 1, [((1, 0), 0, 1.0)])
    with pytest.raises(ValueError):
        PolynomialMap.from_terms(2, 1, [((2, -1), 0, 1.0)])
    with pytest.raises(DimensionMismatch):
        PolynomialMap.from_terms(2, 1, [((2, 0), 1, 1.0)])
    with pytest.raises(DimensionMismatch):
        PolynomialMap.from_terms(2, 1, [((2, 0, 0), 0, 1.0)])


def test_jacobian_matches_finite_differences():
    p = cubic_pair()
    x = np.array([0.7, -0.4])
    J = jacobian_polynomial(p, x)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (eval_polynomial(p, x + e) - eval_polynomial(p, x - e)) / (2 * h)
        assert_allclose(J[:, j], fd, rtol=1e-8, atol=1e-8)


def test_apply_linear_mixes_rows():
    p = cubic_pair()
    L = np.array([[2.0, 1.0], [0.0, -1.0], [1.0, 0.0]])
    q = p.apply_linear(L)
    x = np.array([1.3, 0.2])
    assert_allclose(eval_polynomial(q, x), L @ eval_polynomial(p, x),
                    rtol=1e-14)
    assert q.output_dim == 3


def test_apply_linear_drops_cancelled_terms():
    p = PolynomialMap.from_terms(1, 2, [((2,), 0, 1.0), ((2,), 1, 1.0)])
    q = p.apply_linear(np.array([[1.0, -1.0]]))
    assert q.terms == ()


def test_addition_is_pointwise():
    a = cubic_pair()
    b = PolynomialMap.from_terms(2, 2, [((0, 2), 1, 5.0)])
    x = np.array([-0.3, 0.9])
    assert_allclose(eval_polynomial(a + b, x),
                    eval_polynomial(a, x) + eval_polynomial(b, x),
                    rtol=1e-15)
    with pytest.raises(DimensionMismatch):
        a + PolynomialMap.zero(3, 2)


def test_monomial_enumeration():
    assert monomials_of_degree(2, 2) == ((0, 2), (1, 1), (2, 0))
    from math import comb
    for n_vars, deg in [(1, 4), (2, 3), (3, 5), (4, 2)]:
        mons = monomials_of_degree(n_vars, deg)
        assert len(mons) == comb(n_vars + deg - 1, deg)
        assert all(sum(m) == deg for m in mons)
        assert len(set(mons)) == len(mons)
    graded = graded_monomials(2, 2, 4)
    assert [sum(m) for m in graded] == sorted(sum(m) for m in graded)
    assert len(graded) == 3 + 4 + 5


@st.composite
def poly_and_points(draw):
    n_in = draw(st.integers(1, 3))
    n_out = draw(st.integers(1, 2))
    n_terms = draw(st.integers(0, 6))
    terms = []
    for _ in range(n_terms):
        exps = draw(st.lists(st.integers(0, 3), min_size=n_in,
                             max_size=n_in))
        if sum(exps) < 2:
            exps[0] += 2
        out = draw(st.integers(0, n_out - 1))
        coeff = draw(st.floats(-3, 3, allow_nan=False))
        terms.append((tuple(exps), out, coeff))
    x = np.array(draw(st.lists(st.floats(-1.5, 1.5), min_size=n_in,
                               max_size=n_in)))
    return PolynomialMap.from_terms(n_in, n_out, terms), terms, x


@given(poly_and_points())
@settings(max_examples=60, deadline=None)
def test_eval_agrees_with_naive_sum(data):
    p, terms, x = data
    expected = np.zeros(p.output_dim)
    for exps, out, coeff in terms:
        expected[out] += coeff * np.prod(np.power(x, exps))
    assert_allclose(eval_polynomial(p, x), expected, rtol=1e-10, atol=1e-10)


@given(poly_and_points())
@settings(max_examples=40, deadline=None)
def test_vanishes_to_first_order_at_origin(data):
    # degree >= 2 for every term means p(0) = 0 and Dp(0) = 0 exactly
    p, _, _ = data
    origin = np.zeros(p.input_dim)
    assert not eval_polynomial(p, origin).any()
    assert not jacobian_polynomial(p, origin).any()
