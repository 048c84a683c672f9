"""Autonomous slow spectral submanifolds as polynomial graphs.

The manifold is computed order by order in complex modal coordinates: write
the state as ``x = V y`` with V the complex eigenbasis, split the modal
coordinates into slow ones ``p`` (the first d) and fast ones, and seek the
fast rows as polynomial series ``w_j(p)`` while the slow rows stay the
identity (graph style).  Matching monomial coefficients in the invariance
equation ``A W + F(W) = DW R`` decouples into scalar solves

    (lambda_j - <m, lambda_slow>) w_{j,m} = cross_{j,m} - [U F(V w)]_{j,m}

per fast row j and monomial m, with the tangent rows feeding the reduced
dynamics ``r_{l,m} = [U F(V w)]_{l,m}`` instead.  The complex series are
finally substituted with the linear change of variables back to the real
slow coordinates, where all coefficients are real by conjugate symmetry.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import (DimensionMismatch, InnerOuterResonance,
                     SmallDivisorWarning)
from .polynomial import (PolynomialMap, graded_monomials, monomials_of_degree)
from .spectral import SpectralSubspace, check_nonresonance, spectral_quotient
from .systems import FirstOrderSystem

#: divisors below this (relative to ||A||) are flagged, but still inverted
SMALL_DIVISOR_TOL = 1e-8

#: residual imaginary part allowed after the return to real coordinates
IMAG_RESIDUE_TOL = 1e-10


class SmallDivisorRecord(NamedTuple):
    """A near-resonant denominator met during the order-by-order solve."""

    exponents: tuple
    row: int
    magnitude: float


# ---------------------------------------------------------------------------
# truncated series helpers (exponent tuple -> complex coefficient)
# ---------------------------------------------------------------------------

def _series_add(target: dict, source: dict, factor=1.0) -> None:
    for m, c in source.items():
        target[m] = target.get(m, 0.0) + factor * c


def _series_mul(a: dict, b: dict, max_order: int) -> dict:
    out: dict = {}
    for ma, ca in a.items():
        oa = sum(ma)
        for mb, cb in b.items():
            if oa + sum(mb) > max_order:
                continue
            m = tuple(i + j for i, j in zip(ma, mb))
            out[m] = out.get(m, 0.0) + ca * cb
    return out


def _series_pow(a: dict, e: int, max_order: int, cache: dict) -> dict:
    if e == 0:
        raise ValueError("zeroth powers are not used")
    key = (id(a), e)
    hit = cache.get(key)
    if hit is not None:
        return hit
    out = a if e == 1 else _series_mul(
        _series_pow(a, e - 1, max_order, cache), a, max_order)
    cache[key] = out
    return out


def _series_diff(a: dict, var: int) -> dict:
    out: dict = {}
    for m, c in a.items():
        e = m[var]
        if e:
            dm = list(m)
            dm[var] -= 1
            out[tuple(dm)] = out.get(tuple(dm), 0.0) + e * c
    return out


def _series_of_order(a: dict, order: int) -> dict:
    return {m: c for m, c in a.items() if sum(m) == order}


def _compose_polynomial(pmap: PolynomialMap, inputs: list, max_order: int,
                        cache: dict) -> list:
    """Series of p(inputs) truncated at max_order; inputs are series."""
    out = [dict() for _ in range(pmap.output_dim)]
    for exps, row, coeff in pmap.terms:
        prod: Optional[dict] = None
        for var, e in enumerate(exps):
            if e == 0:
                continue
            factor = _series_pow(inputs[var], e, max_order, cache)
            prod = factor if prod is None else _series_mul(prod, factor,
                                                           max_order)
            if prod is not None and not prod:
                break
        if prod:
            _series_add(out[row], prod, coeff)
    return out


def _substitute_linear(series: dict, lin_forms: list, max_order: int,
                       pow_cache: dict) -> dict:
    """Substitute p_l = lin_forms[l] (a linear series) into a series in p."""
    out: dict = {}
    for m, c in series.items():
        prod: Optional[dict] = None
        for var, e in enumerate(m):
            if e == 0:
                continue
            factor = _series_pow(lin_forms[var], e, max_order, pow_cache)
            prod = factor if prod is None else _series_mul(prod, factor,
                                                           max_order)
        if prod is None:
            raise ValueError("constant terms cannot appear")
        _series_add(out, prod, c)
    return out


# ---------------------------------------------------------------------------
# expansion container
# ---------------------------------------------------------------------------

@dataclass
class SSMExpansion:
    """Polynomial parametrization W and reduced dynamics R of a slow manifold.

    Coefficients are tabulated on the canonical graded-lexicographic
    monomial list over the d reduced coordinates, orders 1..order.  The
    linear part of W equals the subspace basis exactly, and every
    higher-order W coefficient is annihilated by the left basis (graph
    style).
    """

    subspace: SpectralSubspace
    order: int
    monomials: tuple
    W: np.ndarray  # (n_monomials, dim)
    R: np.ndarray  # (n_monomials, d)
    small_divisors: tuple = ()
    conjugate_defect: float = 0.0
    validity_radius: Optional[float] = None
    _powers_cache: dict = field(default_factory=dict, repr=False)
    _residual_cache: dict = field(default_factory=dict, repr=False)

    @property
    def d(self) -> int:
        return self.subspace.d

    @property
    def dim(self) -> int:
        return self.subspace.dim

    def _exponent_array(self) -> np.ndarray:
        key = "exponents"
        if key not in self._powers_cache:
            self._powers_cache[key] = np.array(self.monomials, dtype=np.int64)
        return self._powers_cache[key]

    def monomial_values(self, xi: np.ndarray) -> np.ndarray:
        """All tabulated monomials evaluated at xi, shape (..., n_monomials)."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.d:
            raise DimensionMismatch(
                f"reduced state has {xi.shape[-1]} entries, expected {self.d}")
        E = self._exponent_array()
        return np.prod(np.power(xi[..., None, :], E), axis=-1)

    def truncated(self, order: int) -> "SSMExpansion":
        """The same expansion cut at a lower order (coefficients coincide)."""
        if not 1 <= order <= self.order:
            raise ValueError(f"order must be in 1..{self.order}")
        keep = [i for i, m in enumerate(self.monomials) if sum(m) <= order]
        return SSMExpansion(
            subspace=self.subspace, order=order,
            monomials=tuple(self.monomials[i] for i in keep),
            W=self.W[keep].copy(), R=self.R[keep].copy(),
            small_divisors=tuple(r for r in self.small_divisors
                                 if sum(r.exponents) <= order),
            conjugate_defect=self.conjugate_defect)


def evaluate_parametrization(expansion: SSMExpansion,
                             xi: np.ndarray) -> np.ndarray:
    """Full state W(xi) on the manifold; batched over leading axes of xi."""
    return expansion.monomial_values(xi) @ expansion.W


def evaluate_reduced_rhs(expansion: SSMExpansion, xi: np.ndarray) -> np.ndarray:
    """Autonomous reduced vector field R(xi); batched like the inputs."""
    return expansion.monomial_values(xi) @ expansion.R


def parametrization_jacobian(expansion: SSMExpansion,
                             xi: np.ndarray) -> np.ndarray:
    """DW(xi), shape (..., dim, d), from the analytic monomial derivatives."""
    xi = np.asarray(xi, dtype=float)
    E = expansion._exponent_array()
    out = np.zeros(xi.shape[:-1] + (expansion.dim, expansion.d))
    for var in range(expansion.d):
        Ev = E.copy()
        mask = Ev[:, var] > 0
        factors = Ev[:, var].astype(float)
        Ev[mask, var] -= 1
        mono = np.prod(np.power(xi[..., None, :], Ev), axis=-1) * factors
        out[..., var] = mono @ expansion.W
    return out


# ---------------------------------------------------------------------------
# the order-by-order solve
# ---------------------------------------------------------------------------

def compute_autonomous_ssm(fos: FirstOrderSystem, sub: SpectralSubspace,
                           order: int) -> SSMExpansion:
    """Expand the slow manifold of the unforced system to a given order.

    Requires the nonresonance scan up to min(order, spectral quotient) to
    come back empty; near-resonant divisors merely emit
    :class:`SmallDivisorWarning` and are recorded on the result.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    spec = sub.spectral
    if fos.A.shape != spec.A.shape or not np.array_equal(fos.A, spec.A):
        raise DimensionMismatch(
            "subspace was computed from a different matrix than fos.A")
    d, n = sub.d, sub.dim
    sigma = spectral_quotient(spec)
    hits = check_nonresonance(spec, d, min(order, sigma))
    if hits:
        raise InnerOuterResonance(
            f"{len(hits)} inner-outer resonances up to order "
            f"{min(order, sigma)}: {hits[:5]}")

    lam = spec.eigenvalues
    lam_slow = lam[:d]
    U, V = spec.modal_U, spec.modal_V
    scale = np.linalg.norm(fos.A, 2) or 1.0

    def unit(j):
        m = [0] * d
        m[j] = 1
        return tuple(m)

    # tangent rows are the identity; fast rows start empty
    w = [dict() for _ in range(n)]
    for j in range(d):
        w[j][unit(j)] = 1.0 + 0.0j
    r2 = [dict() for _ in range(d)]  # reduced terms of order >= 2
    small: list[SmallDivisorRecord] = []

    for k in range(2, order + 1):
        cache: dict = {}
        x_series = [dict() for _ in range(n)]
        for i in range(n):
            for j in range(n):
                if w[j]:
                    _series_add(x_series[i], w[j], V[i, j])
        Fx = _compose_polynomial(fos.F, x_series, k, cache)
        rhs_k = [dict() for _ in range(n)]
        for j in range(n):
            for o in range(n):
                _series_add(rhs_k[j], _series_of_order(Fx[o], k), U[j, o])

        for j in range(d):
            for m, c in rhs_k[j].items():
                if c != 0.0:
                    r2[j][m] = c

        for j in range(d, n):
            cross: dict = {}
            for l in range(d):
                dw = _series_diff(w[j], l)
                if dw and r2[l]:
                    _series_add(cross,
                                _series_of_order(
                                    _series_mul(dw, r2[l], k), k))
            for m in monomials_of_degree(d, k):
                val = cross.get(m, 0.0) - rhs_k[j].get(m, 0.0)
                divisor = lam[j] - complex(np.dot(m, lam_slow))
                if abs(divisor) < SMALL_DIVISOR_TOL * scale:
                    small.append(SmallDivisorRecord(m, j, abs(divisor)))
                    warnings.warn(
                        f"near-resonant divisor |{divisor:.3e}| for row {j}, "
                        f"monomial {m}; solving anyway", SmallDivisorWarning)
                if val != 0.0:
                    w[j][m] = val / divisor

    conj_defect = _conjugate_defect(w, spec.block_sizes, d)

    # back to real coordinates: p = S xi
    S = U[:d, :] @ sub.VE_R
    S_inv = np.linalg.inv(S)
    lin_forms = [{unit(j): S[l, j] for j in range(d) if S[l, j] != 0.0}
                 for l in range(d)]
    pow_cache: dict = {}
    monomials = graded_monomials(d, 1, order)
    index = {m: i for i, m in enumerate(monomials)}
    W_tab = np.zeros((len(monomials), n), dtype=complex)
    R_tab = np.zeros((len(monomials), d), dtype=complex)

    for j in range(n):
        sub_series = _substitute_linear(w[j], lin_forms, order, pow_cache)
        for m, c in sub_series.items():
            row = index[m]
            W_tab[row] += c * V[:, j]
    for l in range(d):
        if not r2[l]:
            continue
        sub_series = _substitute_linear(r2[l], lin_forms, order, pow_cache)
        for m, c in sub_series.items():
            R_tab[index[m]] += c * S_inv[:, l]

    imag_peak = max(np.abs(W_tab.imag).max(), np.abs(R_tab.imag).max())
    coeff_scale = max(1.0, np.abs(W_tab.real).max(), np.abs(R_tab.real).max())
    if imag_peak > IMAG_RESIDUE_TOL * coeff_scale:
        raise ArithmeticError(
            f"imaginary residue {imag_peak:.3e} after the return to real "
            "coordinates; conjugate symmetry is broken")
    W_real = W_tab.real.copy()
    R_real = R_tab.real.copy()
    # linear parts are known exactly
    for j in range(d):
        W_real[index[unit(j)]] = sub.VE_R[:, j]
        R_real[index[unit(j)]] = sub.AE[:, j]

    expansion = SSMExpansion(subspace=sub, order=order, monomials=monomials,
                             W=W_real, R=R_real,
                             small_divisors=tuple(small),
                             conjugate_defect=conj_defect)
    expansion.validity_radius = _validity_radius(expansion)
    return expansion


def _conjugate_defect(w: list, block_sizes, d: int) -> float:
    conj_row = {}
    pos = 0
    for size in block_sizes:
        if size == 1:
            conj_row[pos] = pos
        else:
            conj_row[pos] = pos + 1
            conj_row[pos + 1] = pos
        pos += size
    slow_pairs = []
    pos = 0
    for size in block_sizes:
        if pos >= d:
            break
        slow_pairs.append((pos, size))
        pos += size

    def conj_m(m):
        out = list(m)
        for start, size in slow_pairs:
            if size == 2:
                out[start], out[start + 1] = out[start + 1], out[start]
        return tuple(out)

    defect = 0.0
    scale = max(max((abs(c) for series in w for c in series.values()),
                    default=1.0), 1.0)
    for j, series in enumerate(w):
        mate = w[conj_row[j]]
        for m, c in series.items():
            defect = max(defect, abs(mate.get(conj_m(m), 0.0) - c.conjugate()))
    return defect / scale


def _validity_radius(expansion: SSMExpansion, rel_tol: float = 0.01
                     ) -> Optional[float]:
    """Largest probe amplitude where the top two orders agree within 1%.

    A heuristic: evaluates the parametrization at its full order and with
    the highest order dropped along deterministic random directions and
    returns the largest amplitude (log-spaced scan) where the relative
    difference stays below ``rel_tol``.
    """
    if expansion.order < 2:
        return None
    lower = expansion.truncated(expansion.order - 1)
    rng = np.random.default_rng(1234)
    dirs = rng.normal(size=(8, expansion.d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for s in np.geomspace(1.0, 1e-6, 49):
        xi = s * dirs
        full = evaluate_parametrization(expansion, xi)
        cut = evaluate_parametrization(lower, xi)
        denom = np.maximum(np.linalg.norm(full, axis=-1), 1e-300)
        rel = np.linalg.norm(full - cut, axis=-1) / denom
        if np.max(rel) < rel_tol:
            return float(s)
    return None


# ---------------------------------------------------------------------------
# invariance residual
# ---------------------------------------------------------------------------

def _residual_polynomial(fos: FirstOrderSystem, expansion: SSMExpansion):
    """Coefficients of A W(xi) + F(W(xi)) - DW(xi) R(xi) as one table.

    Computing the residual symbolically first and evaluating afterwards
    avoids the catastrophic cancellation of evaluating the three terms
    separately at small amplitudes.  Coefficients with total degree at
    most the expansion order vanish identically: those are exactly the
    equations the order-by-order solve satisfied.  What the assembly
    leaves behind at those degrees is roundoff from the eigenbasis and
    the coefficient arithmetic, which would otherwise swamp the genuine
    leading-order defect at small amplitudes.  The remnants are checked
    against a roundoff ceiling (a wrong solve would leave order-one
    relative remnants and trip it) and then excluded from the table.
    """
    d, n, N = expansion.d, expansion.dim, expansion.order
    max_order = max(N * max(fos.F.degree, 1), 2 * N - 1)
    res: dict = {}

    def add(m, vec):
        if m in res:
            res[m] = res[m] + vec
        else:
            res[m] = np.array(vec, dtype=float)

    for m, wvec in zip(expansion.monomials, expansion.W):
        add(m, fos.A @ wvec)

    x_series = [
        {m: expansion.W[i, row] for i, m in enumerate(expansion.monomials)
         if expansion.W[i, row] != 0.0}
        for row in range(n)
    ]
    cache: dict = {}
    Fx = _compose_polynomial(fos.F, x_series, max_order, cache)
    for row, series in enumerate(Fx):
        for m, c in series.items():
            vec = np.zeros(n)
            vec[row] = c.real if isinstance(c, complex) else c
            add(m, vec)

    r_series = [
        {m: expansion.R[i, l] for i, m in enumerate(expansion.monomials)
         if expansion.R[i, l] != 0.0}
        for l in range(d)
    ]
    for row in range(n):
        w_row = {m: expansion.W[i, row]
                 for i, m in enumerate(expansion.monomials)
                 if expansion.W[i, row] != 0.0}
        for l in range(d):
            dw = _series_diff(w_row, l)
            if not dw:
                continue
            prod = _series_mul(dw, r_series[l], max_order)
            for m, c in prod.items():
                vec = np.zeros(n)
                vec[row] = -c
                add(m, vec)

    scale = np.linalg.norm(fos.A, 2) * max(1.0, float(np.abs(expansion.W).max()))
    scale = max(scale, float(np.abs(expansion.R).max()))
    remnant = 0.0
    for m in list(res):
        if sum(m) <= N:
            remnant = max(remnant, float(np.abs(res[m]).max()))
            del res[m]
    if remnant > 1e-6 * scale:
        raise ArithmeticError(
            f"solved orders leave residual coefficients of size {remnant:.3e} "
            f"against scale {scale:.3e}; the expansion does not satisfy its "
            f"own equations")

    monomials = tuple(sorted(res, key=lambda m: (sum(m), m)))
    if monomials:
        table = np.stack([res[m] for m in monomials])
        E = np.array(monomials, dtype=np.int64)
    else:
        table = np.zeros((0, n))
        E = np.zeros((0, d), dtype=np.int64)
    return E, table


def invariance_residual(fos: FirstOrderSystem, expansion: SSMExpansion,
                        xi: np.ndarray) -> float | np.ndarray:
    """Norm of the invariance defect A W + F(W) - DW R at reduced points.

    Accepts a single point (shape (d,)) or a batch (..., d); returns the
    matching scalar or array of Euclidean norms.
    """
    key = id(fos)
    if key not in expansion._residual_cache:
        expansion._residual_cache[key] = _residual_polynomial(fos, expansion)
    E, table = expansion._residual_cache[key]
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != expansion.d:
        raise DimensionMismatch(
            f"reduced state has {xi.shape[-1]} entries, expected "
            f"{expansion.d}")
    mono = np.prod(np.power(xi[..., None, :], E), axis=-1)
    vals = mono @ table
    norms = np.linalg.norm(vals, axis=-1)
    return float(norms) if norms.ndim == 0 else norms


def invariance_residual_direct(fos: FirstOrderSystem,
                               expansion: SSMExpansion,
                               xi: np.ndarray) -> float | np.ndarray:
    """Same defect evaluated term by term; cross-checks the symbolic path."""
    from .polynomial import eval_polynomial
    xi = np.asarray(xi, dtype=float)
    W = evaluate_parametrization(expansion, xi)
    R = evaluate_reduced_rhs(expansion, xi)
    DW = parametrization_jacobian(expansion, xi)
    vals = (W @ fos.A.T + eval_polynomial(fos.F, W)
            - np.einsum("...ij,...j->...i", DW, R))
    norms = np.linalg.norm(vals, axis=-1)
    return float(norms) if norms.ndim == 0 else norms


def coefficient_rows(expansion: SSMExpansion):
    """Flat (target, order, exponents, index, coefficient) rows for export."""
    for i, m in enumerate(expansion.monomials):
        for row in range(expansion.dim):
            yield ("W", sum(m), m, row, float(expansion.W[i, row]))
        for row in range(expansion.d):
            yield ("R", sum(m), m, row, float(expansion.R[i, row]))
