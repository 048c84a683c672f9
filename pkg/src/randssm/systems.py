"""Mechanical systems and their first-order form.

A :class:`MechanicalSystem` holds the second-order model
``M q'' + C q' + K q + f(q, q') = g(t)`` with a polynomial nonlinearity
``f`` that vanishes to first order at the origin.  :func:`to_first_order`
rewrites it as ``x' = A x + F(x) + G(t, x)`` in the state ``x = (q, q')``,
factoring the mass matrix once and keeping the factorization for all later
solves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, SingularMass, UnstableOrigin
from .forcing import NoiseSourceConfig
from .polynomial import PolynomialMap, eval_polynomial

#: mass matrices beyond this condition number are treated as singular
MASS_CONDITION_CAP = 1e12

#: relative margin for the strict stability check of the linearization
STABILITY_MARGIN = 1e-12

#: relative tolerance for symmetry / semidefiniteness checks
DEFINITENESS_TOL = 1e-9


def _check_symmetric(name: str, mat: np.ndarray) -> None:
    scale = np.linalg.norm(mat) or 1.0
    if np.linalg.norm(mat - mat.T) > DEFINITENESS_TOL * scale:
        raise ValueError(f"{name} must be symmetric")


def _min_symmetric_eig(mat: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (mat + mat.T)).min())


@dataclass(frozen=True)
class MechanicalSystem:
    """Second-order model M q'' + C q' + K q + f(q, q') = g(t).

    ``nonlinearity`` maps the stacked vector (q, q') to restoring forces, so
    its input dimension is twice ``n_dof``.
    """

    M: np.ndarray
    C: np.ndarray
    K: np.ndarray
    nonlinearity: PolynomialMap

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        C = np.asarray(self.C, dtype=float)
        K = np.asarray(self.K, dtype=float)
        n = M.shape[0]
        for name, mat in (("M", M), ("C", C), ("K", K)):
            if mat.shape != (n, n):
                raise DimensionMismatch(f"{name} must be {n}x{n}")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "K", K)
        _check_symmetric("M", M)
        _check_symmetric("C", C)
        _check_symmetric("K", K)
        if _min_symmetric_eig(M) <= 0.0:
            raise SingularMass("mass matrix must be positive definite")
        if np.linalg.cond(M) > MASS_CONDITION_CAP:
            raise SingularMass(
                f"mass matrix condition number exceeds {MASS_CONDITION_CAP:.1e}")
        for name, mat in (("C", C), ("K", K)):
            floor = -DEFINITENESS_TOL * (np.linalg.norm(mat) or 1.0)
            if _min_symmetric_eig(mat) < floor:
                raise ValueError(f"{name} must be positive semidefinite")
        if self.nonlinearity.input_dim != 2 * n:
            raise DimensionMismatch(
                f"nonlinearity input_dim {self.nonlinearity.input_dim} "
                f"!= 2*n_dof = {2 * n}")
        if self.nonlinearity.output_dim != n:
            raise DimensionMismatch(
                f"nonlinearity output_dim {self.nonlinearity.output_dim} "
                f"!= n_dof = {n}")

    @property
    def n_dof(self) -> int:
        return self.M.shape[0]

    def internal_force(self, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Nonlinear restoring force f(q, q'), batched over leading axes."""
        x = np.concatenate([np.asarray(q, dtype=float),
                            np.asarray(v, dtype=float)], axis=-1)
        return eval_polynomial(self.nonlinearity, x)


@dataclass(frozen=True)
class ForcingSpec:
    """How the random forcing enters the equations of motion.

    ``kind`` is ``"external"`` for g(t) = epsilon * theta(t) * shape, or
    ``"parametric"`` for g(t, q, q') = epsilon * theta(t) *
    (shape + parametric(q, q')); the parametric part vanishes to first order
    at the origin, so the leading-order forcing is always the constant
    shape.
    """

    kind: str
    shape: np.ndarray
    epsilon: float
    noise: NoiseSourceConfig
    parametric: Optional[PolynomialMap] = None

    def __post_init__(self):
        if self.kind not in ("external", "parametric"):
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        shape = np.asarray(self.shape, dtype=float)
        if shape.ndim != 1:
            raise DimensionMismatch("forcing shape must be a vector")
        object.__setattr__(self, "shape", shape)
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        if self.kind == "parametric":
            if self.parametric is None:
                raise ValueError("parametric forcing needs a polynomial map")
            if self.parametric.output_dim != shape.size:
                raise DimensionMismatch(
                    "parametric map output must match the shape vector")
        elif self.parametric is not None:
            raise ValueError("external forcing takes no parametric map")


@dataclass(frozen=True)
class FirstOrderSystem:
    """First-order form x' = A x + F(x) + G(t, x) with x = (q, q').

    Constructed by :func:`to_first_order`; the linearization A is verified
    to be strictly stable, and F inherits f's vanishing linearization, so
    the origin of the unforced system is a hyperbolic attracting fixed
    point.
    """

    mech: MechanicalSystem
    dim: int
    A: np.ndarray
    F: PolynomialMap
    forcing: Optional[ForcingSpec] = None
    G_unit: Optional[np.ndarray] = None
    parametric_fo: Optional[PolynomialMap] = None

    def forcing_vector(self, theta) -> np.ndarray:
        """Leading-order forcing G(0, theta) = epsilon*theta*[0; M^-1 shape].

        ``theta`` may be a scalar or an array; an axis of size ``dim`` is
        appended.
        """
        if self.forcing is None or self.G_unit is None:
            raise ValueError("system has no forcing attached")
        theta = np.asarray(theta, dtype=float)
        return self.forcing.epsilon * theta[..., None] * self.G_unit

    def forcing_at_state(self, theta: float, x: np.ndarray) -> np.ndarray:
        """Full forcing including the parametric state dependence, if any."""
        out = self.forcing_vector(theta)
        if self.parametric_fo is not None:
            out = out + self.forcing.epsilon * theta * eval_polynomial(
                self.parametric_fo, x)
        return out


def to_first_order(sys: MechanicalSystem,
                   forcing: Optional[ForcingSpec] = None) -> FirstOrderSystem:
    """Rewrite a mechanical system in first-order form.

    The state ordering is (q, q'), giving
    ``A = [[0, I], [-M^-1 K, -M^-1 C]]`` and a nonlinearity confined to the
    velocity block.  The mass matrix is factored once (Cholesky) and reused
    for every solve; raises :class:`UnstableOrigin` unless every eigenvalue
    of A satisfies Re(lambda) < -1e-12 * ||A||.
    """
    n = sys.n_dof
    cho = scipy.linalg.cho_factor(sys.M)
    minv_K = scipy.linalg.cho_solve(cho, sys.K)
    minv_C = scipy.linalg.cho_solve(cho, sys.C)
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -minv_K
    A[n:, n:] = -minv_C

    def to_velocity_block(cols: np.ndarray) -> np.ndarray:
        lifted = np.zeros((2 * n, cols.shape[1]))
        lifted[n:] = -scipy.linalg.cho_solve(cho, cols)
        return lifted

    F = _transform_outputs(sys.nonlinearity, to_velocity_block, 2 * n)

    scale = np.linalg.norm(A, 2)
    if np.max(np.linalg.eigvals(A).real) >= -STABILITY_MARGIN * scale:
        raise UnstableOrigin(
            "linearization at the origin is not strictly stable")

    G_unit = None
    parametric_fo = None
    if forcing is not None:
        if forcing.shape.size != n:
            raise DimensionMismatch(
                f"forcing shape has {forcing.shape.size} entries, "
                f"expected {n}")
        G_unit = np.zeros(2 * n)
        G_unit[n:] = scipy.linalg.cho_solve(cho, forcing.shape)
        if forcing.parametric is not None:
            def to_force_block(cols: np.ndarray) -> np.ndarray:
                lifted = np.zeros((2 * n, cols.shape[1]))
                lifted[n:] = scipy.linalg.cho_solve(cho, cols)
                return lifted

            parametric_fo = _transform_outputs(
                forcing.parametric, to_force_block, 2 * n)

    return FirstOrderSystem(mech=sys, dim=2 * n, A=A, F=F, forcing=forcing,
                            G_unit=G_unit, parametric_fo=parametric_fo)


def _transform_outputs(pmap: PolynomialMap, transform, new_dim: int
                       ) -> PolynomialMap:
    # apply a linear output transform given as a matrix-free column solver
    by_exps: dict[tuple, np.ndarray] = {}
    for exps, out, coeff in pmap.terms:
        vec = by_exps.setdefault(exps, np.zeros(pmap.output_dim))
        vec[out] += coeff
    if not by_exps:
        return PolynomialMap.zero(pmap.input_dim, new_dim)
    exps_list = list(by_exps)
    cols = np.column_stack([by_exps[e] for e in exps_list])
    mixed = transform(cols)
    terms = []
    for j, exps in enumerate(exps_list):
        for row in np.nonzero(mixed[:, j])[0]:
            terms.append((exps, int(row), float(mixed[row, j])))
    return PolynomialMap.from_terms(pmap.input_dim, new_dim, terms)
