"""Random reduced-order model on a slow spectral submanifold.

Combines the autonomous polynomial dynamics with the leading-order
projection of the random forcing onto the slow subspace, plus an optional
first-order correction that tracks the forcing content pushed into the
complementary directions.  The correction is kept as an auxiliary linear
state ``w`` advanced alongside the reduced coordinates, so no forcing
history is ever stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import DimensionMismatch, TimeOutOfRange
from .forcing import NoiseRealization
from .manifold import (SSMExpansion, evaluate_parametrization,
                       evaluate_reduced_rhs)
from .polynomial import jacobian_polynomial
from .spectral import SpectralSubspace
from .systems import FirstOrderSystem


def reduced_forcing(sub: SpectralSubspace, g0: np.ndarray) -> np.ndarray:
    """Slow-subspace content of a full-space forcing vector.

    Batched over leading axes of ``g0``; the last axis must be the full
    state dimension.
    """
    g0 = np.asarray(g0, dtype=float)
    if g0.shape[-1] != sub.dim:
        raise DimensionMismatch(
            f"forcing vector has {g0.shape[-1]} entries, expected {sub.dim}")
    return g0 @ sub.VE_L.T


@dataclass
class RandomReducedModel:
    """Reduced dynamics xi' = R(xi) + eps*VE_L*G0(t) for one noise path.

    ``noise`` supplies the scalar path theta(t); the full-space forcing is
    G0(t) = theta(t)*g_unit.  With ``include_h1`` the model also carries
    the auxiliary state ``h1_w`` obeying w' = A w + P_perp G0(t), whose
    image under P_perp corrects the manifold lift at first order in eps and
    feeds a state-coupling term back into the reduced equation.  Instances
    are mutable (the running ``h1_w``); share the expansion, never the
    model, across realizations.
    """

    expansion: SSMExpansion
    noise: NoiseRealization
    g_unit: np.ndarray
    epsilon: float
    include_h1: bool = False
    fos: Optional[FirstOrderSystem] = None
    h1_w: np.ndarray = field(default=None)  # type: ignore[assignment]
    _step_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        g_unit = np.asarray(self.g_unit, dtype=float)
        if g_unit.shape != (self.expansion.dim,):
            raise DimensionMismatch(
                f"g_unit has shape {g_unit.shape}, expected "
                f"({self.expansion.dim},)")
        self.g_unit = g_unit
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        if self.include_h1 and self.fos is None:
            raise ValueError("include_h1 needs the first-order system for "
                             "the state-coupling term")
        if self.h1_w is None:
            self.h1_w = np.zeros(self.expansion.dim)

    @property
    def subspace(self) -> SpectralSubspace:
        return self.expansion.subspace

    @property
    def d(self) -> int:
        return self.expansion.d

    @property
    def forcing_direction(self) -> np.ndarray:
        """VE_L @ g_unit, cached; the reduced image of a unit noise value."""
        if "gxi" not in self._step_cache:
            self._step_cache["gxi"] = reduced_forcing(self.subspace,
                                                      self.g_unit)
        return self._step_cache["gxi"]

    @property
    def complement_input(self) -> np.ndarray:
        """P_perp @ g_unit, cached; drives the auxiliary h1 state."""
        if "pg" not in self._step_cache:
            P = self.subspace.complement_projector
            self._step_cache["pg"] = P @ self.g_unit
        return self._step_cache["pg"]

    def theta_at(self, t: float) -> float:
        """Noise value at time t under the zero-order-hold convention."""
        i = int(np.floor(t / self.noise.dt + 1e-9))
        return self.noise.value_at_step(i)

    def spin_time(self) -> float:
        """Horizon after which the h1 initialization transient is < e^-10."""
        rates = self.subspace.outer_eigenvalues.real
        if rates.size == 0:
            return 0.0  # the manifold is the whole space; nothing transverse
        return 10.0 / float(np.abs(rates).min())


def reduced_rhs(model: RandomReducedModel, xi: np.ndarray,
                t: float) -> np.ndarray:
    """Right-hand side of the reduced equation at reduced state xi, time t.

    The time enters only through the held noise sample.  Raises
    TimeOutOfRange for t outside the realization.
    """
    xi = np.asarray(xi, dtype=float)
    theta = model.theta_at(t)
    out = evaluate_reduced_rhs(model.expansion, xi)
    out = out + (model.epsilon * theta) * model.forcing_direction
    if model.include_h1:
        out = out + model.epsilon * _h1_coupling(model, xi, model.h1_w)
    return out


def _h1_coupling(model: RandomReducedModel, xi: np.ndarray,
                 w: np.ndarray) -> np.ndarray:
    """Derivative of the reduced field along the complementary correction.

    Only the nonlinearity contributes: the linear part drops because the
    left slow basis annihilates A restricted to the complementary range
    (VE_L A P_perp = AE VE_L P_perp = 0).
    """
    sub = model.subspace
    h1 = sub.complement_projector @ w
    x0 = evaluate_parametrization(model.expansion, xi)
    DF = jacobian_polynomial(model.fos.F, x0)
    return sub.VE_L @ (DF @ h1)


def _h1_step_matrices(model: RandomReducedModel, dt: float):
    """Exact one-step propagator of w' = A w + theta*P_perp g_unit.

    Returns (Ed, jcol) with w_next = Ed @ w + theta * jcol for a held
    theta; jcol = A^-1 (Ed - I) P_perp g_unit.
    """
    key = ("h1", dt)
    if key not in model._step_cache:
        A = model.fos.A
        Ed = expm(A * dt)
        pg = model.complement_input
        jcol = np.linalg.solve(A, (Ed - np.eye(A.shape[0])) @ pg)
        model._step_cache[key] = (Ed, jcol)
    return model._step_cache[key]


def advance_h1(model: RandomReducedModel, t: float, dt: float) -> np.ndarray:
    """Advance the auxiliary state over [t, t+dt] with the held sample.

    No-op unless include_h1 is set.  Returns the updated state.
    """
    if not model.include_h1:
        return model.h1_w
    theta = model.theta_at(t)
    Ed, jcol = _h1_step_matrices(model, dt)
    model.h1_w = Ed @ model.h1_w + theta * jcol
    return model.h1_w


def h1_correction(model: RandomReducedModel,
                  w: Optional[np.ndarray] = None) -> np.ndarray:
    """Physical-space correction eps*P_perp w for the current (or given) w."""
    if w is None:
        w = model.h1_w
    w = np.asarray(w, dtype=float)
    return model.epsilon * (w @ model.subspace.complement_projector.T)


def lift(model: RandomReducedModel, xi: np.ndarray,
         t: Optional[float] = None) -> np.ndarray:
    """Full-space state read off the reduced coordinates.

    W(xi) plus, when include_h1 is set, the first-order complementary
    correction carried by the model's running state.  ``t`` is accepted
    for interface symmetry with reduced_rhs; the correction state already
    encodes the time.
    """
    del t
    out = evaluate_parametrization(model.expansion, xi)
    if model.include_h1:
        out = out + h1_correction(model)
    return out


def lift_trajectory(model: RandomReducedModel, xi_path: np.ndarray,
                    w_path: Optional[np.ndarray] = None) -> np.ndarray:
    """Lift a whole reduced trajectory (..., d) to full space (..., dim)."""
    out = evaluate_parametrization(model.expansion, xi_path)
    if model.include_h1:
        if w_path is None:
            raise ValueError("include_h1 trajectories need the stored w path")
        out = out + model.epsilon * (
            np.asarray(w_path, dtype=float)
            @ model.subspace.complement_projector.T)
    return out
