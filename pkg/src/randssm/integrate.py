"""Time integration: implicit Newmark for the full second-order systems,
the exactly-stepped noise filter coupled into Newmark for stochastic runs,
and explicit RK4 for the reduced models with zero-order-held noise.

Ensemble variants carry a leading batch axis and keep every realization's
arithmetic independent: a converged ensemble member is frozen while the
Newton loop finishes the others, so results never depend on how the
ensemble is chunked across workers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .errors import (DimensionMismatch, LengthMismatch, NewtonDivergence)
from .forcing import FilterConfig, filter_path
from .polynomial import jacobian_polynomial
from .reduced import (RandomReducedModel, advance_h1, reduced_rhs)
from .systems import MechanicalSystem


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size and implicit-solver knobs shared by the integrators.

    The Newton residual cannot drop below roughly
    eps*||M||*||q||/(beta*dt^2), the roundoff of the acceleration update,
    so the default tolerance is set above that floor for desk-scale dt.
    """

    dt: float
    gamma: float = 0.5
    beta: float = 0.25
    newton_tol: float = 1e-8
    max_newton_iter: int = 25

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.beta <= 0.5:
            raise ValueError("beta must lie in [0, 0.5]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.newton_tol <= 0.0:
            raise ValueError("newton_tol must be positive")
        if self.max_newton_iter < 1:
            raise ValueError("max_newton_iter must be at least 1")


@dataclass
class Trajectory:
    """Uniformly sampled solution path with labeled columns."""

    times: np.ndarray
    states: np.ndarray
    labels: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.ndim != 1:
            raise DimensionMismatch("times must be one-dimensional")
        if self.states.shape[0] != self.times.size:
            raise LengthMismatch(
                f"{self.states.shape[0]} state rows vs {self.times.size} "
                f"time samples")
        if len(self.labels) != self.states.shape[1]:
            raise LengthMismatch(
                f"{len(self.labels)} labels vs {self.states.shape[1]} "
                f"state columns")
        if self.times.size >= 2:
            steps = np.diff(self.times)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise ValueError("time grid must be uniform")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def column(self, label: str) -> np.ndarray:
        try:
            j = self.labels.index(label)
        except ValueError:
            raise KeyError(f"no column {label!r}; have {self.labels}")
        return self.states[:, j]


def write_trajectory_csv(path, traj: Trajectory) -> None:
    header = ",".join(("t",) + tuple(traj.labels))
    data = np.column_stack([traj.times, traj.states])
    np.savetxt(path, data, delimiter=",", header=header, comments="")


# ---------------------------------------------------------------------------
# implicit Newmark
# ---------------------------------------------------------------------------

def _initial_acceleration(sys: MechanicalSystem, q, v, g):
    rhs = g - v @ sys.C.T - q @ sys.K.T - sys.internal_force(q, v)
    cho = cho_factor(sys.M)
    return cho_solve(cho, rhs.T).T


def _newmark_ensemble(sys: MechanicalSystem, forces: np.ndarray,
                      q0: np.ndarray, v0: np.ndarray, cfg: IntegratorConfig,
                      store_cols: Optional[Sequence[int]] = None,
                      a0: Optional[np.ndarray] = None):
    """Batched average-acceleration Newmark with per-member Newton.

    ``forces`` has shape (m, L, n_dof): sample i is held over step i.  The
    returned array stacks the requested columns of the state (q, v) per
    time sample; ``store_cols=None`` stores everything.  Also returns the
    final (q, v, a) so runs can be split and resumed exactly.
    """
    forces = np.asarray(forces, dtype=float)
    m_batch, n_steps, n = forces.shape
    if n != sys.n_dof:
        raise DimensionMismatch(
            f"forces have {n} columns, system has {sys.n_dof} DOFs")
    q = np.array(q0, dtype=float).reshape(m_batch, n).copy()
    v = np.array(v0, dtype=float).reshape(m_batch, n).copy()
    dt, gam, bet = cfg.dt, cfg.gamma, cfg.beta
    c1 = gam / (bet * dt)
    c2 = 1.0 / (bet * dt * dt)
    K_eff = sys.K + c1 * sys.C + c2 * sys.M

    if a0 is None:
        a = _initial_acceleration(sys, q, v, forces[:, 0, :])
    else:
        a = np.array(a0, dtype=float).reshape(m_batch, n).copy()

    if store_cols is None:
        store_cols = range(2 * n)
    store_cols = [int(c) for c in store_cols]
    stored = np.empty((m_batch, n_steps + 1, len(store_cols)))
    full = np.concatenate([q, v], axis=1)
    stored[:, 0, :] = full[:, store_cols]

    nl = sys.nonlinearity
    linear = not nl.terms
    if linear:
        lu = lu_factor(K_eff)

    tol = cfg.newton_tol
    for i in range(n_steps):
        g = forces[:, i, :]
        qp = q + dt * v + (0.5 - bet) * dt * dt * a
        vp = v + (1.0 - gam) * dt * a
        if linear:
            rhs = g + c2 * (qp @ sys.M.T) + c1 * (qp @ sys.C.T) - vp @ sys.C.T
            x = lu_solve(lu, rhs.T).T
        else:
            x = qp + bet * dt * dt * a  # predictor: hold the acceleration
            active = np.ones(m_batch, dtype=bool)
            thresh = tol * (1.0 + np.linalg.norm(g, axis=1))
            for _ in range(cfg.max_newton_iter):
                v_new = vp + c1 * (x - qp)
                a_new = c2 * (x - qp)
                f_int = sys.internal_force(x, v_new)
                r = (a_new @ sys.M.T + v_new @ sys.C.T + x @ sys.K.T
                     + f_int - g)
                rnorm = np.linalg.norm(r, axis=1)
                bad = ~np.isfinite(rnorm)
                if bad.any():
                    raise NewtonDivergence(
                        "Newton residual is not finite", step_index=i,
                        member=int(np.argmax(bad)))
                active &= rnorm > thresh
                if not active.any():
                    break
                z = np.concatenate([x, v_new], axis=1)
                Jnl = jacobian_polynomial(nl, z)
                J = (K_eff + Jnl[:, :, :n] + c1 * Jnl[:, :, n:])
                dx = np.linalg.solve(J[active], -r[active, :, None])[..., 0]
                x_next = x[active] + dx
                if np.array_equal(x_next, x[active]):
                    # update below machine resolution: the tolerance is
                    # unreachable at this dt, not a divergence of the model
                    raise NewtonDivergence(
                        "Newton stalled at the roundoff floor above "
                        "newton_tol; loosen the tolerance", step_index=i,
                        member=int(np.argmax(active)))
                x[active] = x_next
            else:
                member = int(np.argmax(active))
                raise NewtonDivergence(
                    f"Newton did not converge in {cfg.max_newton_iter} "
                    f"iterations", step_index=i, member=member)
        a = c2 * (x - qp)
        v = vp + c1 * (x - qp)
        q = x
        full = np.concatenate([q, v], axis=1)
        stored[:, i + 1, :] = full[:, store_cols]
    return stored, (q, v, a)


def newmark_integrate(sys: MechanicalSystem, force: np.ndarray,
                      q0: np.ndarray, v0: np.ndarray, cfg: IntegratorConfig,
                      a0: Optional[np.ndarray] = None) -> Trajectory:
    """Integrate M q'' + C q' + K q + f(q, q') = force(t) implicitly.

    ``force`` has one row per step, held constant over that step.  The
    optional ``a0`` restarts a split run with the acceleration carried by
    the discrete scheme; by default it is recomputed from the dynamics.
    """
    force = np.asarray(force, dtype=float)
    if force.ndim != 2:
        raise DimensionMismatch("force must be (n_steps, n_dof)")
    t0 = time.perf_counter()
    stored, (q, v, a) = _newmark_ensemble(
        sys, force[None], np.asarray(q0, dtype=float)[None],
        np.asarray(v0, dtype=float)[None], cfg,
        a0=None if a0 is None else np.asarray(a0, dtype=float)[None])
    n = sys.n_dof
    labels = tuple(f"q{i}" for i in range(n)) + tuple(
        f"v{i}" for i in range(n))
    times = cfg.dt * np.arange(force.shape[0] + 1)
    meta = {"scheme": "newmark", "gamma": cfg.gamma, "beta": cfg.beta,
            "wall_time": time.perf_counter() - t0,
            "final_acceleration": a[0]}
    return Trajectory(times, stored[0], labels, meta)


def coupled_implicit_integrate(sys: MechanicalSystem,
                               filter_cfg: FilterConfig,
                               increments: np.ndarray,
                               q0: np.ndarray, v0: np.ndarray,
                               cfg: IntegratorConfig, *,
                               shape: np.ndarray,
                               epsilon: float = 1.0,
                               reflect: bool = False,
                               filter_state0: Optional[np.ndarray] = None,
                               a0: Optional[np.ndarray] = None) -> Trajectory:
    """Newmark run forced by the exactly-stepped noise filter.

    The filter consumes one bounded increment per step (zero-order held);
    its output at the start of step i, optionally reflected into [-1, 1],
    enters the mechanical system as force epsilon*output_i*shape.  The
    trajectory carries the filter state columns after the mechanical ones,
    so a run can be split and resumed exactly.
    """
    increments = np.asarray(increments, dtype=float)
    if increments.ndim != 1:
        raise DimensionMismatch("increments must be one-dimensional")
    t0 = time.perf_counter()
    outputs, fstate = filter_path(filter_cfg, increments, cfg.dt, reflect,
                                  state0=filter_state0, with_state=True)
    shape = np.asarray(shape, dtype=float)
    forces = epsilon * outputs[:-1, None] * shape
    stored, (q, v, a) = _newmark_ensemble(
        sys, forces[None], np.asarray(q0, dtype=float)[None],
        np.asarray(v0, dtype=float)[None], cfg,
        a0=None if a0 is None else np.asarray(a0, dtype=float)[None])
    n = sys.n_dof
    labels = tuple(f"q{i}" for i in range(n)) + tuple(
        f"v{i}" for i in range(n)) + ("theta",)
    times = cfg.dt * np.arange(increments.size + 1)
    states = np.concatenate([stored[0], outputs[:, None]], axis=1)
    meta = {"scheme": "newmark+filter", "reflect": reflect,
            "wall_time": time.perf_counter() - t0,
            "final_acceleration": a[0], "final_filter_state": fstate}
    return Trajectory(times, states, labels, meta)


# ---------------------------------------------------------------------------
# explicit RK4 for reduced models
# ---------------------------------------------------------------------------

def rk4_reduced_integrate(model: RandomReducedModel, xi0: np.ndarray,
                          T: float, dt: float) -> Trajectory:
    """Classical RK4 on the reduced equation with the noise held per step.

    All four stages of step i consume the sample at t_i, so the random
    term is treated as exactly piecewise constant; the deterministic part
    keeps its fourth-order accuracy while the held noise caps the formal
    order at the jumps.  The auxiliary correction state, when enabled, is
    advanced in lockstep after each step and recorded alongside xi.
    """
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, dt):
        raise ValueError("T must be an integer number of steps")
    ratio = model.noise.dt / dt
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError("dt must divide the noise grid spacing")
    t0 = time.perf_counter()
    d = model.d
    xi = np.asarray(xi0, dtype=float).copy()
    if xi.shape != (d,):
        raise DimensionMismatch(f"xi0 must have shape ({d},)")
    path = np.empty((n_steps + 1, d))
    path[0] = xi
    w_path = None
    if model.include_h1:
        w_path = np.empty((n_steps + 1, model.expansion.dim))
        w_path[0] = model.h1_w
    for i in range(n_steps):
        t = i * dt
        k1 = reduced_rhs(model, xi, t)
        k2 = reduced_rhs(model, xi + 0.5 * dt * k1, t)
        k3 = reduced_rhs(model, xi + 0.5 * dt * k2, t)
        k4 = reduced_rhs(model, xi + dt * k3, t)
        xi = xi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        advance_h1(model, t, dt)
        path[i + 1] = xi
        if model.include_h1:
            w_path[i + 1] = model.h1_w
    labels = tuple(f"xi{i}" for i in range(d))
    states = path
    if model.include_h1:
        labels = labels + tuple(f"w{i}" for i in range(model.expansion.dim))
        states = np.concatenate([path, w_path], axis=1)
    meta = {"scheme": "rk4", "epsilon": model.epsilon,
            "include_h1": model.include_h1,
            "wall_time": time.perf_counter() - t0}
    return Trajectory(dt * np.arange(n_steps + 1), states, labels, meta)


def _rk4_ensemble(expansion, gxi_unit: np.ndarray, thetas: np.ndarray,
                  epsilon: float, xi0: np.ndarray, dt: float,
                  obs_matrix: Optional[np.ndarray] = None,
                  h1_pieces: Optional[dict] = None):
    """Batched RK4 over an ensemble of noise paths.

    ``thetas`` is (m, L+1): sample i is held over step i and the final
    sample is only a grid endpoint.  ``obs_matrix`` maps the monomial
    vector to observable values, (n_monomials, n_obs); when given, only
    observables are stored.  ``h1_pieces`` switches on the correction:
    a dict with Ed, jcol (its theta column), projector rows for the
    observables, and the coupling closure.
    """
    from .manifold import evaluate_reduced_rhs as auto_rhs
    thetas = np.asarray(thetas, dtype=float)
    m_batch, n_grid = thetas.shape
    n_steps = n_grid - 1
    xi = np.array(xi0, dtype=float).reshape(m_batch, -1).copy()
    d = xi.shape[1]

    with_h1 = h1_pieces is not None
    if with_h1:
        Ed = h1_pieces["Ed"]
        jcol = h1_pieces["jcol"]
        coupling = h1_pieces["coupling"]
        obs_perp = h1_pieces.get("obs_perp")
        w = np.zeros((m_batch, Ed.shape[0]))

    def rhs(xi_s, th):
        out = auto_rhs(expansion, xi_s) + (epsilon * th)[:, None] * gxi_unit
        if with_h1:
            out = out + epsilon * coupling(xi_s, w)
        return out

    store_obs = obs_matrix is not None
    if store_obs:
        stored = np.empty((m_batch, n_steps + 1, obs_matrix.shape[1]))
    else:
        stored = np.empty((m_batch, n_steps + 1, d))

    def record(i):
        if store_obs:
            vals = expansion.monomial_values(xi) @ obs_matrix
            if with_h1:
                vals = vals + epsilon * (w @ obs_perp)
            stored[:, i, :] = vals
        else:
            stored[:, i, :] = xi

    record(0)
    for i in range(n_steps):
        th = thetas[:, i]
        k1 = rhs(xi, th)
        k2 = rhs(xi + 0.5 * dt * k1, th)
        k3 = rhs(xi + 0.5 * dt * k2, th)
        k4 = rhs(xi + dt * k3, th)
        xi = xi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if with_h1:
            w = w @ Ed.T + th[:, None] * jcol
        record(i + 1)
    final_w = w if with_h1 else None
    return stored, xi, final_w


# ---------------------------------------------------------------------------
# cocycle self-consistency
# ---------------------------------------------------------------------------

def _flatten_state(state) -> np.ndarray:
    if isinstance(state, np.ndarray):
        return state.ravel()
    return np.concatenate([np.asarray(p, dtype=float).ravel()
                           for p in state])


def cocycle_check(advance: Callable, state0, samples: np.ndarray,
                  i_split: int) -> float:
    """Defect between advancing straight through and restarting mid-path.

    ``advance(state, samples)`` must return the state after consuming the
    given noise samples, one per step, as a pure function.  The defect is
    the Euclidean distance between the single-pass final state and the
    final state of the split run that replays the tail of the same path.
    """
    samples = np.asarray(samples)
    n = samples.shape[0]
    if not 0 <= i_split <= n:
        raise ValueError(f"split index {i_split} outside 0..{n}")
    whole = advance(state0, samples)
    if i_split == 0:
        split = advance(state0, samples)
    elif i_split == n:
        split = whole
    else:
        mid = advance(state0, samples[:i_split])
        split = advance(mid, samples[i_split:])
    return float(np.linalg.norm(_flatten_state(whole) - _flatten_state(split)))


def newmark_advancer(sys: MechanicalSystem, shape: np.ndarray,
                     epsilon: float, cfg: IntegratorConfig) -> Callable:
    """State map for cocycle checks: state (q, v, a), samples = noise values.

    The acceleration is part of the discrete state: the scheme propagates
    it, so an exact restart must hand it back rather than recompute it
    from the (differently sampled) force.
    """
    shape = np.asarray(shape, dtype=float)

    def advance(state, samples):
        q, v, a = state
        forces = epsilon * np.asarray(samples, dtype=float)[:, None] * shape
        _, (qf, vf, af) = _newmark_ensemble(
            sys, forces[None], np.asarray(q, dtype=float)[None],
            np.asarray(v, dtype=float)[None], cfg,
            store_cols=(), a0=np.asarray(a, dtype=float)[None])
        return qf[0], vf[0], af[0]

    return advance


def coupled_advancer(sys: MechanicalSystem, filter_cfg: FilterConfig,
                     cfg: IntegratorConfig, *, shape: np.ndarray,
                     epsilon: float = 1.0, reflect: bool = False) -> Callable:
    """State map over (q, v, a, filter_state); samples = filter increments."""
    shape = np.asarray(shape, dtype=float)

    def advance(state, samples):
        q, v, a, fstate = state
        outputs, fnew = filter_path(filter_cfg, np.asarray(samples,
                                                           dtype=float),
                                    cfg.dt, reflect, state0=fstate,
                                    with_state=True)
        forces = epsilon * outputs[:-1, None] * shape
        _, (qf, vf, af) = _newmark_ensemble(
            sys, forces[None], np.asarray(q, dtype=float)[None],
            np.asarray(v, dtype=float)[None], cfg,
            store_cols=(), a0=np.asarray(a, dtype=float)[None])
        return qf[0], vf[0], af[0], fnew

    return advance


def reduced_advancer(expansion, gxi_unit: np.ndarray, epsilon: float,
                     dt: float) -> Callable:
    """State map on xi; samples = held noise values, one per step."""

    def advance(xi, samples):
        stored, xi_f, _ = _rk4_ensemble(
            expansion, gxi_unit,
            np.concatenate([np.asarray(samples, dtype=float),
                            [0.0]])[None],
            epsilon, np.asarray(xi, dtype=float)[None], dt)
        del stored
        return xi_f[0]

    return advance
