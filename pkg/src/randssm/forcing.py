"""Bounded random forcing signals.

Three generation methods are provided, all producing uniformly bounded
sample paths on a fixed time grid:

* ``psd``        -- superpose cosines with random phases so the signal
                    realizes a prescribed one-sided spectral density; the
                    coefficient sum certifies a hard amplitude bound.
* ``filtered``   -- drive a second-order scalar filter with truncated
                    Gaussian increments (bounded white-noise surrogate).
* ``reflected``  -- same filter, but the selected output variable is
                    reflected back into [-1, 1] after every step, so the
                    output is bounded by 1 by construction.

The filter is advanced with the exact matrix exponential of its companion
matrix under zero-order-held input, so there is no time-discretization
error in the filter itself.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.signal

from .errors import (DegenerateInterval, DimensionMismatch, NyquistViolation,
                     TimeOutOfRange)

#: rejection sampling below this acceptance probability is refused
MIN_ACCEPTANCE = 1e-6

#: default truncation half-width, in units of the increment std deviation
DEFAULT_TRUNCATION_MULTIPLE = 4.0


# ---------------------------------------------------------------------------
# configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralDensityCurve:
    """One-sided spectral density on a uniform frequency window.

    Attributes
    ----------
    psd : callable
        Nonnegative density evaluated on arrays of angular frequencies.
    omega_min, omega_max : float
        Window of angular frequencies (rad/s) to synthesize.
    delta_omega : float
        Frequency resolution of the synthesis grid.
    """

    psd: Callable[[np.ndarray], np.ndarray]
    omega_min: float
    omega_max: float
    delta_omega: float

    def __post_init__(self):
        if not (0.0 <= self.omega_min < self.omega_max):
            raise ValueError("need 0 <= omega_min < omega_max")
        if self.delta_omega <= 0.0:
            raise ValueError("delta_omega must be positive")

    def grid(self) -> np.ndarray:
        """Synthesis frequencies omega_min + i*delta_omega inside the window."""
        n = int(math.floor((self.omega_max - self.omega_min)
                           / self.delta_omega + 1e-12)) + 1
        return self.omega_min + self.delta_omega * np.arange(n)

    @classmethod
    def from_samples(cls, omega: Sequence[float], values: Sequence[float],
                     delta_omega: Optional[float] = None
                     ) -> "SpectralDensityCurve":
        """Curve interpolating a sampled density table."""
        om = np.asarray(omega, dtype=float)
        val = np.asarray(values, dtype=float)
        if om.ndim != 1 or om.shape != val.shape or om.size < 2:
            raise DimensionMismatch("need matching 1-D omega/value tables")
        if np.any(np.diff(om) <= 0):
            raise ValueError("omega samples must increase")
        if np.any(val < 0):
            raise ValueError("spectral density must be nonnegative")
        step = delta_omega if delta_omega is not None else float(om[1] - om[0])
        return cls(lambda w: np.interp(w, om, val), float(om[0]),
                   float(om[-1]), step)


@dataclass(frozen=True)
class FilterConfig:
    """Second-order scalar filter m*a'' + c*a' + k*a = input force.

    ``output`` selects which of (a, adot, addot) is used as the forcing
    signal.  ``intensity`` scales the white-noise surrogate driving the
    filter; ``truncation_multiple`` bounds each Gaussian increment at that
    many standard deviations.
    """

    m: float
    c: float
    k: float
    output: str = "a"
    intensity: float = 1.0
    truncation_multiple: float = DEFAULT_TRUNCATION_MULTIPLE

    def __post_init__(self):
        if min(self.m, self.c, self.k) <= 0.0:
            raise ValueError("filter m, c, k must all be positive")
        if self.output not in ("a", "adot", "addot"):
            raise ValueError("output must be one of 'a', 'adot', 'addot'")
        if self.intensity <= 0.0 or self.truncation_multiple <= 0.0:
            raise ValueError("intensity and truncation_multiple must be positive")


@dataclass(frozen=True)
class PsdChannel:
    """One PSD-synthesized signal entering a forcing sum with a gain."""

    curve: SpectralDensityCurve
    gain: float = 1.0


@dataclass(frozen=True)
class NoiseSourceConfig:
    """Tagged union describing how a scalar forcing signal is generated.

    ``method`` is one of ``"psd"``, ``"filtered"``, ``"reflected"``.  PSD
    sources sum one or more channels; filter sources carry a
    :class:`FilterConfig`.  Reflection overwrites the filter state, so the
    reflected variable must be a state variable (a or adot).
    """

    method: str
    channels: Tuple[PsdChannel, ...] = ()
    filter: Optional[FilterConfig] = None

    def __post_init__(self):
        if self.method == "psd":
            if not self.channels:
                raise ValueError("psd source needs at least one channel")
            if self.filter is not None:
                raise ValueError("psd source takes no filter")
        elif self.method in ("filtered", "reflected"):
            if self.filter is None:
                raise ValueError(f"{self.method} source needs a filter config")
            if self.channels:
                raise ValueError(f"{self.method} source takes no channels")
            if self.method == "reflected" and self.filter.output == "addot":
                raise ValueError("reflection requires a state output (a or adot)")
        else:
            raise ValueError(f"unknown noise method {self.method!r}")


@dataclass(frozen=True)
class NoiseRealization:
    """A sampled scalar forcing path on a uniform grid.

    ``samples[i]`` is the signal value at ``t = i*dt`` and is held constant
    over ``[i*dt, (i+1)*dt)`` by consumers.  ``declared_bound`` is an a
    priori amplitude bound valid for the whole path; it is re-checked at
    construction.  ``increments`` stores the bounded driving increments for
    the filter-based methods.
    """

    dt: float
    samples: np.ndarray
    declared_bound: float
    method: str
    seed: Optional[int] = None
    increments: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if samples.ndim != 1 or samples.size < 2:
            raise DimensionMismatch("a realization needs >= 2 samples")
        peak = float(np.max(np.abs(samples)))
        if peak > self.declared_bound:
            raise ValueError(
                f"sample peak {peak} exceeds declared bound {self.declared_bound}")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.size)

    @property
    def duration(self) -> float:
        return self.dt * (self.samples.size - 1)

    def value_at_step(self, i: int) -> float:
        if not 0 <= i < self.samples.size:
            raise TimeOutOfRange(
                f"step {i} outside realization of {self.samples.size} samples")
        return float(self.samples[i])


# ---------------------------------------------------------------------------
# seeding
# ---------------------------------------------------------------------------

def ensemble_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent, reproducible stream for realization ``index``.

    Streams are derived from the master seed by spawn-key hashing, so any
    subset of realizations can be regenerated without running the others.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed),
                                 spawn_key=(int(index),))
    return np.random.default_rng(seq)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, tuple):
        return ensemble_rng(*seed)
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# road spectra
# ---------------------------------------------------------------------------

def road_elevation_psd(A_v: float, a: float, v: float, *,
                       omega_min: Optional[float] = None,
                       omega_max: float = 120.0,
                       delta_omega: float = 2.0 * math.pi / 60.0
                       ) -> SpectralDensityCurve:
    """Lorentzian road-elevation density A_v*a*v / ((a*v)^2 + omega^2).

    ``A_v`` scales with road roughness, ``a`` is the inverse correlation
    length of the surface, and ``v`` is the vehicle speed.  The window
    defaults to one synthesis bin above zero up to 120 rad/s.
    """
    if min(A_v, a, v) <= 0.0:
        raise ValueError("A_v, a, v must be positive")
    lo = delta_omega if omega_min is None else omega_min

    def density(omega, _av=a * v, _A=A_v):
        omega = np.asarray(omega, dtype=float)
        return _A * _av / (_av ** 2 + omega ** 2)

    return SpectralDensityCurve(density, lo, omega_max, delta_omega)


def road_gradient_psd(A_v: float, a: float, v: float, *,
                      omega_min: Optional[float] = None,
                      omega_max: float = 120.0,
                      delta_omega: float = 2.0 * math.pi / 60.0
                      ) -> SpectralDensityCurve:
    """Density of the road slope seen at speed v: (omega^2/v) times elevation."""
    if min(A_v, a, v) <= 0.0:
        raise ValueError("A_v, a, v must be positive")
    lo = delta_omega if omega_min is None else omega_min

    def density(omega, _av=a * v, _A=A_v, _v=v):
        omega = np.asarray(omega, dtype=float)
        return (omega ** 2 / _v) * _A * _av / (_av ** 2 + omega ** 2)

    return SpectralDensityCurve(density, lo, omega_max, delta_omega)


# ---------------------------------------------------------------------------
# method 1: PSD sampling
# ---------------------------------------------------------------------------

def psd_amplitudes(curve: SpectralDensityCurve) -> tuple[np.ndarray, np.ndarray]:
    """Synthesis frequencies and cosine amplitudes sqrt(2*Phi*delta_omega)."""
    omegas = curve.grid()
    phi = np.asarray(curve.psd(omegas), dtype=float)
    if np.any(phi < 0):
        raise ValueError("spectral density must be nonnegative on the window")
    return omegas, np.sqrt(2.0 * phi * curve.delta_omega)


def _cosine_sum(amps, omegas, phases, n_samples, dt):
    # sum_i amps_i*cos(omega_i*t_j + phi_i) for equally spaced omega_i,
    # evaluated for all j at once through a chirp-z transform
    coeff = amps * np.exp(1j * phases)
    w = np.exp(1j * curve_step(omegas) * dt)
    inner = scipy.signal.czt(coeff, m=n_samples, w=w, a=1.0 + 0.0j)
    t = dt * np.arange(n_samples)
    return np.real(np.exp(1j * omegas[0] * t) * inner)


def curve_step(omegas: np.ndarray) -> float:
    if omegas.size < 2:
        return 0.0
    return float(omegas[1] - omegas[0])


def sample_from_psd(curve: SpectralDensityCurve, T: float, dt: float,
                    rng, *, seed: Optional[int] = None) -> NoiseRealization:
    """Synthesize one bounded realization of a prescribed spectral density.

    The signal is ``sum_i sqrt(2*Phi(omega_i)*delta_omega) *
    cos(omega_i*t + phi_i)`` with phases independent and uniform on
    [0, 2*pi).  The coefficient sum is stored as the declared amplitude
    bound, certifying boundedness rather than observing it.
    """
    if dt <= 0.0 or T <= 0.0:
        raise ValueError("T and dt must be positive")
    if curve.omega_max >= math.pi / dt:
        raise NyquistViolation(
            f"window reaches {curve.omega_max} rad/s but sampling allows "
            f"only {math.pi / dt:.6g}")
    if curve.delta_omega > 2.0 * math.pi / T + 1e-15:
        warnings.warn(
            "delta_omega exceeds 2*pi/T; realizations repeat within the "
            "window and the realized density is coarse", UserWarning)
    rng = _as_rng(rng)
    omegas, amps = psd_amplitudes(curve)
    phases = rng.uniform(0.0, 2.0 * math.pi, omegas.size)
    n_samples = int(round(T / dt)) + 1
    samples = _cosine_sum(amps, omegas, phases, n_samples, dt)
    bound = float(np.sum(amps))
    return NoiseRealization(dt=dt, samples=samples, declared_bound=bound,
                            method="psd", seed=seed)


# ---------------------------------------------------------------------------
# truncated Gaussian increments
# ---------------------------------------------------------------------------

def _normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def truncated_gaussian(rng, variance: float, interval: tuple[float, float],
                       size: Optional[int] = None) -> np.ndarray | float:
    """Exact rejection sampling of N(0, variance) conditioned to an interval."""
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError("interval must satisfy lo < hi")
    if variance <= 0.0:
        raise ValueError("variance must be positive")
    std = math.sqrt(variance)
    acceptance = _normal_cdf(hi / std) - _normal_cdf(lo / std)
    if acceptance < MIN_ACCEPTANCE:
        raise DegenerateInterval(
            f"acceptance probability {acceptance:.3e} below {MIN_ACCEPTANCE}")
    rng = _as_rng(rng)
    scalar = size is None
    n = 1 if scalar else int(size)
    draws = rng.normal(0.0, std, n)
    bad = np.flatnonzero((draws < lo) | (draws > hi))
    while bad.size:
        draws[bad] = rng.normal(0.0, std, bad.size)
        keep = (draws[bad] >= lo) & (draws[bad] <= hi)
        bad = bad[~keep]
    return float(draws[0]) if scalar else draws


# ---------------------------------------------------------------------------
# second-order filter, advanced exactly
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _filter_step_matrices(m: float, c: float, k: float, dt: float):
    A = np.array([[0.0, 1.0], [-k / m, -c / m]])
    Ed = scipy.linalg.expm(A * dt)
    # integral of expm(A*tau) over the step, times the input direction
    jcol = np.linalg.solve(A, (Ed - np.eye(2)) @ np.array([0.0, 1.0 / m]))
    return Ed, jcol


def advance_filter(cfg: FilterConfig, state: np.ndarray, theta: float,
                   dt: float) -> tuple[np.ndarray, tuple[float, float, float]]:
    """One exact step of the filter under a constant input force ``theta``.

    Returns the new state ``(a, adot)`` and the end-of-step outputs
    ``(a, adot, addot)``; the acceleration uses the held input, matching the
    ODE on the closing step.
    """
    state = np.asarray(state, dtype=float)
    if state.shape != (2,):
        raise DimensionMismatch("filter state must have shape (2,)")
    Ed, jcol = _filter_step_matrices(cfg.m, cfg.c, cfg.k, dt)
    new = Ed @ state + theta * jcol
    addot = (theta - cfg.c * new[1] - cfg.k * new[0]) / cfg.m
    return new, (float(new[0]), float(new[1]), float(addot))


def _fold_far(values: np.ndarray) -> np.ndarray:
    # the reflection map is 4-periodic; one modulo replaces the
    # one-bounce-at-a-time loop, which crawls for far-out values
    t = np.mod(values + 1.0, 4.0)
    return np.where(t <= 2.0, t - 1.0, 3.0 - t)


def reflect_into_unit(b: float) -> float:
    """Fold a real number into [-1, 1] by reflecting at the boundaries.

    Values within two bounces of the interval fold by exact subtraction;
    only far-out values go through the modulo shortcut.
    """
    b = float(b)
    if b > 3.0 or b < -3.0:
        b = float(_fold_far(np.asarray(b)))
    while b > 1.0 or b < -1.0:
        b = 2.0 - b if b > 1.0 else -2.0 - b
    return b


def _reflect_array(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    far = (out > 3.0) | (out < -3.0)
    if far.any():
        out[far] = _fold_far(out[far])
    while True:
        high = out > 1.0
        low = out < -1.0
        if not (high.any() or low.any()):
            return out
        out[high] = 2.0 - out[high]
        out[low] = -2.0 - out[low]


def filter_path(cfg: FilterConfig, increments: np.ndarray, dt: float,
                reflect: bool, state0: np.ndarray | None = None,
                with_state: bool = False):
    """Filter output path driven by held forces ``increments/dt``.

    ``increments`` has shape (n_steps,) or (batch, n_steps).  The result has
    one more sample than steps; sample 0 is the output of the initial state
    (zero unless ``state0`` is given).  With ``reflect`` the selected output
    variable is folded into [-1, 1] after every step and written back into
    the state, so both the emitted path and the internal state stay inside
    the unit interval.  With ``with_state`` the final (batch, 2) internal
    state is returned alongside the path, enabling exact restarts.
    """
    inc = np.atleast_2d(np.asarray(increments, dtype=float))
    batch, n_steps = inc.shape
    Ed, jcol = _filter_step_matrices(cfg.m, cfg.c, cfg.k, dt)
    EdT = Ed.T.copy()
    forces = inc / dt
    out = np.empty((batch, n_steps + 1))
    if state0 is None:
        state = np.zeros((batch, 2))
    else:
        state = np.broadcast_to(np.asarray(state0, dtype=float),
                                (batch, 2)).copy()
    sel = {"a": 0, "adot": 1, "addot": 2}[cfg.output]
    if sel == 2:
        first = forces[:, 0] if n_steps else 0.0
        out[:, 0] = (first - cfg.c * state[:, 1] - cfg.k * state[:, 0]) / cfg.m
    else:
        out[:, 0] = state[:, sel]
    for j in range(n_steps):
        f = forces[:, j]
        state = state @ EdT + f[:, None] * jcol
        if reflect:
            state[:, sel] = _reflect_array(state[:, sel])
        if sel == 2:
            out[:, j + 1] = (f - cfg.c * state[:, 1]
                             - cfg.k * state[:, 0]) / cfg.m
        else:
            out[:, j + 1] = state[:, sel]
    if np.asarray(increments).ndim != 2:
        result = out[0]
        state = state[0]
    else:
        result = out
    return (result, state) if with_state else result


def filter_output_bound(cfg: FilterConfig, dt: float,
                        input_bound: float) -> float:
    """Certified amplitude bound for the filter output under bounded input.

    Sums the absolute discrete impulse response of the exactly discretized
    filter (always stable since m, c, k > 0), so
    ``|output| <= input_bound * l1-norm`` holds for every input sequence
    within the bound.
    """
    Ed, jcol = _filter_step_matrices(cfg.m, cfg.c, cfg.k, dt)
    sel = {"a": 0, "adot": 1, "addot": 2}[cfg.output]
    state = jcol.copy()
    total = 0.0
    extra = input_bound / cfg.m if sel == 2 else 0.0
    for _ in range(50_000_000):
        if sel == 2:
            val = abs((-cfg.c * state[1] - cfg.k * state[0]) / cfg.m)
        else:
            val = abs(state[sel])
        total += val
        state = Ed @ state
        if val <= 1e-15 * total and total > 0.0:
            break
    return input_bound * total + extra


# ---------------------------------------------------------------------------
# increment draws and dispatch
# ---------------------------------------------------------------------------

def draw_increments(cfg: FilterConfig, n_steps: int, dt: float,
                    rng) -> np.ndarray:
    """Bounded Brownian-increment surrogates: N(0, intensity^2*dt) truncated
    at +- truncation_multiple standard deviations."""
    std = cfg.intensity * math.sqrt(dt)
    half = cfg.truncation_multiple * std
    return np.asarray(truncated_gaussian(rng, std ** 2, (-half, half),
                                         size=n_steps))


def generate_noise(source: NoiseSourceConfig, T: float, dt: float,
                   seed) -> NoiseRealization:
    """Generate one bounded forcing realization for any supported method.

    ``seed`` may be an integer, a ``(master_seed, index)`` pair, a
    ``SeedSequence`` or a ``Generator``.  Integer seeds are recorded on the
    realization for manifests.
    """
    if dt <= 0.0 or T <= 0.0:
        raise ValueError("T and dt must be positive")
    rng = _as_rng(seed)
    recorded = seed if isinstance(seed, int) else None
    n_steps = int(round(T / dt))
    if n_steps < 1:
        raise ValueError("T must cover at least one step")

    if source.method == "psd":
        total = None
        bound = 0.0
        for channel in source.channels:
            real = sample_from_psd(channel.curve, T, dt, rng)
            part = channel.gain * real.samples
            total = part if total is None else total + part
            bound += abs(channel.gain) * real.declared_bound
        return NoiseRealization(dt=dt, samples=total, declared_bound=bound,
                                method="psd", seed=recorded)

    cfg = source.filter
    inc = draw_increments(cfg, n_steps, dt, rng)
    reflect = source.method == "reflected"
    samples = filter_path(cfg, inc, dt, reflect)
    if reflect:
        bound = 1.0
    else:
        input_bound = cfg.truncation_multiple * cfg.intensity / math.sqrt(dt)
        bound = filter_output_bound(cfg, dt, input_bound)
    return NoiseRealization(dt=dt, samples=samples, declared_bound=bound,
                            method=source.method, seed=recorded,
                            increments=inc)
