"""Prebuilt example systems: quarter-car, shear building, cubic chains.

Each preset bundles the mechanical system with its forcing assembly (noise
source, force direction, default observables) and, where available, the
analytic forcing PSD of the linearized model, so the pipeline can run any
preset end to end from a name like ``building:n=10``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .forcing import (FilterConfig, NoiseSourceConfig, PsdChannel,
                      road_elevation_psd, road_gradient_psd)
from .polynomial import PolynomialMap
from .systems import MechanicalSystem


@dataclass(frozen=True)
class ModelPreset:
    """A runnable example: system + forcing assembly + defaults."""

    name: str
    system: MechanicalSystem
    noise: NoiseSourceConfig
    shape: np.ndarray
    observables: tuple
    linear_reference: str               # "analytic" | "simulated"
    phi_g: Optional[Callable[[float], np.ndarray]] = None
    default_T: Optional[float] = None
    params: dict = field(default_factory=dict)

    def linearized(self) -> MechanicalSystem:
        """The same system with the polynomial nonlinearity removed."""
        sys = self.system
        return MechanicalSystem(sys.M, sys.C, sys.K,
                                PolynomialMap.zero(2 * sys.n_dof, sys.n_dof))


def _cubic_difference_terms(n_vars: int, i: int, j: int, out_plus: int,
                            out_minus: int, kappa: float):
    """Terms of kappa*(x_i - x_j)^3 pushed onto outputs (+ / -)."""
    terms = []
    for p in range(4):
        exps = [0] * n_vars
        exps[i] = 3 - p
        exps[j] = p
        coef = kappa * comb(3, p) * ((-1.0) ** p)
        terms.append((tuple(exps), out_plus, coef))
        terms.append((tuple(exps), out_minus, -coef))
    return terms


def _cubic_single_terms(n_vars: int, i: int, out: int, kappa: float):
    exps = [0] * n_vars
    exps[i] = 3
    return [(tuple(exps), out, kappa)]


def quarter_car(m_s: float = 229.0, m_u: float = 31.0, c_s: float = 100.0,
                c_t: float = 100.0, k_s: float = 6.0e4, k_t: float = 2.0e4,
                kappa: float = 2.5e5, v: float = 30.0, L: float = 1800.0,
                A_v: float = 3.5e-5, a: float = 0.4) -> ModelPreset:
    """Two-mass vehicle suspension rolling over an irregular road profile.

    The sprung and unsprung masses couple through a linear-plus-cubic
    suspension spring; the tire transmits the road elevation and its
    gradient, so the force on the unsprung mass is
    k_t*theta_h + c_t*v*theta_grad, synthesized from the two road spectra
    over the travel time L/v.
    """
    M = np.diag([m_s, m_u])
    C = np.array([[c_s, -c_s], [-c_s, c_s + c_t]])
    K = np.array([[k_s, -k_s], [-k_s, k_s + k_t]])
    terms = _cubic_difference_terms(4, 0, 1, 0, 1, kappa)
    nl = PolynomialMap.from_terms(4, 2, terms)
    system = MechanicalSystem(M, C, K, nl)

    elevation = road_elevation_psd(A_v, a, v)
    gradient = road_gradient_psd(A_v, a, v)
    noise = NoiseSourceConfig(
        method="psd",
        channels=(PsdChannel(elevation, gain=k_t),
                  PsdChannel(gradient, gain=c_t * v)))

    lo = elevation.omega_min - 0.5 * elevation.delta_omega
    hi = elevation.omega_max + 0.5 * elevation.delta_omega

    def phi_g(omega: float) -> np.ndarray:
        out = np.zeros((2, 2))
        if lo <= omega <= hi:
            out[1, 1] = (k_t ** 2 * elevation.psd(omega)
                         + (c_t * v) ** 2 * gradient.psd(omega))
        return out

    return ModelPreset(
        name="quarter-car", system=system, noise=noise,
        shape=np.array([0.0, 1.0]), observables=("q0",),
        linear_reference="analytic", phi_g=phi_g, default_T=L / v,
        params=dict(m_s=m_s, m_u=m_u, c_s=c_s, c_t=c_t, k_s=k_s, k_t=k_t,
                    kappa=kappa, v=v, L=L, A_v=A_v, a=a))


def _chain_matrices(n: int, mass: float, k: float):
    M = mass * np.eye(n)
    K = np.zeros((n, n))
    for i in range(n):
        K[i, i] = 2.0 * k if i < n - 1 else k
        if i + 1 < n:
            K[i, i + 1] = -k
            K[i + 1, i] = -k
    return M, K


def _interstorey_cubic(n: int, kappa: float, ground_spring: bool):
    terms = []
    n_vars = 2 * n
    for i in range(n - 1):
        terms.extend(_cubic_difference_terms(n_vars, i, i + 1, i, i + 1,
                                             kappa))
    if ground_spring:
        terms.extend(_cubic_single_terms(n_vars, 0, 0, kappa))
    return PolynomialMap.from_terms(n_vars, n, terms)


def building(n: int = 10, mass: float = 7.0, alpha: float = 0.0,
             beta: float = 0.0198, k: float = 4555.0, kappa: float = 2000.0,
             ground_spring: bool = False, intensity: float = 1.0,
             linear_ref: str = "simulated") -> ModelPreset:
    """Shear-frame building: uniform storey chain under ground acceleration.

    Cubic springs act between consecutive storeys (optionally one more to
    ground).  The ground acceleration is the reflected, filtered bounded
    noise; it enters as the inertial force (M * ones) * acceleration.

    ``linear_ref="analytic"`` swaps the simulated linearized reference
    for the closed-form response to the filter's Gaussian output,
    ignoring the reflection.  That is a good approximation only while
    the filter output rarely reaches the unit boundary, i.e. while
    intensity / sqrt(2*k_f*c_f) stays below about one third; at the
    default intensity the reflection saturates and the analytic curve
    overshoots by orders of magnitude, hence the simulated default.
    """
    if n < 1:
        raise ConfigError("building needs at least one storey")
    if linear_ref not in ("analytic", "simulated"):
        raise ConfigError(
            f"linear_ref must be analytic or simulated, not {linear_ref!r}")
    M, K = _chain_matrices(n, mass, k)
    C = alpha * M + beta * K
    nl = _interstorey_cubic(n, kappa, ground_spring)
    system = MechanicalSystem(M, C, K, nl)
    fcfg = FilterConfig(m=1e-6, c=2e-5, k=4e-6, output="a",
                        intensity=intensity)
    noise = NoiseSourceConfig(method="reflected", filter=fcfg)
    shape = M @ np.ones(n)

    def phi_g(omega):
        # one-sided spectrum of the unreflected filter output, times the
        # rank-one inertial load pattern
        den = (fcfg.k - fcfg.m * omega ** 2) ** 2 + (fcfg.c * omega) ** 2
        phi_a = intensity ** 2 / (np.pi * den)
        return phi_a * np.outer(shape, shape)

    return ModelPreset(
        name="building", system=system, noise=noise,
        shape=shape, observables=(f"q{n - 1}",),
        linear_reference=linear_ref,
        phi_g=phi_g if linear_ref == "analytic" else None,
        default_T=None,
        params=dict(n=n, mass=mass, alpha=alpha, beta=beta, k=k,
                    kappa=kappa, ground_spring=ground_spring,
                    intensity=intensity, linear_ref=linear_ref))


def chain_frequencies(n: int, mass: float, k: float) -> np.ndarray:
    """Closed-form natural frequencies of the uniform fixed-free chain."""
    j = np.arange(1, n + 1)
    return 2.0 * np.sqrt(k / mass) * np.sin(
        (2 * j - 1) * np.pi / (2.0 * (2 * n + 1)))


def cubic_chain(n: int = 30, mass: float = 1.0, k: float = 100.0,
                kappa: float = 50.0, alpha: float = 0.0, beta: float = 0.5,
                intensity: float = 1.0) -> ModelPreset:
    """Uniform oscillator chain with stiffness-heavy damping.

    The stiffness-proportional damping makes modal decay grow with
    frequency squared, so the slow pair is separated from the rest by a
    wide spectral gap; chains up to n=60 exercise the dimension scaling
    of the reduced pipeline.
    """
    if n < 2:
        raise ConfigError("cubic_chain needs at least two masses")
    M, K = _chain_matrices(n, mass, k)
    C = alpha * M + beta * K
    nl = _interstorey_cubic(n, kappa, ground_spring=False)
    system = MechanicalSystem(M, C, K, nl)
    noise = NoiseSourceConfig(
        method="filtered",
        filter=FilterConfig(m=1e-6, c=2e-5, k=4e-6, output="a",
                            intensity=intensity))
    return ModelPreset(
        name="chain", system=system, noise=noise,
        shape=M @ np.ones(n), observables=(f"q{n - 1}",),
        linear_reference="simulated", default_T=None,
        params=dict(n=n, mass=mass, k=k, kappa=kappa, alpha=alpha,
                    beta=beta, intensity=intensity))


def duffing(mass: float = 1.0, c: float = 0.2, k: float = 1.0,
            kappa: float = 0.5, intensity: float = 1.0) -> ModelPreset:
    """Single-DOF oscillator with a cubic spring; the whole plane is slow."""
    M = np.array([[mass]])
    C = np.array([[c]])
    K = np.array([[k]])
    nl = PolynomialMap.from_terms(2, 1, _cubic_single_terms(2, 0, 0, kappa))
    system = MechanicalSystem(M, C, K, nl)
    noise = NoiseSourceConfig(
        method="filtered",
        filter=FilterConfig(m=1e-6, c=2e-5, k=4e-6, output="a",
                            intensity=intensity))
    return ModelPreset(
        name="duffing", system=system, noise=noise,
        shape=np.array([1.0]), observables=("q0",),
        linear_reference="simulated", default_T=None,
        params=dict(mass=mass, c=c, k=k, kappa=kappa, intensity=intensity))


PRESETS = {
    "quarter-car": quarter_car,
    "building": building,
    "chain": cubic_chain,
    "duffing": duffing,
}


def parse_model_spec(spec: str):
    """Split 'building:n=10,kappa=0' into the preset name and kwargs."""
    name, _, tail = spec.partition(":")
    name = name.strip()
    if name not in PRESETS:
        raise ConfigError(
            f"unknown model {name!r}; available: {sorted(PRESETS)}")
    kwargs = {}
    if tail.strip():
        for item in tail.split(","):
            key, eq, value = item.partition("=")
            key = key.strip()
            value = value.strip()
            if not eq or not key or not value:
                raise ConfigError(
                    f"model option {item!r} is not of the form key=value")
            if value.lower() in ("true", "false"):
                kwargs[key] = value.lower() == "true"
            else:
                try:
                    kwargs[key] = int(value)
                except ValueError:
                    try:
                        kwargs[key] = float(value)
                    except ValueError:
                        kwargs[key] = value
    return name, kwargs


def make_model(spec: str) -> ModelPreset:
    """Build a preset from its CLI spelling, e.g. 'chain:n=30'."""
    name, kwargs = parse_model_spec(spec)
    try:
        return PRESETS[name](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad options for model {name!r}: {exc}")
