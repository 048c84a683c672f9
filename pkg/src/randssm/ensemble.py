"""Monte-Carlo experiments: matched full / reduced / linear ensembles.

Every realization index owns one noise path; the full-order, reduced, and
simulated-linear variants all consume that identical path, so spectral
differences between variants measure model error rather than sampling
noise.  Aggregation is a fixed-order indexed reduction, which together
with the frozen-member Newton iteration makes results independent of the
worker count.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, GridMismatch, RandssmError
from .integrate import IntegratorConfig, _newmark_ensemble, _rk4_ensemble
from .manifold import compute_autonomous_ssm
from .models import ModelPreset, make_model
from .forcing import generate_noise
from .polynomial import jacobian_polynomial
from .psd import PsdEstimate, estimate_psd, linear_psd, to_decibel
from .reduced import reduced_forcing
from .spectral import compute_spectrum, slow_subspace
from .systems import ForcingSpec, to_first_order

VARIANTS = ("full", "reduced", "linear")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one Monte-Carlo comparison run."""

    model: str
    epsilon: float
    m: int
    T: float
    dt: float
    order: int = 5
    include_h1: bool = False
    seed: int = 0
    observables: Optional[tuple] = None
    workers: int = 1
    discard: Optional[float] = None
    variants: tuple = VARIANTS
    method: Optional[str] = None
    keep_signals: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("ensemble size m must be at least 1")
        if self.T <= 0.0 or self.dt <= 0.0:
            raise ConfigError("T and dt must be positive")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("T must be an integer multiple of dt")
        if self.order < 1:
            raise ConfigError("order must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad:
            raise ConfigError(f"unknown variants {bad}; pick from {VARIANTS}")
        if self.method is not None and self.method not in (
                "psd", "filtered", "reflected"):
            raise ConfigError(
                f"method must be psd, filtered, or reflected, "
                f"not {self.method!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class ExperimentReport:
    """PSDs, timings, and reproducibility records of one experiment."""

    config: ExperimentConfig
    psd: dict
    wall_times: dict
    realization_seeds: tuple
    noise_hashes: dict
    ssm_info: dict
    discard: float
    observables: tuple = ()
    signals: Optional[dict] = None

    @property
    def reduced_total_time(self) -> float:
        """Wall time of SSM construction plus the reduced ensemble."""
        return (self.wall_times.get("ssm_build", 0.0)
                + self.wall_times.get("reduced", 0.0))


def _observable_columns(labels, n_dof: int):
    cols = []
    for label in labels:
        kind, idx = label[0], label[1:]
        if kind not in ("q", "v") or not idx.isdigit():
            raise ConfigError(
                f"observable {label!r} must look like q3 or v1")
        j = int(idx)
        if j >= n_dof:
            raise ConfigError(
                f"observable {label!r} exceeds {n_dof} DOFs")
        cols.append(j if kind == "q" else n_dof + j)
    return cols


#: realizations integrated together in one array batch.  Chunk boundaries
#: depend only on the ensemble size, never on the worker count: BLAS kernels
#: round differently for different batch heights (gemv vs gemm dispatch), so
#: tying chunks to workers would make results worker-dependent at the 1e-20
#: level.  Workers only set how many fixed chunks run concurrently.
CHUNK_SIZE = 10


def _chunk_slices(m: int):
    return [slice(i, min(i + CHUNK_SIZE, m)) for i in range(0, m, CHUNK_SIZE)]


def _run_chunked(workers: int, m: int, fn):
    """Apply fn(slice) over the fixed chunk grid, stitching by index."""
    slices = _chunk_slices(m)
    if workers == 1 or len(slices) == 1:
        parts = [fn(sl) for sl in slices]
    else:
        with ThreadPoolExecutor(max_workers=min(workers,
                                                len(slices))) as pool:
            parts = list(pool.map(fn, slices))
    if len(parts) == 1:
        return parts[0]
    return np.concatenate(parts, axis=0)


def _hash_path(samples: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(samples).tobytes()).hexdigest()


def _override_method(preset: ModelPreset, method: str) -> ModelPreset:
    """Swap the noise-generation method, keeping the preset's parameters."""
    from dataclasses import replace
    noise = preset.noise
    if method == "psd" and not noise.channels:
        raise ConfigError(
            f"model {preset.name!r} declares no spectral channels; "
            f"method=psd needs them")
    if method in ("filtered", "reflected") and noise.filter is None:
        raise ConfigError(
            f"model {preset.name!r} declares no noise filter; "
            f"method={method} needs one")
    new_noise = replace(noise, method=method)
    # an analytic linear reference describes one forcing spectrum: the
    # declared channels for method=psd, the noise filter otherwise.
    # Crossing between those families invalidates it.
    kwargs = {"noise": new_noise}
    family_changed = (noise.method == "psd") != (method == "psd")
    if family_changed and preset.linear_reference == "analytic":
        kwargs["linear_reference"] = "simulated"
        kwargs["phi_g"] = None
    return replace(preset, **kwargs)


def default_discard(spectrum, include_h1: bool, d: int) -> float:
    """Transient to drop: five slowest decay times, extended when the
    auxiliary correction state needs its own spin-up."""
    slowest = abs(spectrum.eigenvalues[0].real)
    out = 5.0 / slowest
    if include_h1 and spectrum.dim > d:
        outer = abs(spectrum.eigenvalues[d].real)
        out = max(out, 10.0 / outer)
    return out


def run_experiment(cfg: ExperimentConfig,
                   preset: Optional[ModelPreset] = None) -> ExperimentReport:
    """Run the matched ensembles and estimate each variant's PSD.

    The reduced variant always starts on the manifold (the origin); the
    full and linear variants start at the corresponding lifted state, so
    every trajectory begins on the random manifold up to the correction
    order.
    """
    if preset is None:
        preset = make_model(cfg.model)
    if cfg.method is not None and cfg.method != preset.noise.method:
        preset = _override_method(preset, cfg.method)
    system = preset.system
    n = system.n_dof
    obs_labels = tuple(cfg.observables or preset.observables)
    obs_cols = _observable_columns(obs_labels, n)

    forcing = ForcingSpec(kind="external", shape=preset.shape,
                          epsilon=cfg.epsilon, noise=preset.noise)
    fos = to_first_order(system, forcing)
    spectrum = compute_spectrum(fos.A)
    sub = slow_subspace(spectrum, 1)

    t0 = time.perf_counter()
    expansion = compute_autonomous_ssm(fos, sub, cfg.order)
    t_ssm = time.perf_counter() - t0

    L = cfg.n_steps
    seeds = tuple((cfg.seed, i) for i in range(cfg.m))
    paths = [generate_noise(preset.noise, cfg.T, cfg.dt, seed)
             for seed in seeds]
    thetas = np.stack([p.samples for p in paths])          # (m, L+1)

    discard = cfg.discard
    if discard is None:
        discard = default_discard(spectrum, cfg.include_h1, sub.d)
    if discard >= cfg.T:
        raise ConfigError(
            f"transient discard {discard:.1f}s consumes the whole run "
            f"T={cfg.T}s; lengthen T or pass an explicit discard")

    icfg = IntegratorConfig(dt=cfg.dt)
    psd: dict = {}
    wall: dict = {"ssm_build": t_ssm}
    hashes: dict = {}
    signals: Optional[dict] = {} if cfg.keep_signals else None

    if "full" in cfg.variants:
        forces = cfg.epsilon * thetas[:, :L, None] * preset.shape
        t0 = time.perf_counter()

        def full_chunk(sl):
            try:
                stored, _ = _newmark_ensemble(
                    system, forces[sl], np.zeros((sl.stop - sl.start, n)),
                    np.zeros((sl.stop - sl.start, n)), icfg,
                    store_cols=obs_cols)
            except RandssmError as exc:
                raise RandssmError(
                    f"{exc} [full variant, realizations "
                    f"{sl.start}..{sl.stop - 1}, master seed "
                    f"{cfg.seed}]") from exc
            return stored

        obs_full = _run_chunked(cfg.workers, cfg.m, full_chunk)
        wall["full"] = time.perf_counter() - t0
        psd["full"] = estimate_psd(obs_full, cfg.dt, discard=discard,
                                   labels=obs_labels)
        hashes["full"] = tuple(_hash_path(thetas[i]) for i in range(cfg.m))
        if signals is not None:
            signals["full"] = obs_full

    if "reduced" in cfg.variants:
        gxi_unit = reduced_forcing(sub, fos.G_unit)
        obs_matrix = expansion.W[:, obs_cols]
        h1_pieces = None
        if cfg.include_h1:
            Ed = expm(fos.A * cfg.dt)
            pg = sub.complement_projector @ fos.G_unit
            jcol = np.linalg.solve(fos.A, (Ed - np.eye(fos.dim)) @ pg)
            P_T = sub.complement_projector.T

            def coupling(xi_s, w):
                # slope of the nonlinearity along the manifold, applied to
                # the lifted correction, pushed back to reduced coordinates
                x0 = expansion.monomial_values(xi_s) @ expansion.W
                DF = jacobian_polynomial(fos.F, x0)
                h1 = w @ P_T
                return np.einsum("mij,mj->mi", DF, h1) @ sub.VE_L.T

            h1_pieces = {"Ed": Ed, "jcol": jcol, "coupling": coupling,
                         "obs_perp": P_T[:, obs_cols]}
        t0 = time.perf_counter()

        def reduced_chunk(sl):
            stored, _, _ = _rk4_ensemble(
                expansion, gxi_unit, thetas[sl], cfg.epsilon,
                np.zeros((sl.stop - sl.start, sub.d)), cfg.dt,
                obs_matrix=obs_matrix, h1_pieces=h1_pieces)
            return stored

        obs_red = _run_chunked(cfg.workers, cfg.m, reduced_chunk)
        wall["reduced"] = time.perf_counter() - t0
        psd["reduced"] = estimate_psd(obs_red, cfg.dt, discard=discard,
                                      labels=obs_labels)
        hashes["reduced"] = tuple(_hash_path(thetas[i])
                                  for i in range(cfg.m))
        if signals is not None:
            signals["reduced"] = obs_red

    if "linear" in cfg.variants:
        if preset.linear_reference == "analytic" and preset.phi_g is not None:
            ref_grid = None
            for key in ("full", "reduced"):
                if key in psd:
                    ref_grid = psd[key].omega
                    break
            if ref_grid is None:
                n_eff = L + 1 - int(round(discard / cfg.dt))
                ref_grid = 2.0 * np.pi * np.fft.rfftfreq(n_eff, d=cfg.dt)
            scale = cfg.epsilon ** 2
            t0 = time.perf_counter()
            lin_all = linear_psd(
                system, lambda w: scale * np.asarray(preset.phi_g(w)),
                ref_grid, labels=tuple(f"q{i}" for i in range(n)))
            rows = []
            for lab in obs_labels:
                base = lin_all.values[int(lab[1:])]
                if lab[0] == "v":
                    # stationary velocity spectrum from the displacement one
                    base = base * ref_grid ** 2
                rows.append(base)
            psd["linear"] = PsdEstimate(
                omega=lin_all.omega, values=np.stack(rows),
                labels=obs_labels, ensemble_size=0,
                normalization=lin_all.normalization,
                skipped=lin_all.skipped)
            wall["linear"] = time.perf_counter() - t0
        else:
            lin_sys = preset.linearized()
            forces = cfg.epsilon * thetas[:, :L, None] * preset.shape
            t0 = time.perf_counter()

            def lin_chunk(sl):
                stored, _ = _newmark_ensemble(
                    lin_sys, forces[sl], np.zeros((sl.stop - sl.start, n)),
                    np.zeros((sl.stop - sl.start, n)), icfg,
                    store_cols=obs_cols)
                return stored

            obs_lin = _run_chunked(cfg.workers, cfg.m, lin_chunk)
            wall["linear"] = time.perf_counter() - t0
            psd["linear"] = estimate_psd(obs_lin, cfg.dt, discard=discard,
                                         labels=obs_labels)
            hashes["linear"] = tuple(_hash_path(thetas[i])
                                     for i in range(cfg.m))
            if signals is not None:
                signals["linear"] = obs_lin

    ssm_info = {
        "order": cfg.order,
        "d": sub.d,
        "slow_eigenvalues": [complex(z) for z in sub.slow_eigenvalues],
        "validity_radius": expansion.validity_radius,
        "small_divisors": len(expansion.small_divisors),
    }
    return ExperimentReport(
        config=cfg, psd=psd, wall_times=wall, realization_seeds=seeds,
        noise_hashes=hashes, ssm_info=ssm_info, discard=discard,
        observables=obs_labels, signals=signals)


# ---------------------------------------------------------------------------
# PSD comparison metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PsdComparison:
    band: tuple
    band_mean_abs_db: float
    peak_offset_bins: int
    peak_db_gap: float
    label: str


def compare_psd(a: PsdEstimate, b: PsdEstimate,
                band: Optional[tuple] = None,
                label: Optional[str] = None) -> PsdComparison:
    """Band-averaged decibel gap and peak mismatch between two estimates.

    The default band spans [0.5, 2] times the peak frequency of ``a``
    (ignoring the zero-frequency bin).  Grids must match exactly.
    """
    if a.omega.shape != b.omega.shape or not np.array_equal(a.omega, b.omega):
        raise GridMismatch("PSD grids differ; interpolation is not applied")
    if label is None:
        common = [lab for lab in a.labels if lab in b.labels]
        if not common:
            raise GridMismatch(
                f"no shared observable between {a.labels} and {b.labels}")
        label = common[0]
    ya = a.row(label)
    yb = b.row(label)
    start = 1 if a.omega[0] == 0.0 else 0
    finite = np.isfinite(ya)
    peak_idx = start + int(np.nanargmax(np.where(finite, ya, -np.inf)[start:]))
    om_peak = a.omega[peak_idx]
    if band is None:
        band = (0.5 * om_peak, 2.0 * om_peak)
    in_band = (a.omega >= band[0]) & (a.omega <= band[1])
    in_band &= np.isfinite(ya) & np.isfinite(yb)
    if not in_band.any():
        raise GridMismatch(f"band {band} contains no usable grid points")
    da = to_decibel(ya[in_band])
    db = to_decibel(yb[in_band])
    gap = float(np.mean(np.abs(da - db)))
    peak_b = start + int(np.nanargmax(
        np.where(np.isfinite(yb), yb, -np.inf)[start:]))
    peak_gap = float(to_decibel(ya[peak_idx]) - to_decibel(yb[peak_b]))
    return PsdComparison(band=tuple(float(x) for x in band),
                         band_mean_abs_db=gap,
                         peak_offset_bins=int(peak_b - peak_idx),
                         peak_db_gap=peak_gap, label=label)
