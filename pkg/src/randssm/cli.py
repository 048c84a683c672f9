"""Command-line front end.

Every subcommand resolves its settings from defaults, then an optional
YAML config file, then explicit flags (flags win), writes its CSV and
figure artifacts into one output directory, and drops a ``manifest.yaml``
there echoing the fully resolved config.  A manifest fed back through
``--config`` reproduces the run.

Exit codes: 0 success, 2 configuration or validation error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import configio
from .ensemble import (ExperimentConfig, compare_psd, run_experiment,
                       _override_method)
from .errors import ConfigError, RandssmError
from .forcing import generate_noise
from .manifold import (coefficient_rows, compute_autonomous_ssm,
                       invariance_residual)
from .models import make_model
from .plots import plot_noise_path, plot_psd_comparison, plot_residual_scaling
from .psd import read_psd_csv, estimate_psd, write_psd_csv
from .spectral import (check_nonresonance, compute_spectrum, slow_subspace,
                       spectral_gap, spectral_quotient)
from .systems import to_first_order

WORKERS_ENV = "RANDSSM_WORKERS"


def _outdir(args) -> Path:
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _file_cfg(args) -> dict:
    if getattr(args, "config", None):
        return configio.load_config(args.config)
    return {}


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


# ---------------------------------------------------------------------------
# analyze-spectrum
# ---------------------------------------------------------------------------

_SPECTRUM_KEYS = {
    "model": configio._as_str,
    "order": configio._as_int,
}


def cmd_analyze_spectrum(args) -> int:
    cfg = configio.resolve_settings(
        _SPECTRUM_KEYS, {"model": None, "order": 5}, _file_cfg(args),
        {"model": args.model, "order": args.order})
    if cfg["model"] is None:
        raise ConfigError("missing required key 'model'")
    out = _outdir(args)
    preset = make_model(cfg["model"])
    fos = to_first_order(preset.system)
    spec = compute_spectrum(fos.A)
    d = slow_subspace(spec, 1).d

    rows = [(i, float(spec.eigenvalues[i].real),
             float(spec.eigenvalues[i].imag), b)
            for i, b in spec.block_table()]
    csv_path = _write_csv(out / "spectrum.csv",
                          ("index", "re", "im", "block"), rows)

    hits = check_nonresonance(spec, d, cfg["order"])
    extra = {
        "spectral_quotient": spectral_quotient(spec),
        "slow_dimension": d,
        "decay_gap_at_slow_boundary": (
            spectral_gap(spec, d) if d < spec.dim else None),
        "resonances": [{"exponents": list(h.exponents),
                        "outer_index": h.outer_index,
                        "defect": float(h.defect)} for h in hits],
    }
    configio.write_manifest(
        out / "manifest.yaml", command="analyze-spectrum", config=cfg,
        artifacts=[csv_path.name], extra=extra)
    print(f"spectrum of {cfg['model']}: dim {spec.dim}, slow pair "
          f"dimension {d}, {len(hits)} resonance hits -> {out}")
    return 0


# ---------------------------------------------------------------------------
# compute-ssm
# ---------------------------------------------------------------------------

_SSM_KEYS = {
    "model": configio._as_str,
    "order": configio._as_int,
    "seed": configio._as_int,
}


def cmd_compute_ssm(args) -> int:
    cfg = configio.resolve_settings(
        _SSM_KEYS, {"model": None, "order": 5, "seed": 0}, _file_cfg(args),
        {"model": args.model, "order": args.order, "seed": args.seed})
    if cfg["model"] is None:
        raise ConfigError("missing required key 'model'")
    out = _outdir(args)
    preset = make_model(cfg["model"])
    fos = to_first_order(preset.system)
    sub = slow_subspace(compute_spectrum(fos.A), 1)
    expansion = compute_autonomous_ssm(fos, sub, cfg["order"])

    coeff_rows = [(target, order, ";".join(str(e) for e in exps), idx,
                   repr(coeff))
                  for target, order, exps, idx, coeff
                  in coefficient_rows(expansion)]
    coeff_path = _write_csv(
        out / "coefficients.csv",
        ("target", "order", "exponents", "index", "coefficient"),
        coeff_rows)

    # invariance error along random directions, one curve per truncation
    rng = np.random.default_rng(cfg["seed"])
    dirs = rng.standard_normal((10, sub.d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    amplitudes = np.geomspace(1e-4, 1e-2, 9)
    orders = sorted({k for k in (cfg["order"] - 4, cfg["order"] - 2,
                                 cfg["order"]) if k >= 2})
    residuals = {}
    for k in orders or [cfg["order"]]:
        exp_k = expansion.truncated(k)
        res = np.empty(amplitudes.size)
        for j, s in enumerate(amplitudes):
            res[j] = max(float(np.abs(invariance_residual(
                fos, exp_k, s * u)).max()) for u in dirs)
        residuals[k] = res
    res_rows = [(k, float(s), float(r))
                for k in sorted(residuals)
                for s, r in zip(amplitudes, residuals[k])]
    res_path = _write_csv(out / "residuals.csv",
                          ("order", "amplitude", "max_residual"), res_rows)
    fig_path = plot_residual_scaling(
        amplitudes, residuals, out / "residual_scaling.png",
        title=f"invariance error, {cfg['model']}")

    slopes = {}
    for k, res in residuals.items():
        if np.all(res > 0.0):
            slopes[k] = float(np.polyfit(np.log(amplitudes),
                                         np.log(res), 1)[0])
        else:
            slopes[k] = None  # exact to machine precision
    extra = {
        "slow_dimension": sub.d,
        "expansion_order": cfg["order"],
        "validity_radius": float(expansion.validity_radius),
        "small_divisors": [
            {"exponents": list(m), "outer_index": int(k),
             "divisor": float(v)}
            for m, k, v in expansion.small_divisors],
        "residual_slopes": slopes,
    }
    configio.write_manifest(
        out / "manifest.yaml", command="compute-ssm", config=cfg,
        artifacts=[coeff_path.name, res_path.name, Path(fig_path).name],
        extra=extra)
    print(f"order-{cfg['order']} manifold of {cfg['model']}: "
          f"{len(coeff_rows)} coefficients, residual slopes {slopes} "
          f"-> {out}")
    return 0


# ---------------------------------------------------------------------------
# gen-noise
# ---------------------------------------------------------------------------

_NOISE_KEYS = {
    "model": configio._as_str,
    "method": configio._opt(configio._as_str),
    "T": configio._as_float,
    "dt": configio._as_float,
    "seed": configio._as_int,
}


def cmd_gen_noise(args) -> int:
    cfg = configio.resolve_settings(
        _NOISE_KEYS,
        {"model": None, "method": None, "T": None, "dt": None, "seed": 0},
        _file_cfg(args),
        {"model": args.model, "method": args.method, "T": args.T,
         "dt": args.dt, "seed": args.seed})
    for key in ("model", "T", "dt"):
        if cfg[key] is None:
            raise ConfigError(f"missing required key {key!r}")
    out = _outdir(args)
    preset = make_model(cfg["model"])
    if cfg["method"] is not None and cfg["method"] != preset.noise.method:
        preset = _override_method(preset, cfg["method"])
    noise = generate_noise(preset.noise, cfg["T"], cfg["dt"],
                           seed=(cfg["seed"], 0))

    csv_path = _write_csv(out / "noise.csv", ("t", "theta"),
                          ((float(t), float(x))
                           for t, x in zip(noise.times, noise.samples)))
    fig_path = plot_noise_path(
        noise, out / "noise_path.png",
        title=f"{preset.noise.method} forcing, {cfg['model']}")
    extra = {
        "method": preset.noise.method,
        "declared_bound": float(noise.declared_bound),
        "max_abs_sample": float(np.abs(noise.samples).max()),
        "n_samples": int(noise.samples.size),
        "realization_seeds": [[cfg["seed"], 0]],
    }
    configio.write_manifest(
        out / "manifest.yaml", command="gen-noise", config=cfg,
        artifacts=[csv_path.name, Path(fig_path).name], extra=extra)
    print(f"{noise.samples.size} samples of {preset.noise.method} noise, "
          f"bound {noise.declared_bound:.4g} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    env_workers = os.environ.get(WORKERS_ENV)
    defaults = {
        "model": None, "epsilon": None, "m": None, "T": None, "dt": None,
        "order": 5, "include_h1": False, "seed": 0, "observables": None,
        "workers": int(env_workers) if env_workers else 1,
        "discard": None, "variants": ["full", "reduced", "linear"],
        "method": None, "keep_signals": False,
    }
    flags = {
        "model": args.model, "epsilon": args.epsilon, "m": args.m,
        "T": args.T, "dt": args.dt, "order": args.order,
        "include_h1": args.include_h1, "seed": args.seed,
        "observables": args.observables, "workers": args.workers,
        "discard": args.discard, "variants": args.variants,
        "method": args.method, "keep_signals": args.save_trajectories,
    }
    resolved = configio.resolve_settings(configio.EXPERIMENT_KEYS, defaults,
                                         _file_cfg(args), flags)
    cfg = configio.experiment_from_mapping(resolved)
    out = _outdir(args)

    report = run_experiment(cfg)

    artifacts = []
    for variant, est in report.psd.items():
        p = out / f"psd_{variant}.csv"
        write_psd_csv(p, est)
        artifacts.append(p.name)

    pairs = [(a, b) for a, b in (("full", "reduced"), ("full", "linear"),
                                 ("reduced", "linear"))
             if a in report.psd and b in report.psd]
    metric_rows = []
    band = None
    for a, b in pairs:
        c = compare_psd(report.psd[a], report.psd[b])
        if band is None:
            band = c.band
        metric_rows.append((f"{a}-vs-{b}", c.label, c.band[0], c.band[1],
                            c.band_mean_abs_db, c.peak_offset_bins,
                            c.peak_db_gap))
        print(f"{a} vs {b} [{c.label}]: band mean |gap| "
              f"{c.band_mean_abs_db:.2f} dB, peak offset "
              f"{c.peak_offset_bins} bins, peak gap {c.peak_db_gap:.2f} dB")
    if metric_rows:
        _write_csv(out / "metrics.csv",
                   ("pair", "label", "band_lo_rad_s", "band_hi_rad_s",
                    "band_mean_abs_db", "peak_offset_bins", "peak_db_gap"),
                   metric_rows)
        artifacts.append("metrics.csv")

    fig = plot_psd_comparison(
        report.psd, out / "psd_comparison.png",
        title=f"{cfg.model}, epsilon={cfg.epsilon}, m={cfg.m}", band=band)
    artifacts.append(Path(fig).name)

    if report.signals is not None:
        traj_dir = out / "trajectories"
        traj_dir.mkdir(exist_ok=True)
        times = cfg.dt * np.arange(cfg.n_steps + 1)
        header = ("t",) + tuple(report.observables)
        for variant, sig in report.signals.items():
            for i in range(sig.shape[0]):
                p = traj_dir / f"{variant}_r{i:03d}.csv"
                _write_csv(p, header,
                           np.column_stack([times, sig[i]]).tolist())
                artifacts.append(f"trajectories/{p.name}")

    configio.write_manifest(
        out / "manifest.yaml", command="simulate",
        config=configio.experiment_to_mapping(cfg),
        artifacts=artifacts, report=report)
    total = report.reduced_total_time
    full_t = report.wall_times.get("full")
    if full_t:
        print(f"wall time: full ensemble {full_t:.2f}s, manifold build + "
              f"reduced ensemble {total:.2f}s")
    print(f"artifacts -> {out}")
    return 0


# ---------------------------------------------------------------------------
# psd
# ---------------------------------------------------------------------------

_PSD_KEYS = {
    "input": configio._as_str,
    "discard": configio._as_float,
    "window": configio._opt(configio._as_str),
}


def _read_trajectory_csv(path):
    try:
        with open(path) as fh:
            reader = csv.reader(fh)
            header = next(reader, [])
        if not header or header[0] != "t":
            raise ConfigError(f"{path}: first column must be 't', "
                              f"got {header[:1]}")
        data = np.loadtxt(path, delimiter=",", skiprows=1)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read trajectory {path}: {exc}")
    if data.ndim == 1:
        data = data[None]
    if data.shape[0] < 2:
        raise ConfigError(f"{path}: need at least two samples")
    t = data[:, 0]
    steps = np.diff(t)
    if steps.min() <= 0 or np.ptp(steps) > 1e-9 * steps.max():
        raise ConfigError(f"{path}: time column is not a uniform grid")
    return float(steps.mean()), tuple(header[1:]), data[:, 1:]


def cmd_psd(args) -> int:
    cfg = configio.resolve_settings(
        _PSD_KEYS, {"input": None, "discard": 0.0, "window": None},
        _file_cfg(args),
        {"input": args.input, "discard": args.discard,
         "window": args.window})
    if cfg["input"] is None:
        raise ConfigError("missing required key 'input'")
    out = _outdir(args)
    dt, labels, signals = _read_trajectory_csv(cfg["input"])
    est = estimate_psd(signals[None], dt, discard=cfg["discard"],
                       labels=labels, window=cfg["window"])
    psd_path = out / "psd.csv"
    write_psd_csv(psd_path, est)
    fig = plot_psd_comparison({"signal": est}, out / "psd.png",
                              title=Path(cfg["input"]).name)
    configio.write_manifest(
        out / "manifest.yaml", command="psd", config=cfg,
        artifacts=[psd_path.name, Path(fig).name],
        extra={"dt": dt, "n_samples": int(signals.shape[0]),
               "labels": list(labels)})
    print(f"PSD over {est.omega.size} frequency bins -> {out}")
    return 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

_COMPARE_KEYS = {
    "inputs": configio._as_str_tuple,
    "band": configio._opt(configio._as_str),
    "label": configio._opt(configio._as_str),
}


def _load_psd_table(path):
    try:
        return read_psd_csv(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read PSD table {path}: {exc}")


def cmd_compare(args) -> int:
    cfg = configio.resolve_settings(
        _COMPARE_KEYS, {"inputs": (), "band": "auto", "label": None},
        _file_cfg(args),
        {"inputs": tuple(args.inputs) if args.inputs else None,
         "band": args.band, "label": args.label})
    if len(cfg["inputs"]) != 2:
        raise ConfigError(
            f"compare needs exactly two PSD CSV files, got "
            f"{list(cfg['inputs'])}")
    band = None
    if cfg["band"] not in (None, "auto"):
        parts = cfg["band"].split(",")
        try:
            band = (float(parts[0]), float(parts[1]))
        except (ValueError, IndexError):
            raise ConfigError(
                f"key 'band' expects 'auto' or 'lo,hi', got {cfg['band']!r}")
    out = _outdir(args)
    a = _load_psd_table(cfg["inputs"][0])
    b = _load_psd_table(cfg["inputs"][1])
    c = compare_psd(a, b, band=band, label=cfg["label"])

    _write_csv(out / "metrics.csv",
               ("pair", "label", "band_lo_rad_s", "band_hi_rad_s",
                "band_mean_abs_db", "peak_offset_bins", "peak_db_gap"),
               [(f"{Path(cfg['inputs'][0]).stem}-vs-"
                 f"{Path(cfg['inputs'][1]).stem}", c.label, c.band[0],
                 c.band[1], c.band_mean_abs_db, c.peak_offset_bins,
                 c.peak_db_gap)])
    name_a = Path(cfg["inputs"][0]).stem
    name_b = Path(cfg["inputs"][1]).stem
    fig = plot_psd_comparison({name_a: a, name_b: b}, out / "compare.png",
                              label=c.label, band=c.band)
    configio.write_manifest(
        out / "manifest.yaml", command="compare", config=cfg,
        artifacts=["metrics.csv", Path(fig).name])
    print(f"{name_a} vs {name_b} [{c.label}]")
    print(f"  band           : {c.band[0]:.4g} .. {c.band[1]:.4g} rad/s")
    print(f"  band mean |gap|: {c.band_mean_abs_db:.3f} dB")
    print(f"  peak offset    : {c.peak_offset_bins} bins")
    print(f"  peak gap       : {c.peak_db_gap:.3f} dB")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="randssm",
        description="Reduced-order Monte-Carlo spectra for randomly "
                    "forced nonlinear mechanical systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--outdir", "-o", default="randssm-out",
                       help="output directory (all artifacts land here)")
        p.add_argument("--config", help="YAML config file or a previous "
                                        "run's manifest.yaml")

    p = sub.add_parser("analyze-spectrum",
                       help="eigenvalues, blocks, gaps, resonance scan")
    common(p)
    p.add_argument("--model", help="preset name with optional parameters, "
                                   "e.g. building:n=10,kappa=0")
    p.add_argument("--order", type=int, help="resonance scan depth")
    p.set_defaults(func=cmd_analyze_spectrum)

    p = sub.add_parser("compute-ssm",
                       help="manifold coefficient table and residuals")
    common(p)
    p.add_argument("--model")
    p.add_argument("--order", type=int, help="expansion order")
    p.add_argument("--seed", type=int, help="seed for residual directions")
    p.set_defaults(func=cmd_compute_ssm)

    p = sub.add_parser("gen-noise", help="write one forcing realization")
    common(p)
    p.add_argument("--model")
    p.add_argument("--method", choices=("psd", "filtered", "reflected"))
    p.add_argument("--T", type=float, help="duration (s)")
    p.add_argument("--dt", type=float, help="sample step (s)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_noise)

    p = sub.add_parser("simulate",
                       help="matched full/reduced/linear Monte-Carlo PSDs")
    common(p)
    p.add_argument("--model")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--m", type=int, help="ensemble size")
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--order", type=int)
    p.add_argument("--include-h1", dest="include_h1", action="store_const",
                   const=True, help="first-order random correction")
    p.add_argument("--seed", type=int)
    p.add_argument("--observables", help="comma list, e.g. q0,v1")
    p.add_argument("--workers", type=int,
                   help=f"ensemble parallelism (default ${WORKERS_ENV} "
                        f"or 1); results are worker-count invariant")
    p.add_argument("--discard", type=float, help="transient to drop (s)")
    p.add_argument("--variants", help="comma list from full,reduced,linear")
    p.add_argument("--method", choices=("psd", "filtered", "reflected"))
    p.add_argument("--save-trajectories", dest="save_trajectories",
                   action="store_const", const=True,
                   help="per-realization trajectory CSVs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("psd", help="PSD of a trajectory CSV")
    common(p)
    p.add_argument("input", nargs="?", help="trajectory CSV (t, columns)")
    p.add_argument("--discard", type=float)
    p.add_argument("--window", choices=("hann",))
    p.set_defaults(func=cmd_psd)

    p = sub.add_parser("compare", help="metrics between two PSD CSVs")
    common(p)
    p.add_argument("inputs", nargs="*", help="two PSD CSV files")
    p.add_argument("--band", help="'auto' or 'lo,hi' in rad/s")
    p.add_argument("--label", help="observable column to compare")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RandssmError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
