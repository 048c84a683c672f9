"""End-to-end CLI runs against temporary output directories."""

import numpy as np
import pytest
import yaml
from numpy.testing import assert_allclose

from randssm.cli import main
from randssm.psd import read_psd_csv

DUFFING = "duffing:intensity=4e-6"


def run(args):
    return main([str(a) for a in args])


def test_analyze_spectrum_artifacts(tmp_path, capsys):
    code = run(["analyze-spectrum", "--model", "quarter-car",
                "-o", tmp_path])
    assert code == 0
    lines = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "index,re,im,block"
    assert len(lines) == 5  # header + four eigenvalues
    doc = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
    assert doc["command"] == "analyze-spectrum"
    assert doc["slow_dimension"] == 2
    assert doc["spectral_quotient"] == 25
    assert_allclose(doc["decay_gap_at_slow_boundary"], 25.0, rtol=1e-6)
    assert doc["resonances"] == []
    assert "spectrum.csv" in doc["artifacts"]
    assert "slow pair" in capsys.readouterr().out


def test_compute_ssm_artifacts(tmp_path):
    code = run(["compute-ssm", "--model", DUFFING, "--order", "3",
                "-o", tmp_path])
    assert code == 0
    for name in ("coefficients.csv", "residuals.csv",
                 "residual_scaling.png", "manifest.yaml"):
        assert (tmp_path / name).exists()
    doc = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
    assert doc["expansion_order"] == 3
    assert doc["slow_dimension"] == 2
    # whole-plane manifold: the residual vanishes identically
    assert doc["residual_slopes"] == {3: None}
    header = (tmp_path / "coefficients.csv").read_text().splitlines()[0]
    assert header == "target,order,exponents,index,coefficient"


def test_compute_ssm_slopes_on_reduced_model(tmp_path):
    code = run(["compute-ssm", "--model", "quarter-car", "--order", "3",
                "-o", tmp_path])
    assert code == 0
    doc = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
    slope = doc["residual_slopes"][3]
    assert slope > 3.5


def test_gen_noise_artifacts(tmp_path):
    code = run(["gen-noise", "--model", "building:intensity=4e-6",
                "--T", 2.0, "--dt", 0.01, "--seed", 5, "-o", tmp_path])
    assert code == 0
    lines = (tmp_path / "noise.csv").read_text().splitlines()
    assert lines[0] == "t,theta"
    assert len(lines) == 202  # header + 201 samples
    assert (tmp_path / "noise_path.png").exists()
    doc = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
    assert doc["method"] == "reflected"
    assert doc["declared_bound"] == 1.0
    assert doc["max_abs_sample"] <= 1.0
    assert doc["realization_seeds"] == [[5, 0]]


def test_gen_noise_method_override(tmp_path):
    code = run(["gen-noise", "--model", "building:intensity=4e-6",
                "--method", "filtered", "--T", 1.0, "--dt", 0.01,
                "-o", tmp_path])
    assert code == 0
    doc = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
    assert doc["method"] == "filtered"


def simulate_args(outdir, **extra):
    args = ["simulate", "--model", DUFFING, "--epsilon", 1.0, "--m", 2,
            "--T", 5.0, "--dt", 0.01, "--order", 3, "--seed", 3,
            "--discard", 1.0, "-o", outdir]
    for key, val in extra.items():
        args.extend([key, val])
    return args


def test_simulate_artifacts(tmp_path, capsys):
    code = run(simulate_args(tmp_path))
    assert code == 0
    for name in ("psd_full.csv", "psd_reduced.csv", "psd_linear.csv",
                 "metrics.csv", "psd_comparison.png", "manifest.yaml"):
        assert (tmp_path / name).exists()
    metrics = (tmp_path / "metrics.csv").read_text().splitlines()
    assert metrics[0].startswith("pair,label,")
    assert len(metrics) == 4  # header + three pairings
    out = capsys.readouterr().out
    assert "full vs reduced" in out
    doc = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
    assert doc["config"]["model"] == DUFFING
    assert doc["seed_derivation"].startswith("numpy SeedSequence")
    assert doc["realization_seeds"] == [[3, 0], [3, 1]]
    assert set(doc["noise_sha256"]) == {"full", "reduced", "linear"}


def test_simulate_manifest_reproduces_run(tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    assert run(simulate_args(first)) == 0
    assert main(["simulate", "--config", str(first / "manifest.yaml"),
                 "-o", str(second)]) == 0
    for name in ("psd_full.csv", "psd_reduced.csv", "psd_linear.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_simulate_save_trajectories(tmp_path):
    code = run(simulate_args(tmp_path, **{"--variants": "reduced",
                                          "--m": 2}) +
               ["--save-trajectories"])
    assert code == 0
    traj = tmp_path / "trajectories"
    files = sorted(p.name for p in traj.iterdir())
    assert files == ["reduced_r000.csv", "reduced_r001.csv"]
    lines = (traj / "reduced_r000.csv").read_text().splitlines()
    assert lines[0] == "t,q0"
    assert len(lines) == 502


def test_workers_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("RANDSSM_WORKERS", "4")
    assert run(simulate_args(tmp_path, **{"--variants": "reduced"})) == 0
    doc = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
    assert doc["config"]["workers"] == 4


def test_config_file_layering(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({
        "model": DUFFING, "epsilon": 1.0, "m": 2, "T": 5.0, "dt": 0.01,
        "order": 3, "seed": 3, "discard": 1.0, "variants": ["reduced"]}))
    out = tmp_path / "out"
    # the flag overrides the file's seed
    assert main(["simulate", "--config", str(cfg), "--seed", "7",
                 "-o", str(out)]) == 0
    doc = yaml.safe_load((out / "manifest.yaml").read_text())
    assert doc["config"]["seed"] == 7
    assert doc["config"]["m"] == 2


def test_exit_code_2_on_config_errors(tmp_path, capsys):
    assert run(["analyze-spectrum", "--model", "pendulum",
                "-o", tmp_path]) == 2
    assert "error:" in capsys.readouterr().err
    assert run(["simulate", "--model", DUFFING, "-o", tmp_path]) == 2
    assert run(["compare", "only_one.csv", "-o", tmp_path]) == 2


def test_exit_code_2_on_unreadable_inputs(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert run(["psd", missing, "-o", tmp_path / "a"]) == 2
    assert "cannot read trajectory" in capsys.readouterr().err
    assert run(["compare", missing, missing, "-o", tmp_path / "b"]) == 2
    assert "cannot read PSD table" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("omega_rad_s,psd_q0\n1.0,oops\n")
    assert run(["compare", bad, bad, "-o", tmp_path / "c"]) == 2
    assert "cannot read PSD table" in capsys.readouterr().err


def test_exit_code_3_on_numerical_failure(tmp_path, capsys):
    # this forcing level pushes the cubic root far beyond what 25 Newton
    # iterations can reach from the rest predictor
    code = main(["simulate", "--model", "duffing", "--epsilon", "1e9",
                 "--m", "1", "--T", "2.0", "--dt", "0.01", "--order", "3",
                 "--discard", "0.5", "--variants", "full",
                 "-o", str(tmp_path)])
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_psd_subcommand(tmp_path):
    t = 0.01 * np.arange(513)
    z = np.cos(2.0 * np.pi * 3.0 * t)
    traj = tmp_path / "traj.csv"
    np.savetxt(traj, np.column_stack([t, z, 2.0 * z]), delimiter=",",
               header="t,q0,v0", comments="")
    out = tmp_path / "out"
    assert main(["psd", str(traj), "-o", str(out)]) == 0
    est = read_psd_csv(out / "psd.csv")
    assert est.labels == ("q0", "v0")
    peak = est.omega[np.argmax(est.values[0])]
    assert abs(peak - 2.0 * np.pi * 3.0) < est.omega[1]
    assert (out / "psd.png").exists()

    bad = tmp_path / "bad.csv"
    bad.write_text("x,q0\n0.0,1.0\n0.1,2.0\n")
    assert main(["psd", str(bad), "-o", str(out)]) == 2


def test_compare_subcommand(tmp_path, capsys):
    first = tmp_path / "a"
    assert run(simulate_args(first)) == 0
    out = tmp_path / "cmp"
    code = main(["compare", str(first / "psd_full.csv"),
                 str(first / "psd_reduced.csv"), "-o", str(out)])
    assert code == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0].startswith("pair,label,")
    assert lines[1].startswith("psd_full-vs-psd_reduced,q0,")
    assert (out / "compare.png").exists()
    assert "band mean |gap|" in capsys.readouterr().out

    assert main(["compare", str(first / "psd_full.csv"),
                 str(first / "psd_reduced.csv"), "--band", "1.0,2.0",
                 "-o", str(out)]) == 0
    assert main(["compare", str(first / "psd_full.csv"),
                 str(first / "psd_reduced.csv"), "--band", "junk",
                 "-o", str(out)]) == 2
