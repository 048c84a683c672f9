"""Power spectral density estimation and the analytic linear reference.

The estimator averages raw periodograms over ensemble members with the
normalization dt/(2*pi*L) per member, one-sided in angular frequency, so
that sum(PSD)*d_omega equals the signal's mean square.  The analytic path
evaluates the frequency response of the linearized mechanical system on
an arbitrary grid, typically the estimator's own FFT grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, LengthMismatch
from .systems import MechanicalSystem

DB_FLOOR = 1e-20
MIN_SAMPLES = 64


@dataclass(frozen=True)
class PsdEstimate:
    """One-sided PSD values per observable on an angular-frequency grid."""

    omega: np.ndarray            # (n_freq,) rad/s, strictly increasing
    values: np.ndarray           # (n_obs, n_freq), >= 0 where not skipped
    labels: tuple
    ensemble_size: int
    normalization: str
    skipped: Optional[np.ndarray] = None   # bool mask of flagged samples

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", values)
        if np.any(np.diff(omega) <= 0.0):
            raise ValueError("frequency grid must be strictly increasing")
        if values.shape[1] != omega.size:
            raise LengthMismatch(
                f"{values.shape[1]} value columns vs {omega.size} "
                f"frequencies")
        if len(self.labels) != values.shape[0]:
            raise LengthMismatch(
                f"{len(self.labels)} labels vs {values.shape[0]} rows")
        bad = np.isfinite(values) & (values < 0.0)
        if self.skipped is not None:
            bad = bad & ~np.asarray(self.skipped, dtype=bool)[None, :]
        if bad.any():
            raise ValueError("PSD values must be nonnegative")

    @property
    def delta_omega(self) -> float:
        return float(self.omega[1] - self.omega[0])

    def row(self, label: str) -> np.ndarray:
        try:
            j = self.labels.index(label)
        except ValueError:
            raise KeyError(f"no observable {label!r}; have {self.labels}")
        return self.values[j]


def estimate_psd(signals: np.ndarray, dt: float, *,
                 discard: float = 0.0,
                 labels: Optional[Sequence[str]] = None,
                 window: Optional[str] = None) -> PsdEstimate:
    """Ensemble-averaged one-sided periodogram of uniformly sampled signals.

    ``signals`` is (m, L) for one observable or (m, L, n_obs); all members
    must share the length L.  The first ``discard`` seconds are dropped
    before transforming (steady-state window).  No window is applied by
    default; ``window='hann'`` tapers each member (excluded from the
    normalization pinning below, provided for exploration only).

    Normalization: PSD_k = dt/(2*pi*L_eff) * mean_i |FFT(z_i)_k|^2, folded
    one-sided, so sum(PSD)*d_omega recovers the mean square of the data.
    """
    signals = np.asarray(signals, dtype=float)
    if signals.ndim == 2:
        signals = signals[:, :, None]
    if signals.ndim != 3:
        raise DimensionMismatch("signals must be (m, L) or (m, L, n_obs)")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if discard < 0.0:
        raise ValueError("discard must be nonnegative")
    n_skip = int(round(discard / dt))
    if n_skip >= signals.shape[1]:
        raise LengthMismatch(
            f"discarding {n_skip} samples leaves nothing of length "
            f"{signals.shape[1]}")
    data = signals[:, n_skip:, :]
    m, L, n_obs = data.shape
    if L < MIN_SAMPLES:
        raise LengthMismatch(
            f"need at least {MIN_SAMPLES} samples after discard, got {L}")
    if labels is None:
        labels = tuple(f"obs{i}" for i in range(n_obs))
    labels = tuple(labels)
    if len(labels) != n_obs:
        raise LengthMismatch(f"{len(labels)} labels for {n_obs} observables")

    if window is None:
        tapered = data
        gain = 1.0
    elif window == "hann":
        taper = np.hanning(L)
        tapered = data * taper[None, :, None]
        gain = float(np.mean(taper ** 2))
    else:
        raise ValueError(f"unknown window {window!r}")

    spec = np.fft.rfft(tapered, axis=1)
    power = np.mean(np.abs(spec) ** 2, axis=0)          # (n_rfft, n_obs)
    psd = (dt / (2.0 * np.pi * L * gain)) * power
    # one-sided fold: interior bins carry both +omega and -omega content
    n_rfft = psd.shape[0]
    fold = np.full(n_rfft, 2.0)
    fold[0] = 1.0
    if L % 2 == 0:
        fold[-1] = 1.0
    psd = psd * fold[:, None]
    omega = 2.0 * np.pi * np.fft.rfftfreq(L, d=dt)
    return PsdEstimate(
        omega=omega, values=psd.T, labels=labels, ensemble_size=m,
        normalization=f"dt/(2*pi*L), one-sided, L={L}, discard={discard}")


def transfer_matrix(sys: MechanicalSystem, omega: float) -> np.ndarray:
    """Receptance (-omega^2 M + i omega C + K)^-1 of the linearized system."""
    n = sys.n_dof
    core = -omega ** 2 * sys.M + 1j * omega * sys.C + sys.K
    return np.linalg.solve(core, np.eye(n))


def linear_psd(sys: MechanicalSystem, phi_g: Callable[[float], np.ndarray],
               omega: np.ndarray,
               labels: Optional[Sequence[str]] = None) -> PsdEstimate:
    """Response PSD of the linearized system under forcing PSD ``phi_g``.

    ``phi_g(omega)`` returns the (n, n) forcing spectral density matrix.
    Diagonal response entries are returned per DOF.  Grid points where the
    dynamic stiffness is singular (undamped resonances) are skipped and
    flagged rather than raising.
    """
    omega = np.asarray(omega, dtype=float)
    n = sys.n_dof
    if labels is None:
        labels = tuple(f"q{i}" for i in range(n))
    values = np.empty((n, omega.size))
    skipped = np.zeros(omega.size, dtype=bool)
    for k, w in enumerate(omega):
        core = -w ** 2 * sys.M + 1j * w * sys.C + sys.K
        gmat = np.atleast_2d(np.asarray(phi_g(float(w))))
        try:
            H = np.linalg.solve(core, np.eye(n))
        except np.linalg.LinAlgError:
            skipped[k] = True
            values[:, k] = np.nan
            continue
        if not np.all(np.isfinite(H)):
            skipped[k] = True
            values[:, k] = np.nan
            continue
        phi_x = H @ gmat @ H.conj().T
        diag = np.real(np.diag(phi_x))
        values[:, k] = np.maximum(diag, 0.0)
    return PsdEstimate(
        omega=omega, values=values, labels=tuple(labels), ensemble_size=0,
        normalization="analytic H Phi_g H^dagger", skipped=skipped)


def to_decibel(values, floor: float = DB_FLOOR) -> np.ndarray:
    """10*log10 of PSD values with a positive floor against log(0)."""
    if floor <= 0.0:
        raise ValueError("floor must be positive")
    if isinstance(values, PsdEstimate):
        arr = values.values
    else:
        arr = np.asarray(values, dtype=float)
    return 10.0 * np.log10(np.maximum(arr, floor))


def write_psd_csv(path, est: PsdEstimate, floor: float = DB_FLOOR) -> None:
    """Two columns per observable: raw PSD and its decibel image."""
    cols = [est.omega]
    names = ["omega_rad_s"]
    for j, label in enumerate(est.labels):
        cols.append(est.values[j])
        names.append(f"psd_{label}")
        cols.append(to_decibel(est.values[j], floor))
        names.append(f"psd_db_{label}")
    data = np.column_stack(cols)
    np.savetxt(path, data, delimiter=",", header=",".join(names),
               comments="")


def read_psd_csv(path) -> PsdEstimate:
    """Inverse of write_psd_csv; decibel columns are ignored on input."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if header[0] != "omega_rad_s":
        raise ValueError(f"not a PSD table: first column {header[0]!r}")
    labels = []
    cols = []
    for j, name in enumerate(header[1:], start=1):
        if name.startswith("psd_db_"):
            continue
        if not name.startswith("psd_"):
            raise ValueError(f"unexpected column {name!r}")
        labels.append(name[len("psd_"):])
        cols.append(data[:, j])
    return PsdEstimate(
        omega=data[:, 0], values=np.vstack(cols), labels=tuple(labels),
        ensemble_size=0, normalization="loaded")
