"""Figure rendering for the report artifacts.

Everything here draws to files through the Agg backend; no display is
ever opened.  Figures accompany the CSV artifacts so a run directory is
readable at a glance.
"""

from __future__ import annotations

from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .forcing import NoiseRealization
from .psd import PsdEstimate, to_decibel

#: draw order and styling per experiment variant
_VARIANT_STYLE = {
    "full": {"color": "tab:blue", "lw": 1.6, "zorder": 3},
    "reduced": {"color": "tab:orange", "lw": 1.4, "ls": "--", "zorder": 4},
    "linear": {"color": "tab:green", "lw": 1.2, "ls": ":", "zorder": 2},
}


def plot_psd_comparison(psds: dict, path, label: Optional[str] = None,
                        title: Optional[str] = None,
                        band: Optional[tuple] = None) -> str:
    """Overlay PSD estimates in decibels on a log frequency axis.

    ``psds`` maps a curve name to a :class:`PsdEstimate`; ``label`` picks
    the observable (first shared label by default).  An optional ``band``
    is shaded to show where comparison metrics were taken.
    """
    if not psds:
        raise ValueError("nothing to plot")
    if label is None:
        label = next(iter(psds.values())).labels[0]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for name, est in psds.items():
        row = est.row(label)
        keep = est.omega > 0.0
        style = _VARIANT_STYLE.get(name, {"lw": 1.2})
        ax.plot(est.omega[keep], to_decibel(row[keep]), label=name, **style)
    if band is not None:
        ax.axvspan(band[0], band[1], color="0.85", zorder=0,
                   label="comparison band")
    ax.set_xscale("log")
    ax.set_xlabel("frequency (rad/s)")
    ax.set_ylabel(f"PSD of {label} (dB)")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_residual_scaling(amplitudes: np.ndarray, residuals: dict,
                          path, title: Optional[str] = None) -> str:
    """Log-log invariance error against amplitude, one line per order.

    ``residuals`` maps an expansion order to residual magnitudes sampled
    at ``amplitudes``.  Zero entries are clipped to the float floor so a
    numerically exact manifold still renders.
    """
    amplitudes = np.asarray(amplitudes, dtype=float)
    fig, ax = plt.subplots(figsize=(5.6, 4.2))
    for order in sorted(residuals):
        res = np.maximum(np.asarray(residuals[order], dtype=float), 1e-300)
        ax.loglog(amplitudes, res, marker="o", ms=3.5,
                  label=f"order {order}")
        # slope guide anchored at the largest amplitude
        guide = res[-1] * (amplitudes / amplitudes[-1]) ** (order + 1)
        ax.loglog(amplitudes, guide, color="0.6", lw=0.8, ls="--",
                  zorder=1)
    ax.set_xlabel("amplitude")
    ax.set_ylabel("invariance residual")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_noise_path(noise: NoiseRealization, path,
                    title: Optional[str] = None,
                    max_points: int = 20000) -> str:
    """Draw one noise realization with its declared amplitude bound."""
    t = noise.times
    y = noise.samples
    if t.size > max_points:
        stride = int(np.ceil(t.size / max_points))
        t, y = t[::stride], y[::stride]
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    ax.plot(t, y, lw=0.7, color="tab:blue")
    b = noise.declared_bound
    if np.isfinite(b):
        ax.axhline(b, color="tab:red", lw=0.9, ls="--", label="bound")
        ax.axhline(-b, color="tab:red", lw=0.9, ls="--")
        ax.legend(fontsize=9, loc="upper right")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("forcing sample")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
