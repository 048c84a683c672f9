"""Spectral analysis of the stable linearization.

Eigenvalues are ordered from slowest to fastest (descending real part,
ties broken by ascending imaginary magnitude), with conjugate pairs kept
adjacent and the positive-imaginary member first.  :func:`compute_spectrum`
builds a real basis in which the matrix is block diagonal with 1x1 blocks
for real eigenvalues and 2x2 rotation-scaling blocks
``[[Re, Im], [-Im, Re]]`` for pairs.  :func:`slow_subspace` slices off the
leading eigenspaces and packages the projections used by the manifold
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import (CombinatorialCap, DefectiveMatrix, DimensionMismatch,
                     PairSplit, UnstableSpectrum)
from .polynomial import monomials_of_degree

#: eigenvector bases beyond this condition number are treated as defective
EIGENBASIS_CONDITION_CAP = 1e10

#: relative tolerance of the block-diagonalization test
BLOCK_DIAG_TOL = 1e-10

#: relative defect below which a sum of inner eigenvalues counts as resonant
RESONANCE_TOL = 1e-6

#: largest number of (monomial, outer eigenvalue) pairs a scan may visit
RESONANCE_BUDGET = int(1e7)

#: strict stability margin, relative to the matrix norm
STABILITY_MARGIN = 1e-12


class ResonanceHit(NamedTuple):
    """One near-resonance: <m, lambda_slow> approximately equals lambda_k."""

    exponents: tuple
    outer_index: int
    defect: float


@dataclass(frozen=True)
class SpectralData:
    """Ordered spectrum of a stable matrix with real and complex bases.

    ``T_L @ A @ T_R`` is block diagonal; ``T_L`` is the exact inverse of
    ``T_R``, so ``T_L @ T_R = I`` holds to inversion accuracy.  The complex
    modal pair (``modal_V``, ``modal_U``) diagonalizes A with columns
    matching ``eigenvalues`` entry by entry.
    """

    A: np.ndarray
    eigenvalues: np.ndarray
    block_sizes: tuple
    T_R: np.ndarray
    T_L: np.ndarray
    modal_V: np.ndarray
    modal_U: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def n_blocks(self) -> int:
        return len(self.block_sizes)

    @cached_property
    def block_starts(self) -> tuple:
        starts, acc = [], 0
        for size in self.block_sizes:
            starts.append(acc)
            acc += size
        return tuple(starts)

    def block_table(self):
        """Rows (eigenvalue index, block index) for report output."""
        rows = []
        for b, (start, size) in enumerate(zip(self.block_starts,
                                              self.block_sizes)):
            for i in range(start, start + size):
                rows.append((i, b))
        return rows


@dataclass(frozen=True)
class SpectralSubspace:
    """The slow spectral subspace and its aligned projections.

    ``VE_R`` spans the subspace, ``VE_L`` are the matching left rows
    (``VE_L @ VE_R = I``), ``V_R``/``V_L`` the complementary pair, ``AE``
    the exact block form of the slow dynamics and ``B`` of the fast
    complement.
    """

    spectral: SpectralData
    d: int
    VE_R: np.ndarray
    VE_L: np.ndarray
    V_R: np.ndarray
    V_L: np.ndarray
    AE: np.ndarray
    B: np.ndarray

    @property
    def dim(self) -> int:
        return self.spectral.dim

    @property
    def slow_eigenvalues(self) -> np.ndarray:
        return self.spectral.eigenvalues[:self.d]

    @property
    def outer_eigenvalues(self) -> np.ndarray:
        return self.spectral.eigenvalues[self.d:]

    @cached_property
    def complement_projector(self) -> np.ndarray:
        """P = I - VE_R @ VE_L, projecting onto the fast subspace."""
        return np.eye(self.dim) - self.VE_R @ self.VE_L


def _block_matrix(eigenvalues: np.ndarray, block_sizes) -> np.ndarray:
    dim = int(sum(block_sizes))
    out = np.zeros((dim, dim))
    pos = 0
    for size in block_sizes:
        lam = eigenvalues[pos]
        if size == 1:
            out[pos, pos] = lam.real
        else:
            out[pos:pos + 2, pos:pos + 2] = [[lam.real, lam.imag],
                                             [-lam.imag, lam.real]]
        pos += size
    return out


def compute_spectrum(A: np.ndarray) -> SpectralData:
    """Eigen-decompose a strictly stable real matrix into ordered blocks.

    Raises :class:`UnstableSpectrum` if any eigenvalue fails the strict
    stability margin and :class:`DefectiveMatrix` when the eigenvector
    basis is too ill-conditioned to invert reliably.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch("A must be square")
    scale = np.linalg.norm(A, 2) or 1.0
    w, V = scipy.linalg.eig(A)
    if np.max(w.real) >= -STABILITY_MARGIN * scale:
        raise UnstableSpectrum(
            f"slowest eigenvalue {np.max(w.real):.3e} is not strictly stable")

    imag_tol = 1e-12 * scale
    real_idx = [i for i in range(w.size) if abs(w[i].imag) <= imag_tol]
    plus_idx = [i for i in range(w.size)
                if w[i].imag > imag_tol]

    blocks = []  # (sort key, eigenvalues, real columns, complex columns)
    for i in real_idx:
        lam = complex(w[i].real, 0.0)
        v = np.real(V[:, i])
        v = v / np.linalg.norm(v)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        blocks.append(((-lam.real, abs(lam.imag), lam.imag),
                       [lam], [v], [v.astype(complex)]))
    for i in plus_idx:
        lam = complex(w[i])
        v = V[:, i]
        pivot = v[np.argmax(np.abs(v))]
        v = v * (pivot.conjugate() / abs(pivot))
        v = v / np.linalg.norm(v)
        blocks.append(((-lam.real, abs(lam.imag), lam.imag),
                       [lam, lam.conjugate()],
                       [np.real(v), np.imag(v)],
                       [v, np.conj(v)]))
    if sum(len(b[1]) for b in blocks) != w.size:
        raise DefectiveMatrix("conjugate pairs could not be matched")
    blocks.sort(key=lambda b: b[0])

    eigenvalues = np.concatenate([b[1] for b in blocks])
    T_R = np.column_stack([col for b in blocks for col in b[2]])
    modal_V = np.column_stack([col for b in blocks for col in b[3]])
    block_sizes = tuple(len(b[1]) for b in blocks)

    if np.linalg.cond(T_R) > EIGENBASIS_CONDITION_CAP:
        raise DefectiveMatrix(
            f"eigenvector basis condition number exceeds "
            f"{EIGENBASIS_CONDITION_CAP:.1e}")
    T_L = np.linalg.inv(T_R)
    modal_U = np.linalg.inv(modal_V)

    block_form = _block_matrix(eigenvalues, block_sizes)
    defect = np.linalg.norm(T_L @ A @ T_R - block_form)
    if defect > BLOCK_DIAG_TOL * scale:
        raise DefectiveMatrix(
            f"block-diagonalization defect {defect:.3e} exceeds "
            f"{BLOCK_DIAG_TOL * scale:.3e}")

    return SpectralData(A=A, eigenvalues=eigenvalues,
                        block_sizes=block_sizes, T_R=T_R, T_L=T_L,
                        modal_V=modal_V, modal_U=modal_U)


def slow_subspace(spec: SpectralData, s: int) -> SpectralSubspace:
    """Subspace spanned by the first ``s`` eigenspaces (blocks).

    ``d`` is the sum of the first ``s`` block sizes, so a conjugate pair is
    always taken whole.
    """
    if not 1 <= s <= spec.n_blocks:
        raise ValueError(f"s must be in 1..{spec.n_blocks}")
    d = int(sum(spec.block_sizes[:s]))
    return _subspace(spec, d)


def subspace_of_dimension(spec: SpectralData, d: int) -> SpectralSubspace:
    """Subspace of a requested dimension; the cut must fall on a block
    boundary, otherwise it would split a conjugate pair."""
    if not 1 <= d <= spec.dim:
        raise ValueError(f"d must be in 1..{spec.dim}")
    acc = 0
    for size in spec.block_sizes:
        acc += size
        if acc == d:
            return _subspace(spec, d)
        if acc > d:
            raise PairSplit(
                f"dimension {d} cuts through a complex pair; nearest valid "
                f"dimensions are {acc - size} and {acc}")
    raise PairSplit(f"dimension {d} does not align with any block boundary")


def _subspace(spec: SpectralData, d: int) -> SpectralSubspace:
    AE = _block_matrix(spec.eigenvalues[:d],
                       [s for s, start in zip(spec.block_sizes,
                                              spec.block_starts)
                        if start < d])
    outer_sizes = [s for s, start in zip(spec.block_sizes, spec.block_starts)
                   if start >= d]
    B = _block_matrix(spec.eigenvalues[d:], outer_sizes)
    return SpectralSubspace(
        spectral=spec, d=d,
        VE_R=spec.T_R[:, :d].copy(), VE_L=spec.T_L[:d, :].copy(),
        V_R=spec.T_R[:, d:].copy(), V_L=spec.T_L[d:, :].copy(),
        AE=AE, B=B)


def spectral_quotient(spec: SpectralData) -> int:
    """floor(Re(fastest) / Re(slowest)), the ratio taken of magnitudes."""
    ratio = spec.eigenvalues[-1].real / spec.eigenvalues[0].real
    return int(math.floor(ratio))


def spectral_gap(spec: SpectralData, d: int) -> int:
    """floor of the decay-rate jump across the subspace boundary at ``d``."""
    if not 1 <= d < spec.dim:
        raise ValueError(f"d must be in 1..{spec.dim - 1}")
    if d not in {start + size for start, size in zip(spec.block_starts,
                                                     spec.block_sizes)}:
        raise PairSplit(f"dimension {d} cuts through a complex pair")
    ratio = spec.eigenvalues[d].real / spec.eigenvalues[d - 1].real
    return int(math.floor(ratio))


def check_nonresonance(spec: SpectralData, d: int, max_order: int
                       ) -> list[ResonanceHit]:
    """Scan for inner-outer resonances up to a monomial order.

    Tests every exponent vector m with 2 <= |m| <= max_order against every
    eigenvalue outside the subspace; a hit is recorded when
    ``|<m, lambda_slow> - lambda_k| < 1e-6 * |lambda_k|``.  Raises
    :class:`CombinatorialCap` if the scan would exceed the tuple budget.
    """
    if not 1 <= d <= spec.dim:
        raise ValueError(f"d must be in 1..{spec.dim}")
    if max_order < 2:
        return []
    n_outer = spec.dim - d
    combos = sum(math.comb(order + d - 1, d - 1)
                 for order in range(2, max_order + 1))
    if combos * max(n_outer, 1) > RESONANCE_BUDGET:
        raise CombinatorialCap(
            f"resonance scan of {combos * n_outer} pairs exceeds budget "
            f"{RESONANCE_BUDGET}")
    lam_slow = spec.eigenvalues[:d]
    lam_outer = spec.eigenvalues[d:]
    hits = []
    for order in range(2, max_order + 1):
        for m in monomials_of_degree(d, order):
            combo = complex(np.dot(m, lam_slow))
            for k, lam in enumerate(lam_outer):
                defect = abs(combo - lam)
                if defect < RESONANCE_TOL * abs(lam):
                    hits.append(ResonanceHit(m, d + k, defect))
    return hits
