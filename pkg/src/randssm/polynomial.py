"""Sparse multivariate polynomial maps.

A :class:`PolynomialMap` represents a map ``p : R^input_dim -> R^output_dim``
as a flat list of monomial terms ``(exponents, output_index, coefficient)``.
Maps of this kind model smooth nonlinearities around an equilibrium, so every
term must have total degree >= 2: this guarantees ``p(0) = 0`` and
``Dp(0) = 0`` by construction.

Terms are canonicalized at construction (duplicates merged, zero coefficients
dropped) and stored sorted by output index, then total degree, then exponent
tuple.  Evaluation accumulates contributions segment-by-segment in that fixed
order, which keeps results reproducible bit-for-bit from run to run.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch

#: one monomial: (exponent tuple, output index, coefficient)
Term = Tuple[Tuple[int, ...], int, float]

MIN_TERM_DEGREE = 2


def _canonical_terms(input_dim: int, output_dim: int,
                     terms: Iterable[Sequence]) -> tuple[Term, ...]:
    merged: dict[tuple[int, tuple[int, ...]], float] = {}
    for exponents, out_index, coeff in terms:
        exps = tuple(int(e) for e in exponents)
        if len(exps) != input_dim:
            raise DimensionMismatch(
                f"exponent vector has length {len(exps)}, expected {input_dim}")
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in {exps}")
        if sum(exps) < MIN_TERM_DEGREE:
            raise ValueError(
                f"term {exps} has total degree {sum(exps)} < {MIN_TERM_DEGREE}; "
                "polynomial maps model nonlinearities that vanish to first "
                "order at the origin")
        out = int(out_index)
        if not 0 <= out < output_dim:
            raise DimensionMismatch(
                f"output index {out} outside range(0, {output_dim})")
        key = (out, exps)
        merged[key] = merged.get(key, 0.0) + float(coeff)
    kept = [(exps, out, c) for (out, exps), c in merged.items() if c != 0.0]
    kept.sort(key=lambda t: (t[1], sum(t[0]), t[0]))
    return tuple(kept)


@dataclass(frozen=True)
class PolynomialMap:
    """Polynomial map with terms of total degree >= 2.

    Attributes
    ----------
    input_dim, output_dim : int
        Domain and codomain dimensions.
    terms : tuple of (exponents, output_index, coefficient)
        Canonically ordered monomial list; may be empty (the zero map).
    """

    input_dim: int
    output_dim: int
    terms: tuple[Term, ...]

    @classmethod
    def from_terms(cls, input_dim: int, output_dim: int,
                   terms: Iterable[Sequence]) -> "PolynomialMap":
        """Build a map from an iterable of (exponents, output_index, coeff)."""
        if input_dim < 1 or output_dim < 1:
            raise DimensionMismatch("dimensions must be positive")
        return cls(input_dim, output_dim,
                   _canonical_terms(input_dim, output_dim, terms))

    @classmethod
    def zero(cls, input_dim: int, output_dim: int) -> "PolynomialMap":
        return cls(input_dim, output_dim, ())

    @property
    def degree(self) -> int:
        """Largest total degree among terms (0 for the zero map)."""
        return max((sum(e) for e, _, _ in self.terms), default=0)

    # -- compiled tables -------------------------------------------------

    @cached_property
    def _tables(self):
        T = len(self.terms)
        n = self.input_dim
        if T == 0:
            return None
        E = np.array([t[0] for t in self.terms], dtype=np.int64)
        out_idx = np.array([t[1] for t in self.terms], dtype=np.int64)
        coeffs = np.array([t[2] for t in self.terms], dtype=np.float64)
        # segment boundaries: terms are sorted by output index already
        starts = [0] + [i for i in range(1, T) if out_idx[i] != out_idx[i - 1]]
        seg_starts = np.array(starts, dtype=np.int64)
        seg_rows = out_idx[seg_starts]
        # derivative terms: one per (term, variable with positive exponent)
        dterms = []
        for t_i, (exps, out, coeff) in enumerate(self.terms):
            for var, e in enumerate(exps):
                if e > 0:
                    de = list(exps)
                    de[var] -= 1
                    dterms.append((out, var, tuple(de), e * coeff))
        dterms.sort(key=lambda d: (d[0], d[1], d[2]))
        if dterms:
            DE = np.array([d[2] for d in dterms], dtype=np.int64)
            Dcoeffs = np.array([d[3] for d in dterms], dtype=np.float64)
            Dout = np.array([d[0] for d in dterms], dtype=np.int64)
            Dvar = np.array([d[1] for d in dterms], dtype=np.int64)
            key = Dout * n + Dvar
            dstarts = [0] + [i for i in range(1, len(dterms))
                             if key[i] != key[i - 1]]
            dseg_starts = np.array(dstarts, dtype=np.int64)
            dseg_out = Dout[dseg_starts]
            dseg_var = Dvar[dseg_starts]
        else:
            DE = Dcoeffs = Dout = Dvar = None
            dseg_starts = dseg_out = dseg_var = None
        return (E, coeffs, seg_starts, seg_rows,
                DE, Dcoeffs, dseg_starts, dseg_out, dseg_var)

    # -- transforms ------------------------------------------------------

    def apply_linear(self, matrix: np.ndarray) -> "PolynomialMap":
        """Return the map ``x -> matrix @ p(x)``.

        Coefficients sharing an exponent vector are mixed across output
        rows; exact zeros in the result are dropped.
        """
        L = np.asarray(matrix, dtype=np.float64)
        if L.ndim != 2 or L.shape[1] != self.output_dim:
            raise DimensionMismatch(
                f"matrix shape {L.shape} incompatible with output_dim "
                f"{self.output_dim}")
        by_exps: dict[tuple[int, ...], np.ndarray] = {}
        for exps, out, coeff in self.terms:
            vec = by_exps.setdefault(exps, np.zeros(self.output_dim))
            vec[out] += coeff
        new_terms = []
        for exps, vec in by_exps.items():
            mixed = L @ vec
            for row in np.nonzero(mixed)[0]:
                new_terms.append((exps, int(row), float(mixed[row])))
        return PolynomialMap.from_terms(self.input_dim, L.shape[0], new_terms)

    def __add__(self, other: "PolynomialMap") -> "PolynomialMap":
        if (other.input_dim != self.input_dim
                or other.output_dim != self.output_dim):
            raise DimensionMismatch("cannot add maps of different shapes")
        return PolynomialMap.from_terms(
            self.input_dim, self.output_dim, self.terms + other.terms)


def monomials_of_degree(n_vars: int, degree: int) -> tuple[tuple[int, ...], ...]:
    """Exponent vectors over ``n_vars`` with total degree ``degree``.

    Listed in ascending lexicographic order, e.g. for two variables of
    degree 2: (0, 2), (1, 1), (2, 0).  This is the canonical monomial
    enumeration used everywhere coefficients are tabulated.
    """
    if n_vars < 1 or degree < 0:
        raise ValueError("need n_vars >= 1 and degree >= 0")
    if n_vars == 1:
        return ((degree,),)
    out = []
    for first in range(degree + 1):
        for rest in monomials_of_degree(n_vars - 1, degree - first):
            out.append((first,) + rest)
    return tuple(out)


def graded_monomials(n_vars: int, min_degree: int,
                     max_degree: int) -> tuple[tuple[int, ...], ...]:
    """Monomials of all degrees in [min_degree, max_degree], graded-lex."""
    out = []
    for degree in range(min_degree, max_degree + 1):
        out.extend(monomials_of_degree(n_vars, degree))
    return tuple(out)


def eval_polynomial(pmap: PolynomialMap, x: np.ndarray) -> np.ndarray:
    """Evaluate ``pmap`` at ``x``.

    ``x`` has shape ``(..., input_dim)``; the result has shape
    ``(..., output_dim)``.  Integer-exponent powers are computed by repeated
    squaring, so negative inputs are handled exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != pmap.input_dim:
        raise DimensionMismatch(
            f"state has {x.shape[-1]} entries, expected {pmap.input_dim}")
    out = np.zeros(x.shape[:-1] + (pmap.output_dim,))
    tables = pmap._tables
    if tables is None:
        return out
    E, coeffs, seg_starts, seg_rows = tables[:4]
    mono = np.prod(np.power(x[..., None, :], E), axis=-1)
    vals = mono * coeffs
    out[..., seg_rows] = np.add.reduceat(vals, seg_starts, axis=-1)
    return out


def jacobian_polynomial(pmap: PolynomialMap, x: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of ``pmap`` at ``x``, shape ``(..., output, input)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != pmap.input_dim:
        raise DimensionMismatch(
            f"state has {x.shape[-1]} entries, expected {pmap.input_dim}")
    J = np.zeros(x.shape[:-1] + (pmap.output_dim, pmap.input_dim))
    tables = pmap._tables
    if tables is None or tables[4] is None:
        return J
    DE, Dcoeffs, dseg_starts, dseg_out, dseg_var = tables[4:]
    mono = np.prod(np.power(x[..., None, :], DE), axis=-1)
    vals = mono * Dcoeffs
    J[..., dseg_out, dseg_var] = np.add.reduceat(vals, dseg_starts, axis=-1)
    return J
