"""Exception hierarchy shared across the package.

Every error raised on purpose by this package derives from
:class:`RandssmError`, so callers can catch a single base class.  The
subclasses split into configuration/validation problems (bad shapes,
bad parameters) and numerical failures detected at run time (divergent
Newton loops, defective eigenbases, resonant denominators).
"""


class RandssmError(Exception):
    """Base class for all errors raised by randssm."""


class DimensionMismatch(RandssmError):
    """An array argument has a shape incompatible with the model."""


class SingularMass(RandssmError):
    """The mass matrix is singular or too ill-conditioned to invert."""


class UnstableOrigin(RandssmError):
    """The linearization at the origin has an eigenvalue with Re >= 0."""


class DefectiveMatrix(RandssmError):
    """The eigenvector basis is too ill-conditioned to invert reliably."""


class UnstableSpectrum(RandssmError):
    """A spectral computation requires a strictly stable spectrum."""


class PairSplit(RandssmError):
    """A requested subspace dimension cuts through a complex pair."""


class CombinatorialCap(RandssmError):
    """A resonance scan would enumerate more tuples than the budget allows."""


class InnerOuterResonance(RandssmError):
    """An exact inner-outer eigenvalue resonance blocks the manifold solve."""


class NyquistViolation(RandssmError):
    """A requested spectral window extends beyond the sampling Nyquist rate."""


class DegenerateInterval(RandssmError):
    """A truncation interval leaves essentially no probability mass."""


class NewtonDivergence(RandssmError):
    """The implicit integrator's Newton loop failed to converge.

    Attributes
    ----------
    step_index : int
        Time-step at which convergence failed.
    member : int or None
        Ensemble member index, when integrating a batch.
    """

    def __init__(self, message, step_index, member=None):
        super().__init__(message)
        self.step_index = step_index
        self.member = member


class TimeOutOfRange(RandssmError):
    """A forcing path was queried outside the time span it covers."""


class LengthMismatch(RandssmError):
    """Ensemble signals do not share a common length or grid."""


class GridMismatch(RandssmError):
    """Two spectral estimates live on different frequency grids."""


class ConfigError(RandssmError):
    """A configuration file or CLI argument set is invalid."""


class SmallDivisorWarning(UserWarning):
    """A near-resonant denominator was encountered; the solve proceeded."""
