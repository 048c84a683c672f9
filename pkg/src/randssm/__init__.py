"""Reduced-order Monte-Carlo spectra for randomly forced mechanical systems.

The pipeline: define a mechanical model, split off its slowest spectral
subspace, expand the invariant manifold that is tangent to it, then push
bounded random forcing through the reduced equations and compare power
spectra against the full-order simulation.
"""

from .errors import (CombinatorialCap, ConfigError, DefectiveMatrix,
                     DimensionMismatch, GridMismatch, InnerOuterResonance,
                     LengthMismatch, NewtonDivergence, NyquistViolation,
                     PairSplit, RandssmError, SingularMass,
                     SmallDivisorWarning, TimeOutOfRange, UnstableOrigin,
                     UnstableSpectrum)
from .polynomial import PolynomialMap, eval_polynomial, jacobian_polynomial
from .systems import (FirstOrderSystem, ForcingSpec, MechanicalSystem,
                      to_first_order)
from .spectral import (SpectralData, SpectralSubspace, check_nonresonance,
                       compute_spectrum, slow_subspace, spectral_gap,
                       spectral_quotient, subspace_of_dimension)
from .manifold import (SSMExpansion, compute_autonomous_ssm,
                       evaluate_parametrization, evaluate_reduced_rhs,
                       invariance_residual)
from .forcing import (FilterConfig, NoiseRealization, NoiseSourceConfig,
                      PsdChannel, SpectralDensityCurve, generate_noise,
                      reflect_into_unit)
from .reduced import RandomReducedModel, reduced_forcing
from .integrate import (IntegratorConfig, Trajectory, cocycle_check,
                        coupled_implicit_integrate, newmark_integrate,
                        rk4_reduced_integrate)
from .psd import PsdEstimate, estimate_psd, linear_psd, to_decibel
from .models import PRESETS, ModelPreset, chain_frequencies, make_model
from .ensemble import (ExperimentConfig, ExperimentReport, PsdComparison,
                       compare_psd, run_experiment)

__version__ = "0.1.0"

__all__ = [
    "CombinatorialCap", "ConfigError", "DefectiveMatrix",
    "DimensionMismatch", "GridMismatch", "InnerOuterResonance",
    "LengthMismatch", "NewtonDivergence", "NyquistViolation", "PairSplit",
    "RandssmError", "SingularMass", "SmallDivisorWarning", "TimeOutOfRange",
    "UnstableOrigin", "UnstableSpectrum",
    "PolynomialMap", "eval_polynomial", "jacobian_polynomial",
    "FirstOrderSystem", "ForcingSpec", "MechanicalSystem", "to_first_order",
    "SpectralData", "SpectralSubspace", "check_nonresonance",
    "compute_spectrum", "slow_subspace", "spectral_gap",
    "spectral_quotient", "subspace_of_dimension",
    "SSMExpansion", "compute_autonomous_ssm", "evaluate_parametrization",
    "evaluate_reduced_rhs", "invariance_residual",
    "FilterConfig", "NoiseRealization", "NoiseSourceConfig", "PsdChannel",
    "SpectralDensityCurve", "generate_noise", "reflect_into_unit",
    "RandomReducedModel", "reduced_forcing",
    "IntegratorConfig", "Trajectory", "cocycle_check",
    "coupled_implicit_integrate", "newmark_integrate",
    "rk4_reduced_integrate",
    "PsdEstimate", "estimate_psd", "linear_psd", "to_decibel",
    "PRESETS", "ModelPreset", "chain_frequencies", "make_model",
    "ExperimentConfig", "ExperimentReport", "PsdComparison", "compare_psd",
    "run_experiment",
    "__version__",
]
