"""Statistical component separation: recover a signal's summary statistics
(and, as a by-product, the signal) from a noisy mixture by matching the
statistics of noise-corrupted candidates to those of the observation."""

from .fields import Field2D, Spectrum2D, adjoint_filter, convolve_periodic, fft_forward, fft_inverse
from .noise import DiffusionSchedule, NoiseModel, sample, sample_crosses, schedule_for_sigma, uniform_schedule
from .representations import (
    LinearRepresentation,
    PowerSpectrumRepresentation,
    QuadraticNormRepresentation,
    ScalarQuadraticRepresentation,
    WphRepresentation,
)
from .separation import (
    LbfgsOptions,
    LbfgsState,
    SeparationConfig,
    SeparationTrace,
    delouis_separate,
    diffusive_separate,
    lbfgs_step,
    mc_loss,
    perturbative_loss,
    vanilla_separate,
)
from .wavelets import FilterBank, build_bank, littlewood_paley
from .wph import ClassMask, NormalizationRef, WphCoefficients, wph_compute, wph_jacobian_adjoint, wph_perturbative_terms

__all__ = [
    "Field2D",
    "Spectrum2D",
    "fft_forward",
    "fft_inverse",
    "convolve_periodic",
    "adjoint_filter",
    "NoiseModel",
    "DiffusionSchedule",
    "sample",
    "sample_crosses",
    "uniform_schedule",
    "schedule_for_sigma",
    "FilterBank",
    "build_bank",
    "littlewood_paley",
    "ClassMask",
    "WphCoefficients",
    "NormalizationRef",
    "wph_compute",
    "wph_jacobian_adjoint",
    "wph_perturbative_terms",
    "WphRepresentation",
    "PowerSpectrumRepresentation",
    "LinearRepresentation",
    "QuadraticNormRepresentation",
    "ScalarQuadraticRepresentation",
    "SeparationConfig",
    "SeparationTrace",
    "LbfgsOptions",
    "LbfgsState",
    "lbfgs_step",
    "mc_loss",
    "perturbative_loss",
    "vanilla_separate",
    "diffusive_separate",
    "delouis_separate",
    "__version__",
]

__version__ = "0.1.0"
