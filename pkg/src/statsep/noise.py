"""Noise processes: colored Gaussian samplers, a cross-glyph contaminant, and
the weight schedules used to split a stable noise into smaller independent ones."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import Field2D, as_field_values

GAUSSIAN_KINDS = ("white", "pink", "blue")
KINDS = GAUSSIAN_KINDS + ("crosses",)

# Amplitude spectrum exponent |k|^gamma per color; DC is always zeroed.
SPECTRAL_EXPONENTS = {"pink": -1.0, "white": 0.0, "blue": 1.0}

# Cross glyphs: 5-pixel plus signs (center + 4 arms of one pixel), expected
# density CROSS_RATE glyphs per pixel, random sign per glyph.
CROSS_RATE = 2e-3
_CROSS_STENCIL = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True)
class NoiseModel:
    """A sampleable noise process with known per-pixel variance.

    ``sigma`` is expressed in units of ``reference_std`` (typically the
    standard deviation of the clean signal), so the generated fields have
    standard deviation ``sigma * reference_std``.
    """

    kind: str
    sigma: float
    shape: tuple
    reference_std: float = 1.0
    cross_rate: float = CROSS_RATE

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}, expected one of {KINDS}")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.reference_std <= 0:
            raise ValueError("reference_std must be > 0")
        object.__setattr__(self, "shape", (int(self.shape[0]), int(self.shape[1])))

    @property
    def amplitude(self):
        return self.sigma * self.reference_std

    @property
    def pixelwise_variance(self):
        """Per-pixel variance grid (the diagonal of the noise covariance)."""
        return np.full(self.shape, self.amplitude**2)


@dataclass(frozen=True)
class DiffusionSchedule:
    """Positive weights splitting a stable noise into independent smaller ones."""

    weights: np.ndarray = field()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("schedule must be a non-empty 1-D weight vector")
        if np.any(w <= 0):
            raise ValueError("all schedule weights must be > 0")
        if abs(np.sum(w**2) - 1.0) > 1e-12:
            raise ValueError("schedule weights must satisfy sum of squares = 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size


def uniform_schedule(P):
    """Schedule with all weights equal to 1/sqrt(P)."""
    if P < 1:
        raise ValueError("P must be >= 1")
    return DiffusionSchedule(np.full(P, 1.0 / math.sqrt(P)))


def schedule_for_sigma(sigma):
    """Uniform schedule with P = floor(10 sigma), clamped to at least one stage."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return uniform_schedule(max(1, math.floor(10.0 * sigma)))


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _radial_wavenumber(shape):
    ky = 2.0 * np.pi * np.fft.fftfreq(shape[0])[:, None]
    kx = 2.0 * np.pi * np.fft.fftfreq(shape[1])[None, :]
    return np.hypot(ky, kx)


def _spectral_filter(kind, shape):
    k = _radial_wavenumber(shape)
    gamma = SPECTRAL_EXPONENTS[kind]
    with np.errstate(divide="ignore"):
        f = np.where(k > 0, k**gamma, 0.0)
    return f


def _sample_colored(model, rng):
    # White noise is drawn i.i.d. per pixel (exactly N(0, amplitude^2 I), as
    # the closed-form minima assume); pink/blue are white noise shaped by a
    # radial amplitude filter with the DC mode removed.
    if model.kind == "white":
        return model.amplitude * rng.standard_normal(model.shape)
    f = _spectral_filter(model.kind, model.shape)
    white = rng.standard_normal(model.shape)
    shaped = np.fft.ifft2(np.fft.fft2(white) * f).real
    # Deterministic rescaling to the target variance keeps the process
    # Gaussian and exactly stable under weighted sums.
    expected_var = np.mean(f**2)
    return shaped * (model.amplitude / math.sqrt(expected_var))


def _sample_crosses(model, rng):
    height, width = model.shape
    out = np.zeros(model.shape)
    count = rng.poisson(model.cross_rate * height * width)
    if count > 0:
        rows = rng.integers(0, height, size=count)
        cols = rng.integers(0, width, size=count)
        signs = rng.choice((-1.0, 1.0), size=count)
        for dr, dc in _CROSS_STENCIL:
            np.add.at(out, ((rows + dr) % height, (cols + dc) % width), signs)
        std = out.std()
        if std > 0:
            out *= model.amplitude / std
    return out


def _sample_array(model, rng):
    if model.kind == "crosses":
        return _sample_crosses(model, rng)
    return _sample_colored(model, rng)


def sample(model, seed):
    """One draw from the noise process; deterministic given (model, seed)."""
    return Field2D(_sample_array(model, _rng(seed)))


def sample_crosses(model, seed):
    """One draw of the sparse cross-glyph contaminant."""
    if model.kind != "crosses":
        raise ValueError("sample_crosses requires a model of kind 'crosses'")
    return Field2D(_sample_crosses(model, _rng(seed)))


def sample_batch(model, count, seed):
    """Stack of ``count`` independent draws from one seeded stream, shape (count, H, W)."""
    rng = _rng(seed)
    if model.kind == "white":
        return model.amplitude * rng.standard_normal((count,) + model.shape)
    return np.stack([_sample_array(model, rng) for _ in range(count)])


def combined_sample(model, schedule, seed):
    """Weighted sum sum_i alpha_i eps_i over a schedule; distributed like a single
    draw when the process is stable (Gaussian kinds)."""
    rng = _rng(seed)
    out = np.zeros(model.shape)
    for alpha in schedule.weights:
        out += alpha * _sample_array(model, rng)
    return Field2D(out)


def reference_std_of(signal):
    """Convenience: the std of a signal used as the noise amplitude unit."""
    return float(np.std(as_field_values(signal)))
