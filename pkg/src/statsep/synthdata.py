"""Synthetic stationary test textures: Gaussian random fields with a power-law
spectrum, optionally exponentiated for non-Gaussian (lognormal) structure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field2D

KINDS = ("gaussian_random_field", "lognormal_field")


@dataclass(frozen=True)
class TextureSpec:
    kind: str
    shape: tuple
    spectral_slope: float = -1.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown texture kind {self.kind!r}, expected one of {KINDS}")
        if self.spectral_slope >= 0:
            raise ValueError("spectral_slope must be negative (red spectrum)")
        object.__setattr__(self, "shape", (int(self.shape[0]), int(self.shape[1])))


def _power_law_grf(shape, slope, rng):
    ky = 2.0 * np.pi * np.fft.fftfreq(shape[0])[:, None]
    kx = 2.0 * np.pi * np.fft.fftfreq(shape[1])[None, :]
    k = np.hypot(ky, kx)
    with np.errstate(divide="ignore"):
        amplitude = np.where(k > 0, k**slope, 0.0)
    white = rng.standard_normal(shape)
    return np.fft.ifft2(np.fft.fft2(white) * amplitude).real


def generate(spec):
    """Deterministic texture with power spectrum ~ |k|^(2 slope), standardized
    to zero mean and unit variance."""
    rng = np.random.default_rng(spec.seed)
    g = _power_law_grf(spec.shape, spec.spectral_slope, rng)
    g = (g - g.mean()) / g.std()
    if spec.kind == "lognormal_field":
        g = np.exp(g)
    out = (g - g.mean()) / g.std()
    return Field2D(out)


def radial_spectrum(field, nbins=24):
    """Angle-averaged power spectrum: bin centers |k| and mean |fft|^2 per bin."""
    arr = np.asarray(field.values if isinstance(field, Field2D) else field)
    power = np.abs(np.fft.fft2(arr, norm="ortho")) ** 2
    ky = 2.0 * np.pi * np.fft.fftfreq(arr.shape[0])[:, None]
    kx = 2.0 * np.pi * np.fft.fftfreq(arr.shape[1])[None, :]
    k = np.hypot(ky, kx).ravel()
    p = power.ravel()
    keep = k > 0
    edges = np.geomspace(k[keep].min(), k.max() * (1 + 1e-9), nbins + 1)
    which = np.digitize(k[keep], edges) - 1
    centers, means = [], []
    for b in range(nbins):
        sel = which == b
        if np.any(sel):
            centers.append(np.exp(np.mean(np.log(k[keep][sel]))))
            means.append(float(np.mean(p[keep][sel])))
    return np.array(centers), np.array(means)


def fitted_spectral_slope(field, k_lo=0.05, k_hi=0.6):
    """Log-log slope of the radial spectrum over mid frequencies (fractions of pi)."""
    centers, means = radial_spectrum(field)
    keep = (centers >= k_lo * np.pi) & (centers <= k_hi * np.pi) & (means > 0)
    coeffs = np.polyfit(np.log(centers[keep]), np.log(means[keep]), 1)
    return float(coeffs[0])
