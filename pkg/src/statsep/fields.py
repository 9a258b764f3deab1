"""Periodic 2-D signal containers and spectral utilities.

Signals live on a periodic H x W grid and are stored in double precision.
The discrete Fourier transform uses the unitary convention (1/sqrt(HW) both
ways) so that Parseval holds without bookkeeping. Filters, by contrast, are
kept as plain transfer functions: ``convolve_periodic(f, psi)`` multiplies
the spectrum of ``f`` by ``psi`` pointwise, which realizes an exact circular
convolution when ``psi`` is the standard (unnormalized) DFT of a kernel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


class ShapeMismatchError(ValueError):
    """Operands do not live on the same grid."""


class FormatError(ValueError):
    """Malformed binary grid file."""


def _freeze(values, dtypes, name):
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} requires a 2-D grid with at least one pixel, got shape {arr.shape}")
    target = np.complex128 if np.iscomplexobj(arr) else np.float64
    if target not in dtypes:
        target = dtypes[0]
    arr = np.ascontiguousarray(arr, dtype=target)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Field2D:
    """A real- or complex-valued periodic 2-D signal.

    Indexing is defined modulo (height, width); the array is made read-only
    so instances can be shared freely across threads.
    """

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values, (np.float64, np.complex128), "Field2D"))

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def is_real(self):
        return self.values.dtype == np.float64

    @classmethod
    def zeros(cls, height, width):
        return cls(np.zeros((height, width)))


@dataclass(frozen=True)
class Spectrum2D:
    """Complex Fourier coefficients on the same grid as their originating field."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values, (np.complex128,), "Spectrum2D"))

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def as_field_values(f):
    """Accept a Field2D or a bare 2-D array and return the underlying array."""
    if isinstance(f, Field2D):
        return f.values
    return np.asarray(f)


def as_spectrum_values(s):
    if isinstance(s, Spectrum2D):
        return s.values
    return np.asarray(s, dtype=np.complex128)


def fft_forward(f):
    """Unitary discrete Fourier transform of a field."""
    return Spectrum2D(np.fft.fft2(as_field_values(f), norm="ortho"))


def fft_inverse(s):
    """Unitary inverse transform; returns a complex field (take .real for real input)."""
    return Field2D(np.fft.ifft2(as_spectrum_values(s), norm="ortho"))


def convolve_periodic(f, psi):
    """Circular convolution of ``f`` with the filter whose transfer function is ``psi``.

    Computed as a pointwise spectral product followed by the inverse
    transform; equivalent to the direct wrap-around sum
    ``(f * psi)[n] = sum_m f[m] psi[n - m]``.
    """
    fv = as_field_values(f)
    pv = as_spectrum_values(psi)
    if fv.shape != pv.shape:
        raise ShapeMismatchError(f"field shape {fv.shape} != filter shape {pv.shape}")
    return Field2D(np.fft.ifft2(np.fft.fft2(fv) * pv))


def adjoint_filter(psi):
    """Adjoint filter: kernel conjugated and point-reflected, i.e. conj of the transfer function.

    Satisfies <psi * x, y> = <x, adjoint(psi) * y> for the Hermitian inner product.
    """
    return Spectrum2D(np.conj(as_spectrum_values(psi)))


# ---------------------------------------------------------------------------
# Binary grid format ("SSF1"): little-endian magic, u32 height, u32 width,
# u8 dtype (0 = real64, 1 = complex128), then row-major values.

_MAGIC = b"SSF1"
_DTYPE_CODES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


def write_field(field, path):
    arr = as_field_values(field)
    code = 1 if np.iscomplexobj(arr) else 0
    dt = _DTYPE_CODES[code]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIB", arr.shape[0], arr.shape[1], code))
        fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        height, width, code = struct.unpack("<IIB", fh.read(9))
        if code not in _DTYPE_CODES:
            raise FormatError(f"unknown dtype code {code}")
        dt = _DTYPE_CODES[code]
        raw = fh.read(height * width * dt.itemsize)
        if len(raw) != height * width * dt.itemsize:
            raise FormatError("truncated payload")
        arr = np.frombuffer(raw, dtype=dt).reshape(height, width)
    return Field2D(arr)


def write_png(field, path):
    """Export a linearly rescaled 8-bit grayscale PNG for human inspection."""
    from PIL import Image

    arr = as_field_values(field)
    if np.iscomplexobj(arr):
        arr = arr.real
    lo, hi = float(arr.min()), float(arr.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = ((arr - lo) * scale).round().astype(np.uint8)
    Image.fromarray(img, mode="L").save(path)


def read_png(path):
    """Import a grayscale PNG as a float field in [0, 1]."""
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return Field2D(arr)
