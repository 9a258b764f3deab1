"""Bump-steerable wavelet filter bank defined directly in Fourier space.

Each filter is the product of a compactly supported radial bump centered at
xi_j = pi 2^(-j) and an oriented angular lobe cos^(L-1)(theta - theta_l)
restricted to a half-plane. The continuous profile is periodized onto the
discrete frequency torus by summing over alias translates, following the
usual construction for dyadic banks on small grids.

Orientation lobes sit at theta_l = l pi / L. For L >= 3 the odd-l lobes are
placed in the antipodal half-plane (theta_l + pi); this leaves each filter's
orientation (mod pi) unchanged but makes the union of supports cover every
nonzero Fourier mode, which the statistics assume. L = 1 yields isotropic
ring filters; L = 2 cannot cover the plane with half-plane lobes and is kept
for experimentation only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field2D, Spectrum2D, write_field


class BankGeometryError(ValueError):
    """Requested scales do not fit on the grid."""


@dataclass(frozen=True)
class FilterBank:
    """J x L bandpass filters stored as transfer functions, indexed (scale, orientation)."""

    height: int
    width: int
    J: int
    L: int
    filters: np.ndarray  # (J*L, height, width) complex transfer functions
    center_freqs: np.ndarray  # (J,) radial centers xi_j

    def __post_init__(self):
        self.filters.setflags(write=False)
        self.center_freqs.setflags(write=False)

    @property
    def size(self):
        return self.J * self.L

    def index_of(self, scale, orientation):
        return scale * self.L + orientation

    def scale_of(self, index):
        return index // self.L

    def orientation_of(self, index):
        return index % self.L

    def spectrum(self, index):
        return Spectrum2D(self.filters[index])

    def pair_indices(self):
        """Filter index pairs (a, b) with scale(a) < scale(b), all orientation pairs."""
        pairs = []
        for j1 in range(self.J):
            for j2 in range(j1 + 1, self.J):
                for l1 in range(self.L):
                    for l2 in range(self.L):
                        pairs.append((self.index_of(j1, l1), self.index_of(j2, l2)))
        return pairs

    def dump(self, directory):
        """Write each filter's transfer function to the binary grid format."""
        import os

        os.makedirs(directory, exist_ok=True)
        for i in range(self.size):
            j, l = self.scale_of(i), self.orientation_of(i)
            write_field(Field2D(self.filters[i]), os.path.join(directory, f"psi_j{j}_l{l}.ssf"))


def _alias_grids(height, width):
    """Wavevector magnitude and angle over alias translates, shape (2, 2, H, W)."""
    iy = np.arange(height)[:, None]
    ix = np.arange(width)[None, :]
    ks, thetas = [], []
    for sy in (-1, 0):
        for sx in (-1, 0):
            ky = 2.0 * np.pi * (iy + sy * height) / height
            kx = 2.0 * np.pi * (ix + sx * width) / width
            ky, kx = np.broadcast_arrays(ky, kx)
            ks.append(np.hypot(ky, kx))
            thetas.append(np.arctan2(ky, kx))
    return np.stack(ks), np.stack(thetas)


def _radial_bump(k, xi):
    t = (k - xi) / xi
    inside = np.abs(t) < 1.0
    out = np.zeros_like(k)
    ts = t[inside]
    out[inside] = np.exp(-(ts**2) / (1.0 - ts**2))
    return out


def _angular_lobe(theta, theta0, L):
    if L == 1:
        return np.ones_like(theta)
    c = np.cos(theta - theta0)
    return np.where(c > 0, c ** (L - 1), 0.0)


def orientation_center(l, L):
    theta = l * np.pi / L
    if L >= 3 and l % 2 == 1:
        theta += np.pi
    return theta


def build_bank(height, width, J, L):
    """Build the J x L bank on an H x W grid; requires 2^J <= min(H, W)."""
    if J < 1 or L < 1:
        raise BankGeometryError("J and L must be >= 1")
    if 2**J > min(height, width):
        raise BankGeometryError(f"2^J = {2**J} exceeds the smallest grid dimension {min(height, width)}")
    k, theta = _alias_grids(height, width)
    center_freqs = np.pi * 2.0 ** (-np.arange(J, dtype=np.float64))
    filters = np.empty((J * L, height, width), dtype=np.complex128)
    for j in range(J):
        radial = _radial_bump(k, center_freqs[j])
        for l in range(L):
            profile = (radial * _angular_lobe(theta, orientation_center(l, L), L)).sum(axis=0)
            profile[0, 0] = 0.0
            peak = profile.max()
            if peak > 0:
                profile /= peak
            filters[j * L + l] = profile
    return FilterBank(height, width, J, L, filters, center_freqs)


def littlewood_paley(bank):
    """Coverage diagnostic: sum over filters of the squared symmetrized modulus.

    Built from the real parts of the wavelets, i.e. each transfer function is
    replaced by (psi_hat(k) + conj(psi_hat(-k))) / 2 before squaring, so the
    map reflects what the bank resolves on real-valued fields and is
    invariant under k -> -k by construction.
    """
    total = np.zeros((bank.height, bank.width))
    for i in range(bank.size):
        h = bank.filters[i]
        sym = 0.5 * (h + np.conj(_point_reflect(h)))
        total += np.abs(sym) ** 2
    return Field2D(total)


def _point_reflect(spectrum):
    """Values at -k on the periodic frequency grid."""
    return np.roll(np.roll(spectrum[::-1, ::-1], 1, axis=0), 1, axis=1)
