"""Statistics maps phi: signal -> C^K with the adjoint machinery the
optimizer needs.

Every representation exposes

    size                      number of coefficients K
    eval(x)                   complex vector of length K
    gradient_adjoint(x, u)    the real field 2 Re[J_phi(x)^H u]

and, when available for the perturbative loss,

    perturbative_terms(x, pixel_variance) -> (jnorm, htrace).

Signals are bare 2-D numpy arrays here; wrapping/unwrapping Field2D happens
at the algorithm boundary.
"""

from __future__ import annotations

import numpy as np

from . import wph
from .fields import as_field_values
from .wph import ClassMask


class WphRepresentation:
    """Normalized WPH statistics over a filter bank.

    When a normalization reference is supplied (the usual case: the s11
    coefficients of the observation), coefficients are divided class-wise by
    it, which preconditions the matching loss.
    """

    def __init__(self, bank, mask=ClassMask(), normalization=None):
        self.bank = bank
        self.mask = mask
        self.normalization = normalization
        if normalization is None:
            self._div = np.ones(wph.coefficient_count(bank.J, bank.L, mask))
        else:
            self._div = wph.normalization_divisors(normalization, bank, mask)
        self.size = self._div.size
        self._pair_ab = wph.pair_arrays(bank) if mask.c01 else None

    @classmethod
    def for_observation(cls, y, bank, mask=ClassMask()):
        """Build the representation normalized by the observation's s11."""
        return cls(bank, mask, wph.normalization_from(as_field_values(y), bank))

    def raw(self, x):
        return wph.wph_compute(x, self.bank, self.mask)

    def _vector_from_z(self, z):
        arrays = wph._class_arrays(z, self.mask, self._pair_ab)
        parts = [arrays[name] for name in self.mask]
        return np.concatenate(parts, axis=-1) / self._div

    def eval(self, x):
        return self._vector_from_z(wph._filtered(as_field_values(x), self.bank))

    def eval_batch(self, xs, chunk=None):
        """Coefficient vectors for a stack of fields, shape (Q, K)."""
        from scipy import fft as sfft

        xs = np.asarray(xs)
        if chunk is None:
            # keep the filtered stack cache-friendly (~12 MB of complex samples)
            chunk = max(1, 3 * 2**18 // (self.bank.size * xs.shape[-2] * xs.shape[-1]))
        out = np.empty((xs.shape[0], self.size), dtype=np.complex128)
        for lo in range(0, xs.shape[0], chunk):
            hi = min(lo + chunk, xs.shape[0])
            zhat = self.bank.filters[None] * sfft.fft2(xs[lo:hi], axes=(-2, -1))[:, None]
            z = sfft.ifft2(zhat, axes=(-2, -1))
            out[lo:hi] = self._vector_from_z(z)
        return out

    def gradient_adjoint(self, x, cotangent):
        return wph.wph_jacobian_adjoint(x, self.bank, np.asarray(cotangent) / self._div, self.mask).values

    def residual_value_and_grad(self, x, phi_target):
        """Fused ||phi(x) - t||^2 and its gradient, computing the filtered
        stack only once."""
        x = as_field_values(x)
        z = wph._filtered(x, self.bank)
        v = self._vector_from_z(z) - phi_target
        value = float(np.sum(np.abs(v) ** 2))
        parts = wph._split_cotangent(v / self._div, self.bank, self.mask)
        grad = wph._adjoint_from_z(x.shape, z, self.bank, parts, self._pair_ab)
        return value, grad

    def perturbative_terms(self, x, pixel_variance):
        jnorm, htrace = wph.wph_perturbative_terms(x, self.bank, pixel_variance, self.mask)
        return jnorm / self._div**2, htrace / self._div


class PowerSpectrumRepresentation:
    """Band powers ||psi_i * x||^2 over a filter bank, one coefficient per filter."""

    def __init__(self, bank):
        self.bank = bank
        self.size = bank.size

    def eval(self, x):
        x = as_field_values(x)
        z = np.fft.ifft2(self.bank.filters * np.fft.fft2(x)[None], axes=(-2, -1))
        return np.sum(np.abs(z) ** 2, axis=(-2, -1)).astype(np.complex128)

    def gradient_adjoint(self, x, cotangent):
        x = as_field_values(x)
        u = np.asarray(cotangent, dtype=np.complex128).real
        gain = np.abs(self.bank.filters) ** 2
        acc = np.tensordot(4.0 * u, gain, axes=(0, 0))
        return np.fft.ifft2(acc * np.fft.fft2(x)).real


class LinearRepresentation:
    """phi(x) = A vec(x); identity by default (A = I, K = M)."""

    def __init__(self, shape, matrix=None):
        self.shape = tuple(shape)
        m = self.shape[0] * self.shape[1]
        self.matrix = None if matrix is None else np.asarray(matrix, dtype=np.float64)
        if self.matrix is not None and self.matrix.shape[1] != m:
            raise ValueError(f"matrix has {self.matrix.shape[1]} columns, signal has {m} samples")
        self.size = m if self.matrix is None else self.matrix.shape[0]

    def eval(self, x):
        v = as_field_values(x).ravel()
        out = v if self.matrix is None else self.matrix @ v
        return out.astype(np.complex128)

    def gradient_adjoint(self, x, cotangent):
        u = np.asarray(cotangent, dtype=np.complex128)
        back = u if self.matrix is None else self.matrix.T @ u
        return 2.0 * back.real.reshape(self.shape)


class QuadraticNormRepresentation:
    """Single coefficient phi(x) = ||A vec(x)||^2."""

    def __init__(self, shape, matrix):
        self.shape = tuple(shape)
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.shape[1] != self.shape[0] * self.shape[1]:
            raise ValueError("matrix columns must match the signal size")
        self._gram = self.matrix.T @ self.matrix
        self.size = 1

    def eval(self, x):
        v = as_field_values(x).ravel()
        return np.array([v @ self._gram @ v], dtype=np.complex128)

    def gradient_adjoint(self, x, cotangent):
        v = as_field_values(x).ravel()
        u = complex(np.asarray(cotangent, dtype=np.complex128)[0])
        return (4.0 * u.real * (self._gram @ v)).reshape(self.shape)


class ScalarQuadraticRepresentation:
    """phi(x) = x^2 on a single-sample signal (the analytically solvable toy)."""

    size = 1
    shape = (1, 1)

    def eval(self, x):
        v = as_field_values(x).ravel()
        return np.array([v[0] ** 2], dtype=np.complex128)

    def gradient_adjoint(self, x, cotangent):
        v = as_field_values(x).ravel()
        u = complex(np.asarray(cotangent, dtype=np.complex128)[0])
        return np.array([[4.0 * u.real * v[0]]])
