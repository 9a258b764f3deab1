"""Wavelet phase harmonic (WPH) statistics: estimators, normalization, the
analytic gradient of the statistics map, and the noise-weighted first/second
derivative contractions used by the perturbative loss.

With z_i = x * psi_i and <.> the spatial average, the four estimator classes
are

    s11_i = <|z_i|^2>
    s00_i = <|z_i|^2> - <|z_i|>^2
    s01_i = <|z_i| conj(z_i)>
    c01_(a,b) = <|z_a| conj(z_b)>   over scale pairs j(a) < j(b), all
                orientation pairs,

all degree-2 in x and invariant under circular shifts. Derivative kernels
clamp |z| at MODULUS_FLOOR where the phase factor z/|z| would be singular;
estimator values never clamp.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft

from .fields import Field2D, as_field_values

MODULUS_FLOOR = 1e-12
CLASS_NAMES = ("s11", "s00", "s01", "c01")


class DegenerateReferenceError(ValueError):
    """A normalization reference entry is numerically zero."""


class NearZeroModulusError(FloatingPointError):
    """|psi * x| vanishes at a pixel needed by a singular second-derivative kernel."""


@dataclass(frozen=True)
class ClassMask:
    """Which coefficient classes are active."""

    s11: bool = True
    s00: bool = True
    s01: bool = True
    c01: bool = True

    @classmethod
    def from_names(cls, names):
        names = tuple(names)
        unknown = set(names) - set(CLASS_NAMES)
        if unknown:
            raise ValueError(f"unknown class names {sorted(unknown)}")
        return cls(**{name: name in names for name in CLASS_NAMES})

    @property
    def active(self):
        return tuple(name for name in CLASS_NAMES if getattr(self, name))

    def __iter__(self):
        return iter(self.active)


def coefficient_count(J, L, mask=ClassMask()):
    """Closed-form coefficient count: one entry per filter for each S class,
    C(J,2) L^2 entries for c01."""
    n = J * L
    total = sum(n for name in ("s11", "s00", "s01") if getattr(mask, name))
    if mask.c01:
        total += math.comb(J, 2) * L * L
    return total


@dataclass(frozen=True)
class WphCoefficients:
    """The complex statistics vector, partitioned into classes. Inactive
    classes hold empty arrays."""

    s11: np.ndarray
    s00: np.ndarray
    s01: np.ndarray
    c01: np.ndarray
    mask: ClassMask

    def __post_init__(self):
        for name in CLASS_NAMES:
            arr = np.asarray(getattr(self, name), dtype=np.complex128)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def get(self, name):
        return getattr(self, name)

    @property
    def size(self):
        return sum(self.get(name).size for name in self.mask)

    def vector(self):
        """Active classes concatenated in fixed order (s11, s00, s01, c01)."""
        parts = [self.get(name) for name in self.mask]
        if not parts:
            return np.zeros(0, dtype=np.complex128)
        return np.concatenate(parts)

    def replace_vector(self, vec):
        """Rebuild coefficients with the same layout from a flat vector."""
        vec = np.asarray(vec, dtype=np.complex128)
        if vec.size != self.size:
            raise ValueError(f"vector length {vec.size} != active size {self.size}")
        parts = dict(s11=self.s11, s00=self.s00, s01=self.s01, c01=self.c01)
        pos = 0
        for name in self.mask:
            n = parts[name].size
            parts[name] = vec[pos : pos + n]
            pos += n
        return WphCoefficients(mask=self.mask, **parts)


@dataclass(frozen=True)
class NormalizationRef:
    """s11 coefficients of the observation, used as class-wise divisors."""

    s11_of_y: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.s11_of_y, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "s11_of_y", arr)


def _fft2(a):
    return _fft.fft2(a, axes=(-2, -1))


def _ifft2(a):
    return _fft.ifft2(a, axes=(-2, -1))


def _filtered(x, bank):
    """All filter convolutions z_i = x * psi_i at once, shape (N, H, W)."""
    xhat = _fft.fft2(x)
    return _ifft2(bank.filters * xhat[None, :, :])


def _safe_modulus(z):
    m = np.abs(z)
    return m, np.maximum(m, MODULUS_FLOOR)


def pair_arrays(bank):
    """c01 pair indices as two flat index arrays (modulus side, phase side)."""
    pairs = bank.pair_indices()
    a = np.fromiter((p[0] for p in pairs), dtype=np.intp, count=len(pairs))
    b = np.fromiter((p[1] for p in pairs), dtype=np.intp, count=len(pairs))
    return a, b


def _class_arrays(z, mask, pair_ab):
    """Per-class coefficient arrays from the filtered stack; leading axes of z
    beyond (N, H, W) are preserved, so a batch axis passes through.

    All spatial averages are real contractions on the real/imag parts, which
    keeps the batched path free of large complex temporaries.
    """
    npix = z.shape[-1] * z.shape[-2]
    lead = z.shape[:-2]
    zf = z.reshape(lead + (npix,))
    mf = np.abs(zf)
    empty = np.zeros(z.shape[:-3] + (0,), dtype=np.complex128)
    out = {}
    if mask.s11 or mask.s00:
        mean_m2 = np.einsum("...i,...i->...", mf, mf) / npix
    out["s11"] = mean_m2.astype(np.complex128) if mask.s11 else empty
    if mask.s00:
        mean_m = np.sum(mf, axis=-1) / npix
        out["s00"] = (mean_m2 - mean_m**2).astype(np.complex128)
    else:
        out["s00"] = empty
    if mask.s01:
        out["s01"] = (
            np.einsum("...i,...i->...", mf, zf.real) - 1j * np.einsum("...i,...i->...", mf, zf.imag)
        ) / npix
    else:
        out["s01"] = empty
    if mask.c01:
        a, b = pair_ab
        # full N x N cross table <m_a conj(z_b)> via two real matrix products
        zr = np.ascontiguousarray(zf.real.swapaxes(-1, -2))
        zi = np.ascontiguousarray(zf.imag.swapaxes(-1, -2))
        cross = (mf @ zr - 1j * (mf @ zi)) / npix
        out["c01"] = cross[..., a, b]
    else:
        out["c01"] = empty
    return out


def wph_compute(x, bank, mask=ClassMask()):
    """Estimate the active WPH classes of a real field."""
    x = as_field_values(x)
    if x.shape != (bank.height, bank.width):
        raise ValueError(f"field shape {x.shape} does not match bank grid {(bank.height, bank.width)}")
    z = _filtered(x, bank)
    arrays = _class_arrays(z, mask, pair_arrays(bank) if mask.c01 else None)
    return WphCoefficients(s11=arrays["s11"], s00=arrays["s00"], s01=arrays["s01"], c01=arrays["c01"], mask=mask)


def normalization_from(y, bank):
    """Reference built from the s11 coefficients of the observation."""
    ref = wph_compute(y, bank, ClassMask(s11=True, s00=False, s01=False, c01=False))
    return NormalizationRef(ref.s11.real)


def _check_reference(ref):
    if np.any(ref.s11_of_y < 1e-14):
        raise DegenerateReferenceError("normalization reference has entries below 1e-14")


def _c01_divisors(ref, bank):
    pairs = bank.pair_indices()
    r = ref.s11_of_y
    return np.sqrt(np.array([r[a] * r[b] for a, b in pairs]))


def normalize(coeffs, ref, bank):
    """Class-wise preconditioning: S classes divided by the reference s11,
    c01 by the geometric mean of the two reference entries."""
    _check_reference(ref)
    r = ref.s11_of_y
    empty = np.zeros(0, dtype=np.complex128)
    return WphCoefficients(
        s11=coeffs.s11 / r if coeffs.mask.s11 else empty,
        s00=coeffs.s00 / r if coeffs.mask.s00 else empty,
        s01=coeffs.s01 / r if coeffs.mask.s01 else empty,
        c01=coeffs.c01 / _c01_divisors(ref, bank) if coeffs.mask.c01 else empty,
        mask=coeffs.mask,
    )


def denormalize(coeffs, ref, bank):
    _check_reference(ref)
    r = ref.s11_of_y
    empty = np.zeros(0, dtype=np.complex128)
    return WphCoefficients(
        s11=coeffs.s11 * r if coeffs.mask.s11 else empty,
        s00=coeffs.s00 * r if coeffs.mask.s00 else empty,
        s01=coeffs.s01 * r if coeffs.mask.s01 else empty,
        c01=coeffs.c01 * _c01_divisors(ref, bank) if coeffs.mask.c01 else empty,
        mask=coeffs.mask,
    )


def normalization_divisors(ref, bank, mask=ClassMask()):
    """Flat positive divisor vector matching vector() layout for the mask."""
    _check_reference(ref)
    parts = []
    if mask.s11:
        parts.append(ref.s11_of_y)
    if mask.s00:
        parts.append(ref.s11_of_y)
    if mask.s01:
        parts.append(ref.s11_of_y)
    if mask.c01:
        parts.append(_c01_divisors(ref, bank))
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def _split_cotangent(cotangent, bank, mask):
    cot = np.asarray(cotangent, dtype=np.complex128)
    n = bank.size
    npairs = len(bank.pair_indices()) if mask.c01 else 0
    expected = sum(n for name in ("s11", "s00", "s01") if getattr(mask, name)) + npairs
    if cot.size != expected:
        raise ValueError(f"cotangent length {cot.size} != active coefficient count {expected}")
    out = {}
    pos = 0
    for name in mask:
        size = npairs if name == "c01" else n
        out[name] = cot[pos : pos + size]
        pos += size
    return out


def _adjoint_from_z(x_shape, z, bank, parts, pair_ab):
    """Gradient accumulation given the filtered stack z and split cotangents.

    One coefficient's derivative with respect to the pixels is a field built
    from a few filtered copies of x; the adjoint sums those fields weighted
    by the cotangent. All per-coefficient terms are accumulated in the
    Fourier domain so a single inverse transform produces the gradient.
    """
    M = x_shape[0] * x_shape[1]
    mask = ClassMask(**{name: name in parts for name in CLASS_NAMES})
    m, m_safe = _safe_modulus(z)
    sg = z / m_safe
    psi_conj = np.conj(bank.filters)
    nfilters = bank.size

    def flat(stack):
        return stack.reshape(nfilters, M)

    acc = np.zeros(x_shape, dtype=np.complex128)
    if mask.s11 or mask.s00:
        zhat = _fft2(z)
    if mask.s11:
        u = parts["s11"].real
        acc += np.tensordot(4.0 * u, psi_conj * zhat, axes=(0, 0))
    if mask.s00:
        u = parts["s00"].real
        fsg = _fft2(sg)
        mean_m = np.mean(m, axis=(-2, -1))
        inner = zhat - mean_m[:, None, None] * fsg
        acc += np.tensordot(4.0 * u, psi_conj * inner, axes=(0, 0))
    if mask.s01 or mask.c01:
        mhat = _fft2(m)
    if mask.s01:
        u = parts["s01"]
        hhat = _fft2(sg * z)
        acc += np.tensordot(3.0 * np.conj(u), psi_conj * mhat, axes=(0, 0))
        acc += np.tensordot(u, psi_conj * hhat, axes=(0, 0))
    if mask.c01:
        a, b = pair_ab
        # pair weights as an N x N matrix: row = modulus-side filter,
        # column = phase-side filter
        w = np.zeros((nfilters, nfilters), dtype=np.complex128)
        w[a, b] = parts["c01"]
        wc = np.conj(w)
        # weighted partner fields grouped by the modulus-side filter
        partner = (wc @ np.conj(flat(z)) + w @ flat(z)).reshape(z.shape)
        acc += np.sum(psi_conj * _fft2(sg * partner), axis=0)
        # modulus cross terms grouped by the phase-side filter, in Fourier
        cross = (wc.T @ flat(mhat)).reshape(z.shape)
        acc += 2.0 * np.sum(psi_conj * cross, axis=0)
    return _fft.ifft2(acc).real / M


def wph_jacobian_adjoint(x, bank, cotangent, mask=ClassMask()):
    """Real gradient 2 Re[J(x)^H cotangent] of the raw statistics map."""
    x = as_field_values(x)
    parts = _split_cotangent(cotangent, bank, mask)
    z = _filtered(x, bank)
    grad = _adjoint_from_z(x.shape, z, bank, parts, pair_arrays(bank) if mask.c01 else None)
    return Field2D(grad)


def _spatial_kernels(bank):
    """Per-filter spatial kernels and the transfer functions of |psi|^2 and psi^2."""
    kernels = np.fft.ifft2(bank.filters, axes=(-2, -1))
    q_abs2 = np.fft.fft2(np.abs(kernels) ** 2, axes=(-2, -1))
    q_sq = np.fft.fft2(kernels**2, axes=(-2, -1))
    return kernels, q_abs2, q_sq


def _conv(transfer, field):
    return np.fft.ifft2(transfer * np.fft.fft2(field))


def wph_perturbative_terms(x, bank, pixel_variance, mask=ClassMask()):
    """Noise-weighted derivative contractions per active coefficient.

    Returns (jnorm, htrace) where jnorm_c = sum_i |d phi_c / d x_i|^2 var_i
    and htrace_c = sum_i (d^2 phi_c / d x_i^2) var_i, from the closed forms
    valid for self-adjoint filters (real transfer functions).
    """
    x = as_field_values(x)
    var = as_field_values(pixel_variance)
    if np.any(var < 0):
        raise ValueError("pixel variance must be nonnegative")
    if not np.allclose(bank.filters.imag, 0.0):
        raise ValueError("perturbative terms require self-adjoint filters (real transfer functions)")
    M = x.size
    z = _filtered(x, bank)
    m = np.abs(z)
    needs_phase = mask.s00 or mask.s01 or mask.c01
    if needs_phase and np.min(m) < MODULUS_FLOOR:
        raise NearZeroModulusError(
            "|psi * x| vanishes at a pixel required by a singular second-derivative kernel"
        )
    sg = z / np.where(m > 0, m, 1.0)
    psi = bank.filters  # real transfer functions; adjoint equals the filter
    var_total = var.sum()

    jnorm_parts, htrace_parts = [], []
    if mask.s11 or mask.s00:
        xhat = np.fft.fft2(x)
        w = np.fft.ifft2(psi * psi * xhat[None], axes=(-2, -1)).real  # Re[psi_adj * psi * x]
        energy = np.sum(np.abs(psi) ** 2, axis=(-2, -1)) / M  # ||psi||^2 per filter
    if mask.s11:
        d = (2.0 / M) * w
        jnorm_parts.append(np.sum(d**2 * var[None], axis=(-2, -1)))
        htrace_parts.append(((2.0 / M) * energy * var_total).astype(np.complex128))
    if needs_phase:
        kernels, q_abs2, q_sq = _spatial_kernels(bank)
        fsg = np.fft.fft2(sg, axes=(-2, -1))
    if mask.s00:
        mean_m = np.mean(m, axis=(-2, -1))
        jn = np.empty(bank.size)
        ht = np.empty(bank.size, dtype=np.complex128)
        for i in range(bank.size):
            s_i = np.fft.ifft2(psi[i] * fsg[i])
            d = (2.0 / M) * (w[i] - mean_m[i] * s_i.real)
            jn[i] = np.sum(d**2 * var)
            curv = (
                _conv(q_sq[i], sg[i] ** 2 / m[i]) - _conv(q_abs2[i], 1.0 / m[i])
            ).real
            second = (
                (2.0 / M) * energy[i] * var_total
                - (2.0 / M**2) * np.sum(s_i.real**2 * var)
                + (1.0 / M) * mean_m[i] * np.sum(curv * var)
            )
            ht[i] = second
        jnorm_parts.append(jn)
        htrace_parts.append(ht)
    if mask.s01:
        jn = np.empty(bank.size)
        ht = np.empty(bank.size, dtype=np.complex128)
        for i in range(bank.size):
            t_m = _conv(psi[i], m[i])
            t_h = _conv(psi[i], sg[i] * z[i])
            d = (1.5 / M) * t_m + (0.5 / M) * np.conj(t_h)
            jn[i] = np.sum(np.abs(d) ** 2 * var)
            bracket = (
                6.0 * _conv(q_abs2[i], np.conj(sg[i]))
                + 3.0 * np.fft.ifft2(q_sq[i] * fsg[i])
                - np.conj(_conv(q_sq[i], sg[i] ** 3))
            )
            ht[i] = (0.25 / M) * np.sum(bracket * var)
        jnorm_parts.append(jn)
        htrace_parts.append(ht)
    if mask.c01:
        pairs = bank.pair_indices()
        jn = np.empty(len(pairs))
        ht = np.empty(len(pairs), dtype=np.complex128)
        for p, (a, b) in enumerate(pairs):
            t1 = _conv(psi[a], sg[a] * np.conj(z[b]))
            t2 = _conv(psi[a], sg[a] * z[b])
            t3 = _conv(psi[b], m[a])
            d = (0.5 / M) * (t1 + np.conj(t2)) + (1.0 / M) * t3
            jn[p] = np.sum(np.abs(d) ** 2 * var)
            q_ab = np.fft.fft2(kernels[a] * kernels[b])
            q_acb = np.fft.fft2(kernels[a] * np.conj(kernels[b]))
            bracket = (
                2.0 * _conv(q_abs2[a], np.conj(z[b]) / m[a])
                + 4.0 * np.fft.ifft2(q_ab * fsg[a])
                + 4.0 * np.conj(np.fft.ifft2(q_acb * fsg[a]))
                - _conv(q_sq[a], np.conj(z[b]) * sg[a] ** 2 / m[a])
                - np.conj(_conv(q_sq[a], z[b] * sg[a] ** 2 / m[a]))
            )
            ht[p] = (0.25 / M) * np.sum(bracket * var)
        jnorm_parts.append(jn)
        htrace_parts.append(ht)

    jnorm = np.concatenate(jnorm_parts) if jnorm_parts else np.zeros(0)
    htrace = np.concatenate(htrace_parts) if htrace_parts else np.zeros(0, dtype=np.complex128)
    return jnorm, htrace


def export_csv(coeffs, bank, path):
    """Write coefficients as rows (class, j1, l1, j2, l2, real, imag)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "j1", "l1", "j2", "l2", "real", "imag"])
        for name in coeffs.mask:
            values = coeffs.get(name)
            if name == "c01":
                for (a, b), v in zip(bank.pair_indices(), values):
                    writer.writerow(
                        [
                            name,
                            bank.scale_of(a),
                            bank.orientation_of(a),
                            bank.scale_of(b),
                            bank.orientation_of(b),
                            repr(float(v.real)),
                            repr(float(v.imag)),
                        ]
                    )
            else:
                for i, v in enumerate(values):
                    writer.writerow(
                        [name, bank.scale_of(i), bank.orientation_of(i), "", "",
                         repr(float(v.real)), repr(float(v.imag))]
                    )
