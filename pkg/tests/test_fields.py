import numpy as np
import pytest

from statsep.fields import (
    Field2D,
    ShapeMismatchError,
    Spectrum2D,
    adjoint_filter,
    convolve_periodic,
    fft_forward,
    fft_inverse,
    read_field,
    read_png,
    write_field,
    write_png,
)


def test_constant_field_transforms_to_dc_only():
    c = 2.5
    f = Field2D(np.full((8, 8), c))
    spec = fft_forward(f).values
    assert spec[0, 0] == pytest.approx(c * np.sqrt(64))
    rest = spec.copy()
    rest[0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-12


@pytest.mark.parametrize("seed", [0, 1])
def test_round_trip_identity(seed):
    f = np.random.default_rng(seed).standard_normal((16, 16))
    back = fft_inverse(fft_forward(Field2D(f))).values
    assert np.max(np.abs(back - f)) < 1e-10 * np.max(np.abs(f))


def test_pure_cosine_gives_conjugate_peaks():
    h, w = 16, 16
    iy, ix = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    f = np.cos(2 * np.pi * (3 * iy / h + 2 * ix / w))
    spec = fft_forward(Field2D(f)).values
    mags = np.abs(spec)
    assert mags[3, 2] == pytest.approx(mags[-3, -2])
    assert spec[3, 2] == pytest.approx(np.conj(spec[-3, -2]))
    others = mags.copy()
    others[3, 2] = others[-3, -2] = 0
    assert np.max(others) < 1e-10


def test_parseval_unitary():
    f = np.random.default_rng(3).standard_normal((12, 20))
    spec = fft_forward(Field2D(f)).values
    assert np.sum(np.abs(spec) ** 2) == pytest.approx(np.sum(f**2), rel=1e-10)


def test_hermitian_symmetry_of_real_field():
    f = np.random.default_rng(4).standard_normal((8, 8))
    s = fft_forward(Field2D(f)).values
    reflected = np.roll(np.roll(s[::-1, ::-1], 1, axis=0), 1, axis=1)
    assert np.allclose(s, np.conj(reflected))


def test_identity_and_zero_filters():
    f = np.random.default_rng(5).standard_normal((8, 8))
    allpass = Spectrum2D(np.ones((8, 8), dtype=complex))
    out = convolve_periodic(Field2D(f), allpass).values
    assert np.max(np.abs(out - f)) < 1e-12
    zero = Spectrum2D(np.zeros((8, 8), dtype=complex))
    assert np.max(np.abs(convolve_periodic(Field2D(f), zero).values)) == 0.0


def test_convolution_matches_direct_sum():
    rng = np.random.default_rng(6)
    h = w = 8
    f = rng.standard_normal((h, w))
    kernel = rng.standard_normal((h, w)) + 1j * rng.standard_normal((h, w))
    transfer = Spectrum2D(np.fft.fft2(kernel))
    fast = convolve_periodic(Field2D(f), transfer).values
    direct = np.zeros((h, w), dtype=complex)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for p in range(h):
                for q in range(w):
                    acc += f[p, q] * kernel[(i - p) % h, (j - q) % w]
            direct[i, j] = acc
    assert np.max(np.abs(fast - direct)) < 1e-9


def test_convolution_is_linear():
    rng = np.random.default_rng(7)
    f, g = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
    psi = Spectrum2D(rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    a, b = 1.7, -0.3
    lhs = convolve_periodic(Field2D(a * f + b * g), psi).values
    rhs = a * convolve_periodic(Field2D(f), psi).values + b * convolve_periodic(Field2D(g), psi).values
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(1.0, np.max(np.abs(lhs)))


def test_convolution_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        convolve_periodic(Field2D(np.ones((4, 4))), Spectrum2D(np.ones((8, 8), complex)))


def test_adjoint_filter_identity():
    rng = np.random.default_rng(8)
    psi = Spectrum2D(rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    x = rng.standard_normal((8, 8))
    y = rng.standard_normal((8, 8))
    lhs = np.sum(convolve_periodic(Field2D(x), psi).values * np.conj(y))
    rhs = np.sum(x * np.conj(convolve_periodic(Field2D(y), adjoint_filter(psi)).values))
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_adjoint_of_real_symmetric_filter_is_itself():
    # real symmetric kernel -> real transfer function -> self-adjoint
    kernel = np.zeros((8, 8))
    kernel[0, 0] = 1.0
    kernel[1, 0] = kernel[-1, 0] = 0.5
    kernel[0, 1] = kernel[0, -1] = 0.25
    transfer = Spectrum2D(np.fft.fft2(kernel))
    assert np.allclose(adjoint_filter(transfer).values, transfer.values)


def test_adjoint_is_involution():
    rng = np.random.default_rng(9)
    psi = Spectrum2D(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    assert np.array_equal(adjoint_filter(adjoint_filter(psi)).values, psi.values)


def test_fields_are_immutable():
    f = Field2D(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_field_validation():
    with pytest.raises(ValueError):
        Field2D(np.zeros((0, 4)))
    with pytest.raises(ValueError):
        Field2D(np.zeros(16))


def test_binary_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    for arr in (rng.standard_normal((5, 7)), rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))):
        path = tmp_path / "field.ssf"
        write_field(Field2D(arr), path)
        back = read_field(path)
        assert back.values.dtype == (np.complex128 if np.iscomplexobj(arr) else np.float64)
        assert np.array_equal(back.values, arr)


def test_binary_write_is_deterministic(tmp_path):
    arr = np.random.default_rng(11).standard_normal((6, 6))
    p1, p2 = tmp_path / "a.ssf", tmp_path / "b.ssf"
    write_field(Field2D(arr), p1)
    write_field(Field2D(arr), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_png_round_trip_monotone(tmp_path):
    arr = np.linspace(0, 1, 64).reshape(8, 8)
    path = tmp_path / "f.png"
    write_png(Field2D(arr), path)
    back = read_png(path).values
    assert back.shape == (8, 8)
    # linear rescale preserves ordering up to 8-bit quantization
    assert np.all(np.diff(back.ravel()) >= -1e-9)
