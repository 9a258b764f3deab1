import math

import numpy as np
import pytest

from statsep.analytic import (
    DomainTooLargeError,
    SingularMatrixError,
    brute_force_minimize,
    expected_filtered_noise_power,
    linear_minimum,
    pointwise_sqrt_threshold,
    spectral_loss,
    spectral_minimum_spec,
    sqrt_threshold,
    sqrt_threshold_value,
    unbiased_ps_estimate,
)


def test_linear_minimum_returns_observation():
    y = np.random.default_rng(0).standard_normal((8, 8))
    assert linear_minimum(y) is y
    assert linear_minimum(0.0) == 0.0


def test_sqrt_threshold_paper_cases():
    assert sqrt_threshold(1.0, 1.0).values == (0.0,)  # 1 <= 3
    sol = sqrt_threshold(2.0, 1.0)  # 4 > 3
    assert sol.values == (1.0, -1.0)
    exact = sqrt_threshold(math.sqrt(3.0), 1.0)  # boundary belongs to the zero branch
    assert exact.values == (0.0,)


def test_sqrt_threshold_noiseless_limit():
    sol = sqrt_threshold(-2.5, 0.0)
    assert sol.values == (2.5, -2.5)
    assert sqrt_threshold_value(-2.5, 0.0) == -2.5
    assert sqrt_threshold_value(1.3, 0.0) == 1.3


def test_single_valued_form_odd_continuous_flat():
    sigma = 0.8
    ys = np.linspace(-4, 4, 2001)
    vals = sqrt_threshold_value(ys, sigma)
    assert np.allclose(vals, -sqrt_threshold_value(-ys, sigma))
    flat = np.abs(ys) <= math.sqrt(3) * sigma
    assert np.all(vals[flat] == 0.0)
    # continuous but with unbounded slope at the flat-region border: the
    # largest grid jump scales like sqrt(step)
    coarse = np.max(np.abs(np.diff(sqrt_threshold_value(np.linspace(-4, 4, 2001), sigma))))
    fine = np.max(np.abs(np.diff(sqrt_threshold_value(np.linspace(-4, 4, 32001), sigma))))
    assert fine < coarse / 2.5
    assert coarse < 2.0 * math.sqrt(2 * 4 * (8 / 2000))


def test_asymptotic_identity_bound():
    sigma = 1.0
    for y in (2.0, 5.0, 20.0, 1e3):
        v = sqrt_threshold_value(y, sigma)
        assert abs(v - y) < 3 * sigma**2 / abs(y)


def test_spectral_minimum_identity_example():
    spec = spectral_minimum_spec(np.eye(2), np.array([3.0, 0.0]), 1.0)
    assert spec.lambda_set == (1.0,)
    assert spec.chosen_lambda == 1.0
    # |Ay|^2 - sigma^2 tr - 2 sigma^2 lambda = 9 - 2 - 2
    assert spec.target_norm == pytest.approx(5.0)
    assert np.sum(spec.representative**2) == pytest.approx(5.0)


def test_spectral_minimum_zero_observation():
    spec = spectral_minimum_spec(np.eye(2), np.zeros(2), 1.0)
    assert spec.minimum_is_zero
    assert spec.target_norm == 0.0
    assert np.all(spec.representative == 0.0)


def test_spectral_reduces_to_scalar_threshold():
    # 1x1 matrix [a] with a = 1: same set as the scalar quadratic solution
    above = spectral_minimum_spec(np.array([[1.0]]), np.array([2.0]), 1.0)
    assert above.target_norm == pytest.approx(1.0)
    assert sorted((above.representative[0], -above.representative[0])) == sorted(sqrt_threshold(2.0, 1.0).values)
    below = spectral_minimum_spec(np.array([[1.0]]), np.array([1.0]), 1.0)
    assert below.minimum_is_zero
    assert sqrt_threshold(1.0, 1.0).values == (0.0,)


def test_expected_noise_power():
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert expected_filtered_noise_power(A, 2.0) == pytest.approx(4.0 * 6.0)


def test_spectral_loss_at_minimizer_beats_equal_norm_points():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((4, 3))
    y = 2.0 * rng.standard_normal(3)
    sigma = 0.7
    spec = spectral_minimum_spec(A, y, sigma)
    assert not spec.minimum_is_zero
    x = spec.representative
    loss_min = spectral_loss(A, y, sigma, x)
    # analytic identity: the minimum sits the squared margin below the origin value
    assert loss_min == pytest.approx(spectral_loss(A, y, sigma, np.zeros(3)) - spec.target_norm**2, rel=1e-10)
    q = 200_000
    eps = sigma * rng.standard_normal((q, 3))
    norm = np.linalg.norm(x)
    for _ in range(100):
        d = rng.standard_normal(3)
        p = d / np.linalg.norm(d) * norm
        filtered = np.sum((A @ (p[:, None] + eps.T)) ** 2, axis=0)
        mc = np.mean((filtered - np.sum((A @ y) ** 2)) ** 2)
        se = np.std((filtered - np.sum((A @ y) ** 2)) ** 2) / math.sqrt(q)
        assert loss_min <= mc + 3 * se


def test_spectral_singular_matrix_rejected():
    with pytest.raises(SingularMatrixError):
        spectral_minimum_spec(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones(2), 1.0)


def test_unbiased_estimate_trivia():
    phi_y = np.array([3.0, 4.0])
    assert np.array_equal(unbiased_ps_estimate(phi_y, np.zeros(2)), phi_y)
    assert np.array_equal(unbiased_ps_estimate(phi_y, phi_y), np.zeros(2))
    with pytest.raises(ValueError):
        unbiased_ps_estimate(np.zeros(2), np.zeros(3))


def test_unbiased_estimate_additivity_monte_carlo():
    # band powers are additive for independent signals: subtracting the mean
    # noise statistics recovers the clean statistics on average
    rng = np.random.default_rng(2)
    x0 = rng.standard_normal(16)
    A = rng.standard_normal((5, 16))
    sigma = 0.5

    def phi(v):
        return np.sum((A @ v.reshape(16, -1)) ** 2, axis=0) if v.ndim > 1 else (A @ v) ** 2

    draws = sigma * rng.standard_normal((10_000, 16))
    phi_mix = np.stack([phi(x0 + e) for e in draws])
    phi_noise = np.stack([phi(e) for e in draws])
    estimate = phi_mix.mean(axis=0) - phi_noise.mean(axis=0)
    se = (phi_mix.std(axis=0) + phi_noise.std(axis=0)) / math.sqrt(draws.shape[0])
    assert np.all(np.abs(estimate - phi(x0)) < 4 * se)


def test_brute_force_convex_and_double_well():
    assert brute_force_minimize(lambda x: (x - 3.0) ** 2, [(-10, 10)]) == pytest.approx([3.0], abs=1e-3)
    two = brute_force_minimize(lambda x: (x * x - 1.0) ** 2, [(-3, 3)])
    assert two == pytest.approx([-1.0, 1.0], abs=1e-3)


def test_brute_force_quadratic_mc_loss():
    eps = np.random.default_rng(7).standard_normal(200_000)
    minima = brute_force_minimize(lambda x: float(np.mean(((x + eps) ** 2 - 4.0) ** 2)), [(-4, 4)])
    assert len(minima) == 2
    assert abs(minima[0] + 1.0) < 0.02 and abs(minima[1] - 1.0) < 0.02


def test_brute_force_2d_symmetric_minima():
    found = brute_force_minimize(lambda p: (p[0] ** 2 - 1.0) ** 2 + (p[1] - 0.5) ** 2, [(-2, 2), (-2, 2)])
    assert len(found) == 2
    xs = sorted(p[0] for p in found)
    assert xs == pytest.approx([-1.0, 1.0], abs=1e-2)
    assert all(abs(p[1] - 0.5) < 1e-2 for p in found)


def test_spectral_identity_example_cross_checked_by_grid_search():
    # A = I2, sigma = 1, y = (3, 0): the minimizer set is the circle |x|^2 = 5;
    # dense grid minimization of the Monte Carlo loss must land on it
    eps = np.random.default_rng(8).standard_normal((200_000, 2))
    sq = np.sum(eps**2, axis=1)
    dot = eps  # for A = I, A eps = eps

    def loss(p):
        px, py = p
        c = (px**2 + py**2) + 2.0 * (px * dot[:, 0] + py * dot[:, 1]) + sq - 9.0
        return float(np.mean(c**2))

    found = brute_force_minimize(loss, [(-3.2, 3.2), (-3.2, 3.2)], coarse=900)
    assert found
    spec = spectral_minimum_spec(np.eye(2), np.array([3.0, 0.0]), 1.0)
    for p in found:
        assert np.hypot(*p) ** 2 == pytest.approx(spec.target_norm, rel=0.05)


def test_brute_force_domain_guard():
    with pytest.raises(DomainTooLargeError):
        brute_force_minimize(lambda p: 0.0, [(-1, 1)] * 3)


def test_pointwise_threshold_denoiser():
    y = np.array([[0.5, -2.0], [3.0, 0.0]])
    out = pointwise_sqrt_threshold(y, 0.5)
    expected = np.array([[0.0, -math.sqrt(4 - 0.75)], [math.sqrt(9 - 0.75), 0.0]])
    assert np.allclose(out, expected)
