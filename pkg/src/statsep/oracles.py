"""Analytic-vs-numerical agreement checks.

Each check pits a closed-form minimizer against an independent numerical
minimization of the Monte Carlo matching loss, at tolerances dominated by
the Monte Carlo error of the numerical side. They double as the fast
self-test behind the command-line ``oracle-check``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .analytic import brute_force_minimize, spectral_minimum_spec
from .noise import NoiseModel
from .representations import LinearRepresentation
from .separation import LbfgsState, SeparationConfig, lbfgs_step, vanilla_separate


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    runtime_s: float


def _mc_quadratic_loss(y, eps):
    target = y * y

    def loss(x):
        return float(np.mean(((x + eps) ** 2 - target) ** 2))

    return loss


def check_quadratic_threshold(q_scale=1.0, threshold_constant=3.0, seed=2024):
    """Scalar quadratic representation: Monte Carlo minima vs the closed form.

    The main case (y = 2, sigma = 1) must produce minima at +/-1 within 0.02;
    nine (y, sigma) pairs straddling the threshold y^2 = 3 sigma^2 must land
    on the correct branch (zero vs +/- sqrt(y^2 - 3 sigma^2)).
    ``threshold_constant`` exists as a negative-control hook: anything other
    than 3 corrupts the expected values, so the check must then fail.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    problems = []

    q_main = max(1000, int(1e6 * q_scale))
    eps = rng.standard_normal(q_main)
    minima = brute_force_minimize(_mc_quadratic_loss(2.0, eps), [(-4.0, 4.0)])
    expected = math.sqrt(max(0.0, 4.0 - threshold_constant * 1.0))
    if len(minima) != 2 or abs(minima[0] + expected) > 0.02 or abs(minima[1] - expected) > 0.02:
        problems.append(f"main case minima {np.round(minima, 4)} != +/-{expected:.4f} within 0.02")

    pairs = [
        (1.0, 1.0),
        (1.5, 1.0),
        (0.5, 0.35),
        (0.8, 0.5),
        (2.0, 1.2),
        (2.0, 1.0),
        (3.0, 1.0),
        (1.8, 1.0),
        (1.0, 0.5),
    ]
    q_pairs = max(1000, int(2e5 * q_scale))
    for y, sigma in pairs:
        eps = sigma * rng.standard_normal(q_pairs)
        lim = max(4.0 * sigma, 2.0 * abs(y))
        found = brute_force_minimize(_mc_quadratic_loss(y, eps), [(-lim, lim)])
        gap = y * y - threshold_constant * sigma * sigma
        if gap <= 0:
            ok = len(found) >= 1 and max(abs(v) for v in found) < 0.06 * max(sigma, 1.0)
            label = "0"
        else:
            r = math.sqrt(gap)
            ok = (
                len(found) == 2
                and abs(found[0] + r) < 0.05 * max(1.0, r)
                and abs(found[1] - r) < 0.05 * max(1.0, r)
            )
            label = f"+/-{r:.3f}"
        if not ok:
            problems.append(f"(y={y}, sigma={sigma}): minima {np.round(found, 4)} != {label}")

    detail = "; ".join(problems) if problems else f"main minima {np.round(minima, 4)}, 9 threshold pairs agree"
    return CheckResult("quadratic sqrt-threshold minima", not problems, detail, time.perf_counter() - t0)


def check_linear_identity(seed=7):
    """Injective linear representation: the full pipeline must return the observation."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((32, 32))
    rep = LinearRepresentation((32, 32))
    noise = NoiseModel("white", 0.005, (32, 32))
    cfg = SeparationConfig(Q=100, T=12, seed=seed)
    x0 = y + 0.05 * rng.standard_normal((32, 32))
    xhat, trace = vanilla_separate(y, noise, rep, cfg, x0=x0)
    rms = float(np.sqrt(np.mean((xhat.values - y) ** 2)))
    passed = rms < 1e-3 and not trace.aborted
    return CheckResult(
        "linear representation returns the observation",
        passed,
        f"RMS distance to y = {rms:.2e} (tolerance 1e-3)",
        time.perf_counter() - t0,
    )


def _minimize_filtered_power_loss(A, y, sigma, q, seed):
    """Deterministically minimize the frozen-batch Monte Carlo loss for
    phi(x) = ||A x||^2, starting from the observation."""
    rng = np.random.default_rng(seed)
    eps = sigma * rng.standard_normal((q, A.shape[1]))
    w = eps @ A.T  # A eps_k rows
    ww = np.sum(w**2, axis=1)
    target = float(np.sum((A @ y) ** 2))

    def value_and_grad(x):
        a = A @ x
        c = float(np.dot(a, a)) + 2.0 * (w @ a) + ww - target
        value = float(np.mean(c**2))
        grad_a = 4.0 * (np.mean(c) * a + (w.T @ c) / q)
        return value, A.T @ grad_a

    def value_only(x):
        a = A @ x
        c = float(np.dot(a, a)) + 2.0 * (w @ a) + ww - target
        return float(np.mean(c**2))

    x = y.astype(np.float64).copy()
    state = LbfgsState()
    for _ in range(400):
        value, grad = value_and_grad(x)
        if np.linalg.norm(grad) < 1e-10 * max(1.0, abs(value)):
            break
        xs = x.reshape(1, -1)
        xs_new, info = lbfgs_step(state, xs, value, grad.reshape(1, -1), lambda p: value_only(p.ravel()))
        if info["line_search_failed"] or info["stationary"]:
            break
        x = xs_new.ravel()
    return x


def check_spectral_minima(q_scale=1.0, seed=5):
    """phi(x) = ||A x||^2 for random injective A: the minimized filtered power
    must match the closed-form threshold expression (2%), or the minimizer
    must collapse to zero when no eigenvalue passes."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    q = max(2000, int(1e5 * q_scale))
    problems = []
    branches = {"threshold": 0, "zero": 0}
    for case in range(10):
        m = int(rng.integers(1, 4))
        k = int(rng.integers(m, 5))
        A = rng.standard_normal((k, m))
        if case < 5:
            sigma, y = 0.5, 2.5 * rng.standard_normal(m) + 0.5
        else:
            # high noise floor: no eigenvalue passes, the minimum collapses to zero
            sigma, y = 4.0, 1.5 * rng.standard_normal(m) + 0.5
        spec = spectral_minimum_spec(A, y, sigma)
        xhat = _minimize_filtered_power_loss(A, y, sigma, q, seed + 100 + case)
        power = float(np.sum((A @ xhat) ** 2))
        if spec.minimum_is_zero:
            branches["zero"] += 1
            bound = 0.05 * float(np.linalg.norm(y))
            if float(np.linalg.norm(xhat)) >= bound:
                problems.append(f"case {case}: |x| = {np.linalg.norm(xhat):.3g} >= {bound:.3g}")
        else:
            branches["threshold"] += 1
            rel = abs(power - spec.target_norm) / spec.target_norm
            if rel > 0.02:
                problems.append(f"case {case}: |Ax|^2 = {power:.4g} vs {spec.target_norm:.4g} (rel {rel:.3f})")
    if min(branches.values()) == 0:
        problems.append(f"both branches should occur, got {branches}")
    detail = "; ".join(problems) if problems else f"10 random matrices agree ({branches})"
    return CheckResult("filtered-power threshold minima", not problems, detail, time.perf_counter() - t0)


def run_all(q_scale=1.0, threshold_constant=3.0):
    return [
        check_quadratic_threshold(q_scale=q_scale, threshold_constant=threshold_constant),
        check_linear_identity(),
        check_spectral_minima(q_scale=q_scale),
    ]
