"""Closed-form global minima of the statistics-matching loss for the three
tractable representations, plus a grid-search minimizer used as an
independent oracle in tests.

For white Gaussian noise of variance sigma^2 the loss
E ||phi(x + eps) - phi(y)||^2 has known minimizers:

  * phi(x) = A x with A injective   -> the observation y itself;
  * phi(x) = x^2 (scalar)           -> 0 below the threshold y^2 <= 3 sigma^2,
                                       else +/- sqrt(y^2 - 3 sigma^2);
  * phi(x) = ||A x||^2, A injective -> eigenvectors of A^T A for the smallest
                                       eigenvalue passing a threshold, scaled
                                       to a prescribed filtered power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import as_field_values


class DomainTooLargeError(ValueError):
    """Grid search supports only 1-D and 2-D domains."""


class SingularMatrixError(ValueError):
    """A^T A is numerically singular; the representation is not injective."""


def linear_minimum(y):
    """Global minimum for an injective linear representation: the observation itself."""
    return y


@dataclass(frozen=True)
class QuadraticSolution:
    """Minimizer set for the scalar quadratic representation: {0} or {+r, -r}."""

    values: tuple

    @property
    def is_zero(self):
        return self.values == (0.0,)


def sqrt_threshold(y, sigma):
    """Minimizer set for phi(x) = x^2: 0 when y^2 <= 3 sigma^2, else +/- sqrt(y^2 - 3 sigma^2)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    gap = y * y - 3.0 * sigma * sigma
    if gap <= 0:
        return QuadraticSolution((0.0,))
    r = math.sqrt(gap)
    return QuadraticSolution((r, -r))


def sqrt_threshold_value(y, sigma):
    """Single-valued form sgn(y) sqrt(max(0, y^2 - 3 sigma^2)); odd, continuous,
    flat on [-sqrt(3) sigma, sqrt(3) sigma], asymptotically the identity."""
    y = np.asarray(y, dtype=np.float64)
    gap = np.maximum(0.0, y * y - 3.0 * float(sigma) ** 2)
    out = np.sign(y) * np.sqrt(gap)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SpectralSolutionSpec:
    """Minimizer description for phi(x) = ||A x||^2: an eigenvalue choice plus
    a norm constraint (the minimizer set is a sphere within an eigenspace)."""

    lambda_set: tuple  # eigenvalues passing the threshold
    chosen_lambda: float | None  # min of the set, or None when empty
    target_norm: float  # required ||A x||^2 (0 when the minimum is x = 0)
    representative: np.ndarray  # one minimizer (zeros when the set is empty)

    @property
    def minimum_is_zero(self):
        return self.chosen_lambda is None


def expected_filtered_noise_power(A, sigma):
    """E ||A eps||^2 = sigma^2 tr(A^T A) for white Gaussian eps."""
    A = np.asarray(A, dtype=np.float64)
    return float(sigma) ** 2 * float(np.sum(A * A))


def _eigensystem(A):
    A = np.asarray(A, dtype=np.float64)
    gram = A.T @ A
    lams, vecs = np.linalg.eigh(gram)
    tol = 1e-9 * max(lams[-1], 0.0)
    if lams[0] <= tol:
        raise SingularMatrixError("A^T A is singular within tolerance; A must be injective")
    # Deduplicate nearly equal eigenvalues so threshold membership is stable.
    unique, first_index = [], []
    for i, lam in enumerate(lams):
        if unique and abs(lam - unique[-1]) <= tol:
            continue
        unique.append(lam)
        first_index.append(i)
    return np.array(unique), first_index, vecs


def spectral_minimum_spec(A, y, sigma):
    """Prescribe the minimizers of the loss for phi(x) = ||A x||^2.

    Eigenvalues lam of A^T A with ||A y||^2 - E||A eps||^2 - 2 sigma^2 lam >= 0
    are admissible; the minimum uses the smallest such lam, with minimizers the
    corresponding eigenvectors scaled so that ||A x||^2 equals the threshold
    expression. An empty set means the unique global minimum is x = 0.
    """
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    power_y = float(np.sum((A @ y) ** 2))
    noise_power = expected_filtered_noise_power(A, sigma)
    lams, first_index, vecs = _eigensystem(A)
    margins = power_y - noise_power - 2.0 * float(sigma) ** 2 * lams
    passing = margins >= 0
    lambda_set = tuple(lams[passing])
    if not lambda_set:
        return SpectralSolutionSpec(lambda_set, None, 0.0, np.zeros(A.shape[1]))
    pick = int(np.flatnonzero(passing)[0])  # eigh sorts ascending: first passing is min
    lam = float(lams[pick])
    target = float(margins[pick])
    vec = vecs[:, first_index[pick]]
    representative = vec * math.sqrt(target / lam)
    return SpectralSolutionSpec(lambda_set, lam, target, representative)


def spectral_loss(A, y, sigma, x):
    """Exact loss value for phi(x) = ||A x||^2 under white Gaussian noise."""
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    gram = A.T @ A
    power_x = float(x @ gram @ x)
    power_y = float(y @ gram @ y)
    noise_power = expected_filtered_noise_power(A, sigma)
    s2 = float(sigma) ** 2
    loss0 = 2.0 * s2**2 * float(np.sum(gram * gram)) + (noise_power - power_y) ** 2
    return (
        power_x**2
        + 4.0 * s2 * float(np.sum((gram @ x) ** 2))
        + 2.0 * power_x * (noise_power - power_y)
        + loss0
    )


def unbiased_ps_estimate(phi_y, phi_eps_mean):
    """Unbiased estimate of the clean signal's additive statistics: phi(y) - E[phi(eps)]."""
    phi_y = np.asarray(phi_y)
    phi_eps_mean = np.asarray(phi_eps_mean)
    if phi_y.shape != phi_eps_mean.shape:
        raise ValueError("phi_y and phi_eps_mean must have equal length")
    return phi_y - phi_eps_mean


def brute_force_minimize(loss, bounds, coarse=801, refine_rounds=4, value_rel_tol=1e-2):
    """Exhaustive grid minimization over a 1-D or 2-D box with local refinement.

    ``bounds`` is a sequence of (lo, hi) per dimension. Grid-level local
    minima are each refined by shrinking local grids, deduplicated, and every
    refined minimum whose value lies within ``value_rel_tol`` (relative to
    the global best) is returned, so symmetric co-minima are all reported.
    Returns sorted floats for 1-D domains, tuples for 2-D.
    """
    bounds = [tuple(map(float, b)) for b in bounds]
    dim = len(bounds)
    if dim not in (1, 2):
        raise DomainTooLargeError("grid search supports 1-D and 2-D domains only")

    if dim == 1:
        lo, hi = bounds[0]
        xs = np.linspace(lo, hi, coarse)
        vals = np.array([loss(x) for x in xs])
        padded = np.concatenate(([np.inf], vals, [np.inf]))
        is_min = (vals <= padded[:-2]) & (vals <= padded[2:])
        seeds = [np.array([xs[i]]) for i in np.flatnonzero(is_min)]
        step = np.array([(hi - lo) / (coarse - 1)])
    else:
        n = max(3, int(math.isqrt(coarse)))
        axes = [np.linspace(lo, hi, n) for lo, hi in bounds]
        gx, gy = np.meshgrid(*axes, indexing="ij")
        vals = np.array([[loss((gx[i, j], gy[i, j])) for j in range(n)] for i in range(n)])
        padded = np.pad(vals, 1, constant_values=np.inf)
        is_min = (
            (vals <= padded[:-2, 1:-1])
            & (vals <= padded[2:, 1:-1])
            & (vals <= padded[1:-1, :-2])
            & (vals <= padded[1:-1, 2:])
        )
        seeds = [np.array([gx[i, j], gy[i, j]]) for i, j in zip(*np.nonzero(is_min))]
        step = np.array([(hi - lo) / (n - 1) for lo, hi in bounds])

    def eval_point(p):
        return loss(p[0]) if dim == 1 else loss(tuple(p))

    minima = []
    for seed in seeds:
        center, width = seed.astype(float), 1.5 * step
        for _ in range(refine_rounds):
            local_axes = [np.linspace(c - w, c + w, 21) for c, w in zip(center, width)]
            if dim == 1:
                pts = local_axes[0][:, None]
            else:
                lg = np.meshgrid(*local_axes, indexing="ij")
                pts = np.stack([a.ravel() for a in lg], axis=1)
            lvals = np.array([eval_point(p) for p in pts])
            center = pts[int(np.argmin(lvals))]
            width = width / 8.0
        minima.append((center, eval_point(center)))

    # Merge refined centers that converged to the same basin.
    merged = []
    for center, val in sorted(minima, key=lambda cv: cv[1]):
        if all(np.max(np.abs(center - c)) > np.max(step) for c, _ in merged):
            merged.append((center, val))
    best = merged[0][1]
    tol = value_rel_tol * (abs(best) + 1e-12)
    out = [c for c, v in merged if v <= best + tol]
    if dim == 1:
        return sorted(float(c[0]) for c in out)
    return [tuple(map(float, c)) for c in out]


def pointwise_sqrt_threshold(y, sigma):
    """Apply the scalar quadratic minimizer pixelwise; a simple analytic denoiser."""
    return sqrt_threshold_value(as_field_values(y), sigma)
