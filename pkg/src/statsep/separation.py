"""Loss functions and the separation algorithms.

The matching loss E ||phi(x + eps) - phi(y)||^2 is minimized either through
its Monte Carlo estimate over a resampled noise batch, or through its
second-order expansion in the noise amplitude (the perturbative loss). One
optimizer step per resampled batch is a limited-memory quasi-Newton update
with a backtracking line search; the curvature history survives resampling,
which is why the batch size must stay reasonably large.

Three drivers are provided: the single-stage algorithm initialized at the
observation, the stepwise variant that re-targets the loss on the current
iterate while shrinking the injected noise, and the frozen-bias variant that
whitens the residual by the empirical spread of the corrupted statistics.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .fields import Field2D, as_field_values
from .noise import DiffusionSchedule, sample_batch, uniform_schedule

SIGMA_FLOOR = 1e-12


class NumericalAbort(RuntimeError):
    """Loss became non-finite and no finite iterate could be restored."""


def iteration_seed(base_seed, stage, iteration):
    """Deterministic per-(stage, iteration) seed; stage 0 matches the single-stage driver."""
    return np.random.SeedSequence([int(base_seed), int(stage), int(iteration)])


# ---------------------------------------------------------------------------
# Monte Carlo and perturbative losses


def mc_loss_with_batch(x, phi_y, rep, eps, alpha, want_gradient=True):
    """Batch estimate of the loss and its gradient at x.

    value = mean_k ||phi(x + alpha eps_k) - phi_y||^2 and the gradient is the
    matching mean of 2 Re[J_phi^H (phi - phi_y)], accumulated in a fixed
    order so results are reproducible.
    """
    x = as_field_values(x)
    q = eps.shape[0]
    if not want_gradient and hasattr(rep, "eval_batch"):
        vectors = rep.eval_batch(x[None] + alpha * eps)
        return float(np.mean(np.sum(np.abs(vectors - phi_y[None]) ** 2, axis=1)))
    fused = getattr(rep, "residual_value_and_grad", None)
    value = 0.0
    grad = np.zeros(x.shape) if want_gradient else None
    for k in range(q):
        xk = x + alpha * eps[k]
        if want_gradient and fused is not None:
            vk, gk = fused(xk, phi_y)
            value += vk
            grad += gk
            continue
        v = rep.eval(xk) - phi_y
        value += float(np.sum(np.abs(v) ** 2))
        if want_gradient:
            grad += rep.gradient_adjoint(xk, v)
    value /= q
    if want_gradient:
        grad /= q
        return value, grad
    return value


def mc_loss(x, phi_y, rep, noise, alpha, Q, seed):
    """Monte Carlo loss and gradient with a batch drawn deterministically from seed."""
    if Q < 1:
        raise ValueError("Q must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    eps = sample_batch(noise, Q, seed)
    return mc_loss_with_batch(x, phi_y, rep, eps, alpha)


def _alpha2_term(x, phi_y, rep, pixel_variance):
    jnorm, htrace = rep.perturbative_terms(x, pixel_variance)
    v = rep.eval(x) - phi_y
    return float(np.sum(jnorm) + np.real(np.sum(htrace * np.conj(v))))


def perturbative_loss(x, phi_y, rep, pixel_variance, alpha, want_gradient=True, fd_step=1e-5):
    """Second-order expansion of the loss in the noise amplitude.

    value = ||phi(x) - phi_y||^2
          + alpha^2 [ sum_c jnorm_c + Re sum_c htrace_c conj(phi_c(x) - phi_y_c) ].

    The zeroth-order gradient is analytic; the alpha^2 term is differentiated
    by per-pixel central differences (step fd_step * ||x||_inf / sqrt(M)),
    which keeps the implementation at the level of the value formulas.
    """
    x = as_field_values(x)
    v = rep.eval(x) - phi_y
    zeroth = float(np.sum(np.abs(v) ** 2))
    second = _alpha2_term(x, phi_y, rep, pixel_variance)
    value = zeroth + alpha**2 * second
    if not want_gradient:
        return value
    grad = rep.gradient_adjoint(x, v)
    scale = float(np.max(np.abs(x)))
    h = fd_step * (scale if scale > 0 else 1.0) / math.sqrt(x.size)
    g2 = np.zeros_like(grad)
    probe = x.copy()
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        base = x[idx]
        probe[idx] = base + h
        fp = _alpha2_term(probe, phi_y, rep, pixel_variance)
        probe[idx] = base - h
        fm = _alpha2_term(probe, phi_y, rep, pixel_variance)
        probe[idx] = base
        g2[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return value, grad + alpha**2 * g2


# ---------------------------------------------------------------------------
# Limited-memory quasi-Newton step


@dataclass(frozen=True)
class LbfgsOptions:
    history: int = 10
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_line_evals: int = 25
    max_step: float | None = None  # cap on ||t d||_inf per update
    curvature_floor: float = 1e-10


@dataclass
class LbfgsState:
    """Curvature history and the previous evaluation point. Single-owner."""

    options: LbfgsOptions = field(default_factory=LbfgsOptions)
    pairs: list = field(default_factory=list)  # (s, y, 1/(s.y)) newest last
    prev_x: np.ndarray | None = None
    prev_grad: np.ndarray | None = None
    steps_taken: int = 0


def _two_loop(gradient, pairs):
    q = gradient.copy()
    alphas = []
    for s, yv, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * yv
    if pairs:
        s, yv, _ = pairs[-1]
        q *= np.dot(s, yv) / np.dot(yv, yv)
    for (s, yv, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(yv, q)
        q += (a - b) * s
    return -q


def lbfgs_step(state, x, value, gradient, loss_fn):
    """One quasi-Newton update with backtracking line search on loss_fn.

    Returns (x_new, info). info["line_search_failed"] signals that no step
    satisfied the sufficient-decrease condition; the caller is expected to
    fall back to a scaled gradient step. A zero gradient returns x unchanged.
    """
    opts = state.options
    x = as_field_values(x)
    g = as_field_values(gradient)
    shape = x.shape
    xf, gf = x.ravel().astype(np.float64), g.ravel().astype(np.float64)

    if state.prev_x is not None:
        s = xf - state.prev_x
        yv = gf - state.prev_grad
        sy = np.dot(s, yv)
        if sy > opts.curvature_floor * np.linalg.norm(s) * np.linalg.norm(yv):
            state.pairs.append((s, yv, 1.0 / sy))
            if len(state.pairs) > opts.history:
                state.pairs.pop(0)
    state.prev_x = xf.copy()
    state.prev_grad = gf.copy()
    state.steps_taken += 1

    info = {"line_search_failed": False, "step_size": 0.0, "evals": 0, "stationary": False}
    gnorm = np.linalg.norm(gf)
    if gnorm == 0.0:
        info["stationary"] = True
        return x, info

    d = _two_loop(gf, state.pairs)
    dd = np.dot(gf, d)
    if dd >= 0:  # not a descent direction; fall back to steepest descent
        d = -gf
        dd = -gnorm**2
    t = 1.0
    if not state.pairs:
        t = min(1.0, 1.0 / np.sum(np.abs(gf)))
    if opts.max_step is not None:
        dmax = np.max(np.abs(d))
        if dmax * t > opts.max_step:
            t = opts.max_step / dmax

    for _ in range(opts.max_line_evals):
        trial = xf + t * d
        f_trial = loss_fn(trial.reshape(shape))
        info["evals"] += 1
        if np.isfinite(f_trial) and f_trial <= value + opts.armijo_c * t * dd:
            info["step_size"] = t
            return trial.reshape(shape), info
        t *= opts.shrink
    info["line_search_failed"] = True
    return x, info


def _step_with_fallback(state, x, value, gradient, loss_fn):
    """Quasi-Newton step; on line-search failure retry along the scaled gradient."""
    x_new, info = lbfgs_step(state, x, value, gradient, loss_fn)
    if not info["line_search_failed"]:
        return x_new, info
    g = as_field_values(gradient).ravel()
    xf = as_field_values(x).ravel()
    shape = as_field_values(x).shape
    t = 1.0 / (1.0 + np.linalg.norm(g))
    for _ in range(state.options.max_line_evals):
        trial = xf - t * g
        f_trial = loss_fn(trial.reshape(shape))
        if np.isfinite(f_trial) and f_trial < value:
            info = dict(info, step_size=t, fallback=True, line_search_failed=False)
            return trial.reshape(shape), info
        t *= state.options.shrink
    return x, dict(info, fallback=True)


# ---------------------------------------------------------------------------
# Configuration and trace


@dataclass(frozen=True)
class SeparationConfig:
    Q: int = 100
    T: int = 30
    P: int = 1
    schedule: DiffusionSchedule | None = None  # defaults to uniform over P stages
    optimizer: LbfgsOptions = field(default_factory=LbfgsOptions)
    loss_kind: str = "monte_carlo"
    seed: int = 0

    def __post_init__(self):
        if self.Q < 1 or self.T < 1 or self.P < 1:
            raise ValueError("Q, T and P must all be >= 1")
        if self.loss_kind not in ("monte_carlo", "perturbative"):
            raise ValueError("loss_kind must be 'monte_carlo' or 'perturbative'")
        if self.schedule is not None and len(self.schedule) != self.P:
            raise ValueError("schedule length must equal P")

    def resolved_schedule(self):
        return self.schedule if self.schedule is not None else uniform_schedule(self.P)


@dataclass
class SeparationTrace:
    """Per-iteration loss records plus the intermediate field after each stage."""

    records: list = field(default_factory=list)  # (stage, iteration, loss, grad_norm, wall_ms)
    stage_fields: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str = ""

    def log(self, stage, iteration, loss, grad_norm, wall_ms):
        self.records.append((stage, iteration, float(loss), float(grad_norm), float(wall_ms)))

    @property
    def losses(self):
        return [r[2] for r in self.records]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "stage", "loss", "grad_norm", "wall_ms"])
            for stage, iteration, loss, grad_norm, wall_ms in self.records:
                writer.writerow([iteration, stage, repr(loss), repr(grad_norm), repr(wall_ms)])


# ---------------------------------------------------------------------------
# Algorithms


def _stage_loop(x, phi_target, rep, noise, alpha, cfg, stage, trace, pixel_variance):
    """T optimizer iterations against a fixed target; returns the new iterate."""
    state = LbfgsState(options=cfg.optimizer)
    last_finite = x.copy()
    for it in range(cfg.T):
        t0 = time.perf_counter()
        if cfg.loss_kind == "monte_carlo":
            eps = sample_batch(noise, cfg.Q, iteration_seed(cfg.seed, stage, it))
            value, grad = mc_loss_with_batch(x, phi_target, rep, eps, alpha)
            loss_fn = lambda xt: mc_loss_with_batch(xt, phi_target, rep, eps, alpha, want_gradient=False)
        else:
            value, grad = perturbative_loss(x, phi_target, rep, pixel_variance, alpha)
            loss_fn = lambda xt: perturbative_loss(
                xt, phi_target, rep, pixel_variance, alpha, want_gradient=False
            )
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            trace.aborted = True
            trace.abort_reason = f"non-finite loss at stage {stage}, iteration {it}"
            return last_finite
        last_finite = x.copy()
        x, info = _step_with_fallback(state, x, value, grad, loss_fn)
        trace.log(stage, it, value, np.linalg.norm(grad), (time.perf_counter() - t0) * 1e3)
    return x


def _separate(y, noise, rep, cfg, x0=None):
    y = as_field_values(y).astype(np.float64)
    x = y.copy() if x0 is None else as_field_values(x0).astype(np.float64).copy()
    schedule = cfg.resolved_schedule()
    trace = SeparationTrace()
    target = y
    for stage, alpha in enumerate(schedule.weights):
        phi_target = rep.eval(target)
        x = _stage_loop(x, phi_target, rep, noise, float(alpha), cfg, stage, trace,
                        noise.pixelwise_variance)
        trace.stage_fields.append(x.copy())
        if trace.aborted:
            break
        target = x
    return Field2D(x), trace


def vanilla_separate(y, noise, rep, cfg, x0=None):
    """Single-stage separation: T resampled-loss optimizer steps from the observation."""
    if cfg.loss_kind != "monte_carlo":
        raise ValueError("the single-stage driver uses the Monte Carlo loss")
    one_stage = replace(cfg, P=1, schedule=DiffusionSchedule(np.array([1.0])))
    return _separate(y, noise, rep, one_stage, x0=x0)


def diffusive_separate(y, noise, rep, cfg, x0=None):
    """Stepwise separation: each stage re-targets the loss on the current
    iterate and injects noise scaled by the stage weight."""
    return _separate(y, noise, rep, cfg, x0=x0)


def delouis_separate(y, noise, rep, cfg):
    """Stepwise separation with frozen bias and spread.

    Per stage, Q corrupted copies of the current iterate provide the mean m,
    the per-coefficient spread sigma and the bias B = m - phi(x); the stage
    then runs T deterministic optimizer steps on
    ||(phi(x) + B - phi(y)) / sigma||^2.
    """
    if cfg.Q < 2:
        raise ValueError("spread estimation needs Q >= 2")
    y = as_field_values(y).astype(np.float64)
    x = y.copy()
    phi_y = rep.eval(y)
    trace = SeparationTrace()
    for stage in range(cfg.P):
        eps = sample_batch(noise, cfg.Q, iteration_seed(cfg.seed, stage, 0))
        if hasattr(rep, "eval_batch"):
            phis = rep.eval_batch(x[None] + eps)
        else:
            phis = np.stack([rep.eval(x + eps[k]) for k in range(cfg.Q)])
        m = phis.mean(axis=0)
        sigma = np.sqrt(np.mean(np.abs(phis - m[None]) ** 2, axis=0))
        if np.any(sigma < SIGMA_FLOOR):
            warnings.warn("zero spread component clamped", RuntimeWarning, stacklevel=2)
            sigma = np.maximum(sigma, SIGMA_FLOOR)
        bias = m - rep.eval(x)
        state = LbfgsState(options=cfg.optimizer)

        def value_and_grad(xt):
            v = (rep.eval(xt) + bias - phi_y) / sigma
            val = float(np.sum(np.abs(v) ** 2))
            return val, rep.gradient_adjoint(xt, (v / sigma).astype(np.complex128))

        def value_only(xt):
            v = (rep.eval(xt) + bias - phi_y) / sigma
            return float(np.sum(np.abs(v) ** 2))

        last_finite = x.copy()
        for it in range(cfg.T):
            t0 = time.perf_counter()
            value, grad = value_and_grad(x)
            if not (np.isfinite(value) and np.all(np.isfinite(grad))):
                trace.aborted = True
                trace.abort_reason = f"non-finite loss at stage {stage}, iteration {it}"
                x = last_finite
                break
            last_finite = x.copy()
            x, info = _step_with_fallback(state, x, value, grad, value_only)
            trace.log(stage, it, value, np.linalg.norm(grad), (time.perf_counter() - t0) * 1e3)
        trace.stage_fields.append(x.copy())
        if trace.aborted:
            break
    return Field2D(x), trace
