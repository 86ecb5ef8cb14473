"""Learning the coefficient functions with a small feed-forward network.

A width-(1, 64, 64, 3) network maps t to a raw head (a, b, c). Hidden
units use the steep sigmoid 1 / (1 + exp(-z / tau)) with temperature
tau, a smooth stand-in for a hard step activation (an exact step has a
useless gradient). The head is reparameterized so the boundary
constraints hold identically:

    alpha(t) = (1 - t) (1 + t a)
    beta(t)  = t (1 + (1 - t) b)
    gamma(t) = t (1 - t) (softplus(c) + 1e-3)

A soft mode skips the reparameterization (the head is the coefficient
triple, gamma still through softplus for positivity) and relies on the
boundary penalty instead.

Training minimizes lambda_bound * L_bound + lambda_energy * L_energy,
where L_energy is the mean squared pathwise velocity

    v = alpha' X0 + beta' X1 + gamma' Z

with coefficient derivatives from a central-difference stencil of the
network, and the optimizer is AdamW with decoupled weight decay.
Gradients are reverse-mode by hand; no autograd framework is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, TrainingDivergenceError
from .schedule import (
    DEFAULT_DERIVATIVE_STEP,
    CoefficientTriple,
    Schedule,
    boundary_residual,
)

GAMMA_FLOOR = 1e-3
DEFAULT_WIDTHS = (1, 64, 64, 3)
DEFAULT_TAU = 0.1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class PathNetParams:
    widths: tuple
    tau: float
    weights: list  # per layer, shape (out, in)
    biases: list   # per layer, shape (out,)

    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "PathNetParams":
        return PathNetParams(self.widths, self.tau,
                             [w.copy() for w in self.weights],
                             [b.copy() for b in self.biases])


@dataclass(frozen=True)
class TrainConfig:
    lambda_bound: float = 10.0
    lambda_energy: float = 1.0
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 256
    n_steps: int = 2000
    delta_t: float = 1e-3
    n_time_samples: Optional[int] = None  # defaults to batch_size
    seed: int = 0
    mode: str = "hard"
    widths: tuple = DEFAULT_WIDTHS
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be positive")
        if not 0.0 < self.delta_t < 0.5:
            raise DomainError("delta_t must lie in (0, 0.5)")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if self.lambda_bound < 0 or self.lambda_energy < 0:
            raise DomainError("loss weights must be non-negative")
        if self.mode not in ("hard", "soft"):
            raise DomainError(f"mode must be 'hard' or 'soft', got {self.mode}")

    @property
    def samples_per_step(self) -> int:
        return self.n_time_samples or self.batch_size


@dataclass(frozen=True)
class TrainTrace:
    step: np.ndarray
    total: np.ndarray
    bound: np.ndarray
    energy: np.ndarray
    grad_norm: np.ndarray


@dataclass(frozen=True)
class TrainResult:
    schedule: Schedule
    trace: TrainTrace
    checkpoint: dict


def init_pathnet(seed, widths=DEFAULT_WIDTHS, tau: float = DEFAULT_TAU) -> PathNetParams:
    """Symmetric-uniform weights scaled by 1/sqrt(fan_in); zero biases."""
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2 or widths[0] != 1 or widths[-1] != 3:
        raise DomainError(f"widths must run from 1 to 3, got {widths}")
    if tau <= 0:
        raise DomainError("tau must be positive")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return PathNetParams(widths=widths, tau=float(tau), weights=weights,
                         biases=biases)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward_cache(params: PathNetParams, t):
    """Raw head (B, 3) plus per-layer caches for the backward pass."""
    h = np.asarray(t, dtype=float).reshape(-1, 1)
    caches = []
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        if l < last:
            s = _sigmoid(z / params.tau)
            caches.append((h, s))
            h = s
        else:
            caches.append((h, None))
            h = z
    return h, caches


def _backward(params: PathNetParams, caches, d_out, grads_w, grads_b,
              scale: float = 1.0):
    """Accumulate scale * dL/dtheta given dL/d(raw head)."""
    d = d_out * scale
    for l in reversed(range(len(params.weights))):
        h_in, _ = caches[l]
        grads_w[l] += d.T @ h_in
        grads_b[l] += d.sum(axis=0)
        if l > 0:
            d = d @ params.weights[l]
            s_prev = caches[l - 1][1]
            d = d * (s_prev * (1.0 - s_prev) / params.tau)


def _reparam(t, raw, mode: str):
    """Map the raw head to coefficients; also d(coef)/d(raw) per sample."""
    t = np.asarray(t, dtype=float).reshape(-1)
    a, b, c = raw[:, 0], raw[:, 1], raw[:, 2]
    sp = np.logaddexp(0.0, c) + GAMMA_FLOOR
    sig_c = _sigmoid(c)
    if mode == "hard":
        tt = t * (1.0 - t)
        coef = np.stack([(1.0 - t) * (1.0 + t * a),
                         t * (1.0 + (1.0 - t) * b),
                         tt * sp], axis=1)
        jac = np.stack([tt, tt, tt * sig_c], axis=1)
    else:
        coef = np.stack([a, b, sp], axis=1)
        jac = np.stack([np.ones_like(a), np.ones_like(b), sig_c], axis=1)
    return coef, jac


def forward_batch(params: PathNetParams, t, mode: str = "hard") -> np.ndarray:
    raw, _ = _forward_cache(params, t)
    coef, _ = _reparam(t, raw, mode)
    return coef


def forward(params: PathNetParams, t: float, mode: str = "hard") -> CoefficientTriple:
    """Coefficient triple at a single time in [0, 1]."""
    tf = float(t)
    if not 0.0 <= tf <= 1.0:
        raise DomainError(f"time must lie in [0, 1], got {t}")
    coef = forward_batch(params, np.array([tf]), mode)[0]
    return CoefficientTriple(float(coef[0]), float(coef[1]), float(coef[2]))


def pathwise_velocity_batch(params: PathNetParams, x0, x1, z, t,
                            delta_t: float, mode: str = "hard") -> np.ndarray:
    """Stencil velocities alpha' x0 + beta' x1 + gamma' z per sample."""
    x0, x1, z = (np.asarray(v, dtype=float) for v in (x0, x1, z))
    t = np.asarray(t, dtype=float).reshape(-1)
    if not (x0.shape == x1.shape == z.shape == (t.shape[0], 2)):
        raise DomainError("batch arrays must share the shape (B, 2)")
    t = np.clip(t, delta_t, 1.0 - delta_t)
    coef_p = forward_batch(params, t + delta_t, mode)
    coef_m = forward_batch(params, t - delta_t, mode)
    dcoef = (coef_p - coef_m) / (2.0 * delta_t)
    return dcoef[:, 0:1] * x0 + dcoef[:, 1:2] * x1 + dcoef[:, 2:3] * z


def losses(params: PathNetParams, batch, config: TrainConfig):
    """(total, bound, energy) on a batch (x0, x1, z, t)."""
    total, bound, energy, _, _ = loss_and_grads(params, batch, config)
    return total, bound, energy


def loss_and_grads(params: PathNetParams, batch, config: TrainConfig):
    """Loss terms plus reverse-mode gradients.

    Returns (total, bound, energy, (grads_w, grads_b), grad_norm). The
    gradient flows through the three coefficient evaluations feeding the
    stencil; in soft mode the boundary term contributes through two more
    head evaluations at t = 0 and t = 1.
    """
    x0, x1, z, t = (np.asarray(v, dtype=float) for v in batch)
    t = np.clip(t.reshape(-1), config.delta_t, 1.0 - config.delta_t)
    n = t.shape[0]
    if not (x0.shape == x1.shape == z.shape == (n, 2)):
        raise DomainError("batch arrays must share the shape (B, 2)")

    # runaway parameters overflow here before the caller's finite check
    # can flag the step; the check is the error path, not the warning
    with np.errstate(over="ignore", invalid="ignore"):
        return _loss_and_grads_core(params, (x0, x1, z, t), config)


def _loss_and_grads_core(params: PathNetParams, batch, config: TrainConfig):
    x0, x1, z, t = batch
    n = t.shape[0]
    grads_w = [np.zeros_like(w) for w in params.weights]
    grads_b = [np.zeros_like(b) for b in params.biases]

    tp, tm = t + config.delta_t, t - config.delta_t
    raw_p, cache_p = _forward_cache(params, tp)
    raw_m, cache_m = _forward_cache(params, tm)
    coef_p, jac_p = _reparam(tp, raw_p, config.mode)
    coef_m, jac_m = _reparam(tm, raw_m, config.mode)
    inv = 0.5 / config.delta_t
    dcoef = (coef_p - coef_m) * inv
    v = dcoef[:, 0:1] * x0 + dcoef[:, 1:2] * x1 + dcoef[:, 2:3] * z
    energy = float(np.mean(np.sum(v * v, axis=1)))

    dv = (2.0 / n) * v
    d_dcoef = np.stack([np.sum(dv * x0, axis=1),
                        np.sum(dv * x1, axis=1),
                        np.sum(dv * z, axis=1)], axis=1)
    scale = config.lambda_energy
    if scale > 0:
        _backward(params, cache_p, d_dcoef * inv * jac_p, grads_w, grads_b,
                  scale)
        _backward(params, cache_m, -d_dcoef * inv * jac_m, grads_w, grads_b,
                  scale)

    if config.mode == "hard":
        # the reparameterization pins the boundary values; the residual
        # is identically zero and contributes no gradient
        bound = 0.0
    else:
        t01 = np.array([0.0, 1.0])
        raw01, cache01 = _forward_cache(params, t01)
        coef01, jac01 = _reparam(t01, raw01, "soft")
        a0, b0, g0 = coef01[0]
        a1, b1, g1 = coef01[1]
        bound = float((a0 - 1.0) ** 2 + b0 ** 2 + a1 ** 2
                      + (b1 - 1.0) ** 2 + g0 ** 2 + g1 ** 2)
        d_coef01 = 2.0 * np.array([[a0 - 1.0, b0, g0],
                                   [a1, b1 - 1.0, g1]])
        if config.lambda_bound > 0:
            _backward(params, cache01, d_coef01 * jac01, grads_w, grads_b,
                      config.lambda_bound)

    total = config.lambda_bound * bound + config.lambda_energy * energy
    grad_norm = math.sqrt(sum(float(np.sum(g * g))
                              for g in grads_w + grads_b))
    return total, bound, energy, (grads_w, grads_b), grad_norm


def stencil_energy(coeff_fn: Callable, batch, delta_t: float) -> float:
    """Mean squared stencil velocity for an arbitrary coefficient map.

    Scores analytic baselines with exactly the same estimator used for
    the network.
    """
    x0, x1, z, t = (np.asarray(v, dtype=float) for v in batch)
    t = np.clip(t.reshape(-1), delta_t, 1.0 - delta_t)
    ap, bp, gp = coeff_fn(t + delta_t)
    am, bm, gm = coeff_fn(t - delta_t)
    inv = 0.5 / delta_t
    v = ((ap - am) * inv)[:, None] * x0 + ((bp - bm) * inv)[:, None] * x1 \
        + ((gp - gm) * inv)[:, None] * z
    return float(np.mean(np.sum(v * v, axis=1)))


def gaussian_prior_sampler() -> Callable:
    def sampler(rng, n):
        return rng.standard_normal((n, 2))

    return sampler


def atom_sampler(target) -> Callable:
    def sampler(rng, n):
        idx = rng.choice(len(target), size=n, p=target.priors)
        return target.atoms[idx]

    return sampler


def train(config: TrainConfig, prior_sampler: Callable,
          target_sampler: Callable) -> TrainResult:
    """AdamW over the stencil objective; returns the learned schedule.

    Per step a fresh batch (X0, X1, Z, t) is drawn, t uniform on
    [delta_t, 1 - delta_t]. A non-finite loss aborts with the failing
    step index.
    """
    params = init_pathnet(config.seed, config.widths, config.tau)
    rng = np.random.default_rng([config.seed, 1])
    m_w = [np.zeros_like(w) for w in params.weights]
    m_b = [np.zeros_like(b) for b in params.biases]
    v_w = [np.zeros_like(w) for w in params.weights]
    v_b = [np.zeros_like(b) for b in params.biases]

    n = config.samples_per_step
    cols = {k: np.empty(config.n_steps) for k in
            ("total", "bound", "energy", "grad_norm")}
    for step in range(config.n_steps):
        x0 = prior_sampler(rng, n)
        x1 = target_sampler(rng, n)
        z = rng.standard_normal((n, 2))
        t = rng.uniform(config.delta_t, 1.0 - config.delta_t, n)
        total, bound, energy, (g_w, g_b), gnorm = loss_and_grads(
            params, (x0, x1, z, t), config)
        if not math.isfinite(total):
            raise TrainingDivergenceError(
                f"non-finite loss at step {step}", step)
        cols["total"][step] = total
        cols["bound"][step] = bound
        cols["energy"][step] = energy
        cols["grad_norm"][step] = gnorm

        k = step + 1
        c1 = 1.0 - ADAM_BETA1 ** k
        c2 = 1.0 - ADAM_BETA2 ** k
        with np.errstate(over="ignore", invalid="ignore"):
            for th, g, m, v in ((params.weights, g_w, m_w, v_w),
                                (params.biases, g_b, m_b, v_b)):
                for i in range(len(th)):
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i]
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] ** 2
                    th[i] -= config.learning_rate * (
                        (m[i] / c1) / (np.sqrt(v[i] / c2) + ADAM_EPS))
                    th[i] -= config.learning_rate * config.weight_decay * th[i]

    trace = TrainTrace(step=np.arange(config.n_steps), total=cols["total"],
                       bound=cols["bound"], energy=cols["energy"],
                       grad_norm=cols["grad_norm"])
    checkpoint = {
        "params": params_to_block(params, config.mode),
        "optimizer": {
            "m_weights": [m.ravel().tolist() for m in m_w],
            "m_biases": [m.tolist() for m in m_b],
            "v_weights": [v.ravel().tolist() for v in v_w],
            "v_biases": [v.tolist() for v in v_b],
            "step": config.n_steps,
        },
        "step": config.n_steps,
    }
    return TrainResult(schedule=learned_schedule(params, config.mode),
                       trace=trace, checkpoint=checkpoint)


def learned_schedule(params: PathNetParams, mode: str = "hard",
                     derivative_step: float = DEFAULT_DERIVATIVE_STEP) -> Schedule:
    """Wrap trained parameters as a Schedule with stencil derivatives."""

    def coeffs(t):
        arr = np.asarray(t, dtype=float)
        coef = forward_batch(params, arr.reshape(-1), mode)
        a = coef[:, 0].reshape(arr.shape)
        b = coef[:, 1].reshape(arr.shape)
        g = coef[:, 2].reshape(arr.shape)
        return a, b, g

    return Schedule(kind="learned", coeffs=coeffs, exact_derivs=None,
                    params=params_to_block(params, mode),
                    derivative_step=derivative_step)


def params_to_block(params: PathNetParams, mode: str = "hard") -> dict:
    """Flat-array parameter block with layer-shape metadata."""
    return {
        "widths": list(params.widths),
        "tau": params.tau,
        "mode": mode,
        "shapes": [list(w.shape) for w in params.weights],
        "weights": np.concatenate(
            [w.ravel() for w in params.weights]).tolist(),
        "biases": np.concatenate(params.biases).tolist(),
    }


def params_from_block(block: dict) -> PathNetParams:
    widths = tuple(int(w) for w in block["widths"])
    shapes = [tuple(s) for s in block["shapes"]]
    flat_w = np.asarray(block["weights"], dtype=float)
    flat_b = np.asarray(block["biases"], dtype=float)
    weights, biases = [], []
    iw = ib = 0
    for (out, fan_in) in shapes:
        weights.append(flat_w[iw:iw + out * fan_in].reshape(out, fan_in))
        iw += out * fan_in
        biases.append(flat_b[ib:ib + out].copy())
        ib += out
    if iw != flat_w.size or ib != flat_b.size:
        raise DomainError("parameter block sizes disagree with shapes")
    return PathNetParams(widths=widths, tau=float(block["tau"]),
                         weights=weights, biases=biases)


def schedule_from_params(block: dict,
                         derivative_step: float = DEFAULT_DERIVATIVE_STEP) -> Schedule:
    params = params_from_block(block)
    return learned_schedule(params, block.get("mode", "hard"),
                            derivative_step=derivative_step)
