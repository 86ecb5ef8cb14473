"""Closed-form Eulerian velocity field for finite-support targets.

For a standard normal prior, latent noise Z ~ N(0, I), and a target
supported on atoms {y_i} with weights {pi_i}, the conditional law of the
endpoint given X_t = x is a softmax over Gaussian log-likelihoods:

    w_i(t, x) ~ pi_i exp(-|x - beta y_i|^2 / (2 sigma^2)),
    sigma^2(t) = alpha^2(t) + gamma^2(t).

With posterior mean m = sum_i w_i y_i and covariance
Cov = sum_i w_i y_i y_i^T - m m^T, the induced velocity and its spatial
Jacobian are

    v(t, x)  = A (x - beta m) + beta' m,
    Dv(t, x) = A I + (beta' - A beta) (beta / sigma^2) Cov,

with A(t) = (alpha alpha' + gamma gamma') / sigma^2. Dv is symmetric, so
the strain tensor equals Dv itself and the divergence is its trace.

Everything here is restricted to the plane and the N(0, I) prior; the
only sampling-based path is the Monte Carlo cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import DiscreteTarget
from .errors import DomainError, InsufficientSamplesError, SingularTimeError
from .schedule import EPS_T, Schedule, eval_schedule, eval_schedule_derivative

# atoms farther out than this switch the covariance to the centered
# accumulation, which avoids cancellation in sum(w y y^T) - m m^T
_CENTERED_COV_NORM = 10.0


@dataclass(frozen=True)
class ScheduleScalars:
    sigma2: float
    a_coef: float
    beta: float
    dbeta: float


@dataclass(frozen=True)
class FieldEvaluation:
    velocity: np.ndarray        # (2,)
    jacobian: np.ndarray        # (2, 2)
    divergence: float
    posterior_mean: np.ndarray  # (2,)
    posterior_cov: np.ndarray   # (2, 2)
    lse_shift: float


@dataclass(frozen=True)
class BatchFieldEvaluation:
    """evaluate_field over a batch of points at one time."""

    velocity: np.ndarray        # (P, 2)
    jacobian: np.ndarray        # (P, 2, 2)
    divergence: np.ndarray      # (P,)
    posterior_mean: np.ndarray  # (P, 2)
    posterior_cov: np.ndarray   # (P, 2, 2)
    lse_shift: np.ndarray       # (P,)


@dataclass(frozen=True)
class MonteCarloVelocity:
    velocity: np.ndarray  # (2,)
    stderr: np.ndarray    # (2,)
    hits: int


def schedule_scalars(s: Schedule, t: float) -> ScheduleScalars:
    """sigma^2, A, beta, beta' at time t, inside the interior clamp."""
    tf = float(t)
    if not EPS_T <= tf <= 1.0 - EPS_T:
        raise SingularTimeError(
            f"field evaluation needs t in [{EPS_T}, {1 - EPS_T}], got {t}")
    c = eval_schedule(s, tf)
    d = eval_schedule_derivative(s, tf)
    sigma2 = c.alpha ** 2 + c.gamma ** 2
    if sigma2 <= 0:
        raise SingularTimeError(f"sigma^2(t) = {sigma2} at t = {t}")
    a_coef = (c.alpha * d.dalpha + c.gamma * d.dgamma) / sigma2
    return ScheduleScalars(sigma2=sigma2, a_coef=a_coef, beta=c.beta,
                           dbeta=d.dbeta)


def _log_weights(target: DiscreteTarget, sc: ScheduleScalars,
                 points: np.ndarray):
    """Softmax weights for a (P, 2) batch; returns (w, shift), both per row."""
    diff = points[:, None, :] - sc.beta * target.atoms[None, :, :]
    logits = np.log(target.priors)[None, :] - \
        (diff * diff).sum(axis=2) / (2.0 * sc.sigma2)
    shift = logits.max(axis=1)
    w = np.exp(logits - shift[:, None])
    w /= w.sum(axis=1, keepdims=True)
    return w, shift


def posterior_weights(target: DiscreteTarget, sc: ScheduleScalars,
                      x) -> np.ndarray:
    """Atom responsibilities w_i(t, x) as a simplex vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (2,) or not np.all(np.isfinite(x)):
        raise DomainError(f"probe point must be a finite 2-vector, got {x!r}")
    w, _ = _log_weights(target, sc, x[None, :])
    return w[0]


def _moments(target: DiscreteTarget, w: np.ndarray):
    """Posterior mean and covariance for a (P, N) weight batch."""
    atoms = target.atoms
    m = w @ atoms
    if np.max(np.abs(atoms)) > _CENTERED_COV_NORM:
        d = atoms[None, :, :] - m[:, None, :]
        cov = np.einsum("pn,pni,pnj->pij", w, d, d)
    else:
        eyy = np.einsum("pn,ni,nj->pij", w, atoms, atoms)
        cov = eyy - m[:, :, None] * m[:, None, :]
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    return m, cov


def posterior_moments(target: DiscreteTarget, weights):
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(target),):
        raise DomainError("weights length must match atom count")
    m, cov = _moments(target, w[None, :])
    return m[0], cov[0]


def evaluate_field_batch(target: DiscreteTarget, s: Schedule, t: float,
                         points) -> BatchFieldEvaluation:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DomainError(f"points must be (P, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise DomainError("points contain non-finite coordinates")
    sc = schedule_scalars(s, t)
    w, shift = _log_weights(target, sc, pts)
    m, cov = _moments(target, w)
    vel = sc.a_coef * (pts - sc.beta * m) + sc.dbeta * m
    q = (sc.dbeta - sc.a_coef * sc.beta) * (sc.beta / sc.sigma2)
    jac = q * cov
    jac[:, 0, 0] += sc.a_coef
    jac[:, 1, 1] += sc.a_coef
    div = jac[:, 0, 0] + jac[:, 1, 1]
    return BatchFieldEvaluation(velocity=vel, jacobian=jac, divergence=div,
                                posterior_mean=m, posterior_cov=cov,
                                lse_shift=shift)


def evaluate_field(target: DiscreteTarget, s: Schedule, t: float,
                   x) -> FieldEvaluation:
    """Velocity, Jacobian, divergence, and posterior moments at (t, x)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise DomainError(f"x must be a 2-vector, got shape {x.shape}")
    b = evaluate_field_batch(target, s, t, x[None, :])
    return FieldEvaluation(
        velocity=b.velocity[0], jacobian=b.jacobian[0],
        divergence=float(b.divergence[0]), posterior_mean=b.posterior_mean[0],
        posterior_cov=b.posterior_cov[0], lse_shift=float(b.lse_shift[0]))


def flow_evaluator(target: DiscreteTarget, s: Schedule):
    """Callable (t, points) -> (velocity, jacobian) for trajectory work."""

    def ev(t, points):
        b = evaluate_field_batch(target, s, t, points)
        return b.velocity, b.jacobian

    return ev


def monte_carlo_velocity_detail(target: DiscreteTarget, s: Schedule, t: float,
                                x, bin_radius: float, n_samples: int,
                                seed) -> MonteCarloVelocity:
    """Conditional-average estimate of v(t, x) from simulated pairs.

    Draws (X0, X1, Z), forms X_t = alpha X0 + beta X1 + gamma Z and the
    pathwise velocity alpha' X0 + beta' X1 + gamma' Z, then averages the
    pathwise velocity over samples with |X_t - x| <= bin_radius. This is
    a cross-check for the closed form, not a production path.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    if bin_radius <= 0:
        raise DomainError("bin_radius must be positive")
    x = np.asarray(x, dtype=float)
    c = eval_schedule(s, float(t))
    d = eval_schedule_derivative(s, float(t))
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((n_samples, 2))
    idx = rng.choice(len(target), size=n_samples, p=target.priors)
    z = rng.standard_normal((n_samples, 2))
    x1 = target.atoms[idx]
    xt = c.alpha * x0 + c.beta * x1 + c.gamma * z
    mask = np.linalg.norm(xt - x[None, :], axis=1) <= bin_radius
    hits = int(mask.sum())
    if hits == 0:
        raise InsufficientSamplesError(
            f"no samples within radius {bin_radius} of {x} at t={t}", hits)
    dxt = d.dalpha * x0[mask] + d.dbeta * x1[mask] + d.dgamma * z[mask]
    vel = dxt.mean(axis=0)
    if hits > 1:
        stderr = dxt.std(axis=0, ddof=1) / np.sqrt(hits)
    else:
        stderr = np.full(2, np.inf)
    return MonteCarloVelocity(velocity=vel, stderr=stderr, hits=hits)


def monte_carlo_velocity(target, s, t, x, bin_radius, n_samples, seed):
    return monte_carlo_velocity_detail(
        target, s, t, x, bin_radius, n_samples, seed).velocity
