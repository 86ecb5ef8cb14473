"""Trajectory and variational-matrix integration along the induced flow.

The reference path and its linearization are integrated jointly with
classical fixed-step RK4:

    dx/dt = v(t, x),        x(t0) = x0,
    dJ/dt = Dv(t, x) J,     J(t0) = I,

where the Jacobian stages are evaluated at the corresponding position
stages. At every grid node the record keeps the strain tensor spectrum
(here Dv is symmetric, so S = Dv), the divergence, and det J.

The second-order form J'' + M J = 0 with

    M(t) = -( d/dt Dv(t, x(t)) + Dv^2 )

is realized after the fact: the total derivative of Dv along the flow is
a single central-difference stencil over neighboring grid nodes, because
the stencil follows the moving particle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, DomainError
from .schedule import EPS_T


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not (EPS_T <= self.t_start < self.t_end <= 1.0 - EPS_T):
            raise DomainError(
                f"grid must satisfy {EPS_T} <= start < end <= {1 - EPS_T}, "
                f"got [{self.t_start}, {self.t_end}]")
        if self.n_steps < 2:
            raise DomainError("grid needs at least 2 steps")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    def nodes(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class TrajectoryRecord:
    times: np.ndarray           # (T,)
    positions: np.ndarray       # (T, 2)
    variational: np.ndarray     # (T, 2, 2)  J_t
    strain_eigs: np.ndarray     # (T, 2)  columns (lambda_max, lambda_min)
    divergence: np.ndarray      # (T,)
    velocity_norms: np.ndarray  # (T,)
    jacobians: np.ndarray       # (T, 2, 2)  field Jacobian Dv at the nodes


@dataclass(frozen=True)
class CurvatureSample:
    time: float
    m_matrix: np.ndarray  # (2, 2)
    residual_norm: float


@dataclass(frozen=True)
class EnsembleResult:
    """Vectorized integration output; axis 0 is time, axis 1 particles."""

    times: np.ndarray
    positions: np.ndarray       # (T, P, 2)
    variational: np.ndarray     # (T, P, 2, 2)
    jacobians: np.ndarray       # (T, P, 2, 2)
    strain_max: np.ndarray      # (T, P)
    strain_min: np.ndarray      # (T, P)
    divergence: np.ndarray      # (T, P)
    velocity_norms: np.ndarray  # (T, P)

    def record(self, p: int) -> TrajectoryRecord:
        return TrajectoryRecord(
            times=self.times,
            positions=self.positions[:, p],
            variational=self.variational[:, p],
            strain_eigs=np.stack([self.strain_max[:, p],
                                  self.strain_min[:, p]], axis=1),
            divergence=self.divergence[:, p],
            velocity_norms=self.velocity_norms[:, p],
            jacobians=self.jacobians[:, p],
        )

    def records(self):
        return [self.record(p) for p in range(self.positions.shape[1])]


def symmetric_eigs_batch(mats: np.ndarray):
    """Eigenvalues of symmetrized 2x2 matrices via the closed form."""
    s = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    mean = 0.5 * (s[..., 0, 0] + s[..., 1, 1])
    root = np.sqrt((0.5 * (s[..., 0, 0] - s[..., 1, 1])) ** 2
                   + s[..., 0, 1] ** 2)
    return mean + root, mean - root


def strain_and_spectrum(jac):
    """Strain tensor of a 2x2 Jacobian with spectrum and major direction.

    S = (jac + jac^T)/2; eigenvalues are mean +- sqrt(((s11-s22)/2)^2 +
    s12^2); the principal direction is the unit eigenvector of
    lambda_max with non-negative first component (ties resolved toward
    non-negative second component).
    """
    jac = np.asarray(jac, dtype=float)
    if jac.shape != (2, 2) or not np.all(np.isfinite(jac)):
        raise DomainError("jacobian must be a finite 2x2 matrix")
    s = 0.5 * (jac + jac.T)
    lmax, lmin = symmetric_eigs_batch(s)
    lmax, lmin = float(lmax), float(lmin)
    a, b, dd = s[0, 0], s[0, 1], s[1, 1]
    v = np.array([b, lmax - a])
    if np.linalg.norm(v) < 1e-14:
        v = np.array([lmax - dd, b])
    if np.linalg.norm(v) < 1e-14:
        v = np.array([1.0, 0.0])
    v = v / np.linalg.norm(v)
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = -v
    return s, lmax, lmin, v


def quadratic_growth_rate(strain, direction) -> float:
    """Rayleigh quotient e^T S e for a unit direction e."""
    s = np.asarray(strain, dtype=float)
    e = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(e) - 1.0) > 1e-10:
        raise DomainError("direction must be a unit vector")
    return float(e @ s @ e)


def integrate_ensemble(points, evaluator, grid: TimeGrid) -> EnsembleResult:
    """Joint RK4 for all particles at once.

    ``evaluator`` maps (t, X) with X of shape (P, 2) to a pair
    (velocity (P, 2), jacobian (P, 2, 2)).
    """
    x = np.array(points, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise DomainError(f"points must be (P, 2), got {x.shape}")
    n_p = x.shape[0]
    n_t = grid.n_steps + 1
    times = grid.nodes()
    dt = grid.dt

    pos = np.empty((n_t, n_p, 2))
    var = np.empty((n_t, n_p, 2, 2))
    jacs = np.empty((n_t, n_p, 2, 2))
    div = np.empty((n_t, n_p))
    vnorm = np.empty((n_t, n_p))

    def stage(tt, xx):
        if not np.all(np.isfinite(xx)):
            raise BlowUpError(
                f"integration produced non-finite state at t={tt}", tt)
        return evaluator(tt, xx)

    j = np.broadcast_to(np.eye(2), (n_p, 2, 2)).copy()
    for k, t in enumerate(times):
        v1, g1 = evaluator(t, x)
        pos[k] = x
        var[k] = j
        jacs[k] = g1
        div[k] = g1[:, 0, 0] + g1[:, 1, 1]
        vnorm[k] = np.hypot(v1[:, 0], v1[:, 1])
        if k == grid.n_steps:
            break
        h = dt
        with np.errstate(over="ignore", invalid="ignore"):
            k1x = v1
            k1j = g1 @ j
            v2, g2 = stage(t + 0.5 * h, x + 0.5 * h * k1x)
            k2j = g2 @ (j + 0.5 * h * k1j)
            v3, g3 = stage(t + 0.5 * h, x + 0.5 * h * v2)
            k3j = g3 @ (j + 0.5 * h * k2j)
            v4, g4 = stage(t + h, x + h * v3)
            k4j = g4 @ (j + h * k3j)
            x = x + (h / 6.0) * (k1x + 2.0 * v2 + 2.0 * v3 + v4)
            j = j + (h / 6.0) * (k1j + 2.0 * k2j + 2.0 * k3j + k4j)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(j))):
            raise BlowUpError(
                f"integration produced non-finite state at t={times[k + 1]}",
                times[k + 1])

    smax, smin = symmetric_eigs_batch(jacs)
    return EnsembleResult(times=times, positions=pos, variational=var,
                          jacobians=jacs, strain_max=smax, strain_min=smin,
                          divergence=div, velocity_norms=vnorm)


def integrate_trajectory(x0, evaluator, grid: TimeGrid) -> TrajectoryRecord:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (2,):
        raise DomainError(f"x0 must be a 2-vector, got shape {x0.shape}")
    return integrate_ensemble(x0[None, :], evaluator, grid).record(0)


def curvature_operator(evaluator, record: TrajectoryRecord,
                       idx: int) -> CurvatureSample:
    """M(t) and the Jacobi residual |J'' + M J|_F at an interior node.

    d/dt Dv along the trajectory comes from central differences of Dv at
    the neighboring nodes (the stencil rides the flow, so it captures
    the advective part too); J'' from central differences of the
    recorded variational matrices.
    """
    n = len(record.times)
    if not 1 <= idx <= n - 2:
        raise DomainError(f"curvature needs an interior node, got {idx}")
    dt = record.times[1] - record.times[0]
    g = []
    for k in (idx - 1, idx, idx + 1):
        _, gk = evaluator(record.times[k], record.positions[k][None, :])
        g.append(gk[0])
    dgdt = (g[2] - g[0]) / (2.0 * dt)
    m = -(dgdt + g[1] @ g[1])
    jdd = (record.variational[idx + 1] - 2.0 * record.variational[idx]
           + record.variational[idx - 1]) / dt ** 2
    residual = np.linalg.norm(jdd + m @ record.variational[idx])
    return CurvatureSample(time=float(record.times[idx]), m_matrix=m,
                           residual_norm=float(residual))


def linear_field(b_matrix):
    """Synthetic evaluator for v = B x; used by the analytic oracles."""
    b = np.asarray(b_matrix, dtype=float)

    def ev(t, points):
        pts = np.asarray(points, dtype=float)
        vel = pts @ b.T
        jac = np.broadcast_to(b, (pts.shape[0], 2, 2)).copy()
        return vel, jac

    return ev


def zero_field():
    return linear_field(np.zeros((2, 2)))
