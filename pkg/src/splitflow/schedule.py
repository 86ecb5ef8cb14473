"""Interpolation coefficient schedules alpha(t), beta(t), gamma(t).

The interpolation ansatz

    X_t = alpha(t) X0 + beta(t) X1 + gamma(t) Z

requires boundary constraints

    alpha(0) = 1, alpha(1) = 0,
    beta(0)  = 0, beta(1)  = 1,
    gamma(0) = gamma(1) = 0,  gamma(t) > 0 on (0, 1).

The default analytic choice is

    alpha = 1 - t,  beta = t,  gamma = sqrt(t (1 - t)),

which gives sigma^2(t) = alpha^2 + gamma^2 = 1 - t, positive on [0, 1).
Learned schedules wrap a small network and differentiate by central
differences; analytic schedules carry exact derivatives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError

# Shared interior clamp for field evaluation: sigma^2 -> 0 at t = 1 makes
# posterior weights singular, so evaluation stays inside [EPS_T, 1 - EPS_T].
EPS_T = 1e-3

DEFAULT_DERIVATIVE_STEP = 1e-3


@dataclass(frozen=True)
class CoefficientTriple:
    alpha: float
    beta: float
    gamma: float


@dataclass(frozen=True)
class CoefficientDerivatives:
    dalpha: float
    dbeta: float
    dgamma: float
    exact: bool = False


@dataclass(frozen=True)
class Schedule:
    """Immutable coefficient schedule.

    ``coeffs`` maps a time (scalar or ndarray) to the triple
    ``(alpha, beta, gamma)``, each with the same shape as the input.
    ``exact_derivs`` is the analogous map for time derivatives, or None
    when only the central-difference route exists (learned schedules).
    ``params`` is a JSON-serializable description sufficient to rebuild
    the schedule.
    """

    kind: str
    coeffs: Callable
    exact_derivs: Optional[Callable]
    params: dict = field(default_factory=dict)
    derivative_step: float = DEFAULT_DERIVATIVE_STEP


def _default_coeffs(t):
    t = np.asarray(t, dtype=float)
    return 1.0 - t, t, np.sqrt(t * (1.0 - t))


def _default_derivs(t):
    t = np.asarray(t, dtype=float)
    g = np.sqrt(t * (1.0 - t))
    # gamma'(t) = (1 - 2t) / (2 gamma); finite only inside (0, 1)
    dg = (1.0 - 2.0 * t) / (2.0 * g)
    return -np.ones_like(t), np.ones_like(t), dg


def default_schedule(derivative_step: float = DEFAULT_DERIVATIVE_STEP) -> Schedule:
    """The analytic default: alpha = 1-t, beta = t, gamma = sqrt(t(1-t))."""
    return Schedule(
        kind="analytic-default",
        coeffs=_default_coeffs,
        exact_derivs=_default_derivs,
        params={},
        derivative_step=derivative_step,
    )


def linear_gamma_schedule(scale: float = 1.0) -> Schedule:
    """alpha = 1-t, beta = t, gamma = t(1-t) * scale.

    Used as the untrained baseline when scoring learned schedules; the
    gamma branch mirrors the zero-head network output shape.
    """
    if scale <= 0:
        raise DomainError(f"gamma scale must be positive, got {scale}")

    def coeffs(t):
        t = np.asarray(t, dtype=float)
        return 1.0 - t, t, t * (1.0 - t) * scale

    def derivs(t):
        t = np.asarray(t, dtype=float)
        return -np.ones_like(t), np.ones_like(t), (1.0 - 2.0 * t) * scale

    return Schedule(
        kind="analytic-custom",
        coeffs=coeffs,
        exact_derivs=derivs,
        params={"form": "linear-gamma", "scale": float(scale)},
    )


def constant_schedule(alpha: float, beta: float, gamma: float) -> Schedule:
    """Constant coefficients; violates the boundary constraints on purpose.

    Exists so that boundary_residual and derivative behavior can be
    exercised on degenerate inputs.
    """

    def coeffs(t):
        t = np.asarray(t, dtype=float)
        one = np.ones_like(t)
        return alpha * one, beta * one, gamma * one

    def derivs(t):
        t = np.asarray(t, dtype=float)
        z = np.zeros_like(t)
        return z, z.copy(), z.copy()

    return Schedule(
        kind="analytic-custom",
        coeffs=coeffs,
        exact_derivs=derivs,
        params={"form": "constant", "alpha": float(alpha), "beta": float(beta),
                "gamma": float(gamma)},
    )


def eval_schedule(s: Schedule, t: float) -> CoefficientTriple:
    """Evaluate (alpha(t), beta(t), gamma(t)) at a single time in [0, 1]."""
    tf = float(t)
    if not 0.0 <= tf <= 1.0 or not math.isfinite(tf):
        raise DomainError(f"schedule time must lie in [0, 1], got {t}")
    a, b, g = s.coeffs(tf)
    return CoefficientTriple(float(a), float(b), float(g))


def eval_schedule_derivative(s: Schedule, t: float, h: Optional[float] = None) -> CoefficientDerivatives:
    """Coefficient time derivatives at t.

    Analytic schedules return their exact derivatives when no explicit
    step is requested. Otherwise a central difference
    (f(t+h) - f(t-h)) / (2h) is used, which requires the stencil to stay
    inside [0, 1]: 0 < t < 1 and h <= min(t, 1-t).
    """
    tf = float(t)
    if h is None and s.exact_derivs is not None:
        da, db, dg = s.exact_derivs(tf)
        return CoefficientDerivatives(float(da), float(db), float(dg), exact=True)
    hf = float(h) if h is not None else s.derivative_step
    if not 0.0 < tf < 1.0:
        raise DomainError(f"central difference needs interior t, got {t}")
    if not 0.0 < hf <= min(tf, 1.0 - tf):
        raise DomainError(
            f"derivative step {hf} leaves [0, 1] around t={tf}")
    ap, bp, gp = s.coeffs(tf + hf)
    am, bm, gm = s.coeffs(tf - hf)
    inv = 0.5 / hf
    return CoefficientDerivatives(
        float((ap - am) * inv), float((bp - bm) * inv), float((gp - gm) * inv),
        exact=False)


def boundary_residual(s: Schedule) -> float:
    """Six-term boundary penalty

    L_bound = (alpha(0)-1)^2 + beta(0)^2 + alpha(1)^2
            + (beta(1)-1)^2 + gamma(0)^2 + gamma(1)^2
    """
    a0, b0, g0 = (float(v) for v in s.coeffs(0.0))
    a1, b1, g1 = (float(v) for v in s.coeffs(1.0))
    return ((a0 - 1.0) ** 2 + b0 ** 2 + a1 ** 2
            + (b1 - 1.0) ** 2 + g0 ** 2 + g1 ** 2)


def schedule_to_json(s: Schedule) -> str:
    """Serialize as the JSON object {kind, params, derivative_step}."""
    return json.dumps(
        {"kind": s.kind, "params": s.params,
         "derivative_step": s.derivative_step},
        sort_keys=True)


def schedule_from_json(text: str) -> Schedule:
    """Rebuild a schedule from its JSON form.

    Learned schedules are reconstructed through the pathnet module, which
    owns the parameter block layout.
    """
    obj = json.loads(text)
    kind = obj.get("kind")
    params = obj.get("params", {})
    step = float(obj.get("derivative_step", DEFAULT_DERIVATIVE_STEP))
    if kind == "analytic-default":
        return default_schedule(derivative_step=step)
    if kind == "analytic-custom":
        form = params.get("form")
        if form == "linear-gamma":
            base = linear_gamma_schedule(params["scale"])
        elif form == "constant":
            base = constant_schedule(params["alpha"], params["beta"],
                                     params["gamma"])
        else:
            raise DomainError(f"unknown analytic-custom form: {form!r}")
        return Schedule(kind=base.kind, coeffs=base.coeffs,
                        exact_derivs=base.exact_derivs, params=base.params,
                        derivative_step=step)
    if kind == "learned":
        from . import pathnet

        return pathnet.schedule_from_params(params, derivative_step=step)
    raise DomainError(f"unknown schedule kind: {kind!r}")
