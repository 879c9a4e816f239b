"""Relaxed barrier function and soft-constraint penalty aggregation.

B(h) = -mu*ln(h) for h >= delta, and the C^2-matched quadratic extension
below delta:

    beta(h) = -mu*ln(delta) - (mu/delta)(h - delta) + (mu/(2 delta^2))(h - delta)^2

The quadratic's coefficients are the unique choice matching value, slope,
and curvature of the log branch at h = delta, giving a twice-differentiable
barrier with bounded curvature that is defined for all real h.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RbfParams:
    mu: float
    delta: float

    def __post_init__(self):
        if not (self.mu > 0.0 and self.delta > 0.0):
            raise ValueError("rbf parameters must be positive")


def rbf_eval(h: float, params: RbfParams):
    """Barrier value and first two derivatives at h."""
    mu, d = params.mu, params.delta
    if h >= d:
        return -mu * np.log(h), -mu / h, mu / (h * h)
    x = h - d
    v = -mu * np.log(d) - (mu / d) * x + (mu / (2.0 * d * d)) * x * x
    d1 = -(mu / d) + (mu / (d * d)) * x
    d2 = mu / (d * d)
    return v, d1, d2


def rbf_eval_batch(h: np.ndarray, params: RbfParams):
    """Vectorized barrier evaluation."""
    mu, d = params.mu, params.delta
    h = np.asarray(h, dtype=float)
    hi = h >= d
    hs = np.where(hi, h, 1.0)
    x = h - d
    v = np.where(hi, -mu * np.log(hs), -mu * np.log(d) - (mu / d) * x + (mu / (2 * d * d)) * x * x)
    d1 = np.where(hi, -mu / hs, -(mu / d) + (mu / (d * d)) * x)
    d2 = np.where(hi, mu / (hs * hs), mu / (d * d))
    return v, d1, d2


def penalty_sum(constraints, params):
    """Total penalty, gradient, and Gauss-Newton Hessian over the state.

    `constraints` is a list of objects with fields `h` (scalar) and `grad`
    (row vector over the state tangent); `params` is one RbfParams shared by
    all constraints or a list with one entry per constraint.

    The Hessian uses the Gauss-Newton form sum B''(h) grad^T grad, positive
    semi-definite since B'' > 0 everywhere.
    """
    if not constraints:
        return 0.0, np.zeros(0), np.zeros((0, 0))
    n = constraints[0].grad.shape[0]
    for c in constraints:
        if c.grad.shape != (n,):
            raise ValueError("constraint gradients disagree on state dimension")
    if isinstance(params, RbfParams):
        params = [params] * len(constraints)
    L = 0.0
    g = np.zeros(n)
    H = np.zeros((n, n))
    for c, p in zip(constraints, params):
        v, d1, d2 = rbf_eval(c.h, p)
        L += v
        g += d1 * c.grad
        H += d2 * np.outer(c.grad, c.grad)
    return L, g, H


def penalty_sum_arrays(h: np.ndarray, grad: np.ndarray, params: RbfParams):
    """Array form of penalty_sum for the solver hot path."""
    if h.size == 0:
        n = grad.shape[1] if grad.ndim == 2 else 0
        return 0.0, np.zeros(n), np.zeros((n, n))
    v, d1, d2 = rbf_eval_batch(h, params)
    L = float(v.sum())
    g = d1 @ grad
    H = (grad * d2[:, None]).T @ grad
    return L, g, H
