"""Belief-state machinery: Kalman gain, Joseph-form and square-root propagation.

The belief always carries the *predicted* (prior) covariance, held as an
upper-triangular factor P^r with P = P^r.T P^r. One propagation step
fuses the measurement and time update, so the factor chain the optimal
control problems predict coincides exactly with what the closed loop
produces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import DimensionMismatch
from .plant import SystemParams


@dataclass(frozen=True)
class BeliefState:
    """Estimate mean and upper-triangular covariance factor at cast t."""

    x_hat: np.ndarray
    p_sqrt: np.ndarray
    t: int = 0

    def __post_init__(self):
        x = np.asarray(self.x_hat, dtype=float).copy()
        f = np.asarray(self.p_sqrt, dtype=float).copy()
        if f.shape != (x.size, x.size):
            raise DimensionMismatch(
                f"factor shape {f.shape} does not match estimate length {x.size}"
            )
        x.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "x_hat", x)
        object.__setattr__(self, "p_sqrt", f)
        object.__setattr__(self, "t", int(self.t))

    @property
    def covariance(self) -> np.ndarray:
        return self.p_sqrt.T @ self.p_sqrt


@dataclass(frozen=True)
class KalmanGain:
    """Gain vector and the innovation variance it was built from."""

    k: np.ndarray
    innovation_variance: float


def kalman_gain(p, u, r: float) -> KalmanGain:
    """k = P u / (u' P u + R); the denominator is returned alongside."""
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    pu = p @ u
    s = float(u @ pu) + float(r)
    return KalmanGain(k=pu / s, innovation_variance=s)


def propagate_joseph(p, u, q, r: float) -> np.ndarray:
    """Full-covariance propagation in Joseph form.

    (I - K u') P (I - K u')' + K R K' + Q with K the Kalman gain. Kept
    as the plain-algebra reference the square-root path is tested
    against; the closed loop itself never calls it.
    """
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    q = np.asarray(q, dtype=float)
    k = kalman_gain(p, u, r).k
    iku = np.eye(p.shape[0]) - np.outer(k, u)
    return iku @ p @ iku.T + np.outer(k, k) * float(r) + q


class SqrtPropagation(NamedTuple):
    factor: np.ndarray
    innovation_std: float


def propagate_sqrt(p_sqrt, u, q_sqrt, r_sqrt: float) -> SqrtPropagation:
    """Square-root covariance propagation through one QR factorization.

    Stacks [[R^r, 0], [P^r u, P^r], [0, Q^r]], forms its triangular
    factor and reads off the next covariance factor (trailing block) and
    the innovation standard deviation (leading entry). Valid for any
    input factor, including perturbed solver iterates: the result is a
    factor by construction.
    """
    factor, s_r = _kernels.propagate_sqrt(
        np.asarray(p_sqrt, dtype=float),
        np.asarray(u, dtype=float),
        np.asarray(q_sqrt, dtype=float),
        float(r_sqrt),
    )
    return SqrtPropagation(factor=factor, innovation_std=s_r)


def measurement_update(
    belief: BeliefState, u, y: float, params: SystemParams
) -> BeliefState:
    """Fuse the measured output and advance the belief one cast.

    The mean moves by the Kalman gain times the innovation; the factor
    advances through :func:`propagate_sqrt`, so the stored covariance is
    the prior for the next cast, exactly matching the optimal control
    problems' stage-1 prediction.
    """
    u = np.asarray(u, dtype=float)
    z = belief.p_sqrt @ u
    s = float(z @ z) + params.r
    gain = belief.p_sqrt.T @ z / s
    innovation = float(y) - float(u @ belief.x_hat)
    x_next = belief.x_hat + gain * innovation
    factor, _ = propagate_sqrt(belief.p_sqrt, u, params.q_sqrt, params.r_sqrt)
    return BeliefState(x_hat=x_next, p_sqrt=factor, t=belief.t + 1)
