"""Ground-truth plant: copper-fraction random walk and noisy mix measurement.

Also hosts ``SystemParams``, the single record of plant, estimator,
constraint and horizon parameters shared by every other module. Copper
contents are dimensionless mass fractions everywhere; conversion to
percent by weight happens only in the reporting layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, ValidationError
from .linalg import cholesky_upper, psd_upper_factor


def _frozen_vector(v, n: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValidationError(f"{name} must have length {n}, got shape {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SystemParams:
    """All plant, estimator, constraint and horizon parameters of one scenario.

    Attributes:
        x0_true: True copper fraction per heap (length n_x).
        p0: Initial estimate covariance, symmetric positive definite.
        q: State noise covariance, symmetric positive semidefinite.
        r: Output noise variance (scalar output).
        prices: Cost per unit mass per heap, nonnegative.
        y_max: Maximum copper fraction allowed in the product.
        gamma: Backoff coefficient of the chance constraint.
        u_min: Per-heap lower mass-fraction bounds (scalar broadcasts).
        u_max: Per-heap upper mass-fraction bounds (scalar broadcasts).
        horizon: Prediction horizon length N (the dual problems plan
            stages 0..N).
        n_casts: Number of closed-loop casts T.
        alpha: Exploration weight of the explicit dual cost, >= 0.
    """

    x0_true: np.ndarray
    p0: np.ndarray
    q: np.ndarray
    r: float
    prices: np.ndarray
    y_max: float
    gamma: float
    u_min: np.ndarray
    u_max: np.ndarray
    horizon: int
    n_casts: int
    alpha: float

    def __post_init__(self):
        x0 = np.asarray(self.x0_true, dtype=float)
        if x0.ndim != 1 or x0.size < 1:
            raise ValidationError("x0_true must be a nonempty vector")
        n = x0.size
        x0 = x0.copy()
        x0.setflags(write=False)
        object.__setattr__(self, "x0_true", x0)

        for name in ("p0", "q"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.shape != (n, n):
                raise ValidationError(f"{name} must be {n}x{n}, got shape {m.shape}")
            m = m.copy()
            m.setflags(write=False)
            object.__setattr__(self, name, m)

        object.__setattr__(self, "prices", _frozen_vector(self.prices, n, "prices"))
        object.__setattr__(self, "u_min", _frozen_vector(self.u_min, n, "u_min"))
        object.__setattr__(self, "u_max", _frozen_vector(self.u_max, n, "u_max"))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "y_max", float(self.y_max))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "n_casts", int(self.n_casts))
        self._validate()

    def _validate(self):
        try:
            cholesky_upper(self.p0)
        except Exception as exc:
            raise ValidationError(f"p0 must be symmetric positive definite: {exc}")
        try:
            psd_upper_factor(self.q, zero_tol=1e-14)
        except Exception as exc:
            raise ValidationError(f"q must be symmetric positive semidefinite: {exc}")
        if not self.r > 0.0:
            raise ValidationError("r must be positive")
        if np.any(self.u_min < 0.0) or np.any(self.u_min > self.u_max):
            raise ValidationError("bounds must satisfy 0 <= u_min <= u_max")
        if float(np.sum(self.u_min)) > 1.0 or float(np.sum(self.u_max)) < 1.0:
            raise ValidationError(
                "the simplex {u: sum(u)=1, u_min <= u <= u_max} is empty"
            )
        if np.any(self.prices < 0.0):
            raise ValidationError("prices must be nonnegative")
        if not self.y_max > 0.0:
            raise ValidationError("y_max must be positive")
        if self.horizon < 1:
            raise ValidationError("horizon N must be at least 1")
        if self.n_casts < 1:
            raise ValidationError("n_casts T must be at least 1")
        if self.alpha < 0.0:
            raise ValidationError("alpha must be nonnegative")

    @property
    def n_x(self) -> int:
        return self.x0_true.size

    @cached_property
    def p0_sqrt(self) -> np.ndarray:
        """Upper-triangular factor of the initial covariance."""
        f = cholesky_upper(self.p0)
        f.setflags(write=False)
        return f

    @cached_property
    def q_sqrt(self) -> np.ndarray:
        """Upper-triangular factor of the state noise covariance."""
        f = psd_upper_factor(self.q, zero_tol=1e-14)
        f.setflags(write=False)
        return f

    @property
    def r_sqrt(self) -> float:
        return float(np.sqrt(self.r))


def default_params(**overrides) -> SystemParams:
    """Baseline three-heap scenario; keyword arguments override fields."""
    base = dict(
        x0_true=np.array([0.07, 0.13, 0.17]),
        p0=np.diag([1e-4, 1e-3, 1e-3]),
        q=1e-7 * np.eye(3),
        r=2e-6,
        prices=np.array([2.0, 1.0, 1.0]),
        y_max=0.12,
        gamma=2.0,
        u_min=0.0,
        u_max=1.0,
        horizon=15,
        n_casts=20,
        alpha=100.0,
    )
    base.update(overrides)
    return SystemParams(**base)


@dataclass(frozen=True)
class PlantState:
    """True copper fraction per heap at cast index t."""

    x: np.ndarray
    t: int = 0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).copy()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", int(self.t))


def plant_step(state: PlantState, w) -> PlantState:
    """Advance one cast: the heaps drift by the state noise w."""
    w = np.asarray(w, dtype=float)
    if w.shape != state.x.shape:
        raise DimensionMismatch(
            f"noise shape {w.shape} does not match state shape {state.x.shape}"
        )
    return PlantState(x=state.x + w, t=state.t + 1)


def measure(state: PlantState, u, v: float) -> float:
    """Measured copper fraction of the melted mix: u.x + v."""
    u = np.asarray(u, dtype=float)
    if u.shape != state.x.shape:
        raise DimensionMismatch(
            f"control shape {u.shape} does not match state shape {state.x.shape}"
        )
    return float(u @ state.x + v)
