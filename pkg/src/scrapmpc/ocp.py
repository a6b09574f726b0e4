"""Builders for the four optimal scrap-selection problems.

All four share one evaluation core: stage constraints
u_k' x_hat + gamma * ||P~_k^r u_k||_2 <= y_max with the factor chain
P~_{k+1}^r = psi_QR(P~_k^r, u_k), and objective
sum_k prices' u_k + alpha * ||P~_k^r||_F^2. The single-stage problems
fall out as special cases: the nominal one has gamma = 0 (no backoff),
the robust one gamma > 0; both have one stage and alpha = 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .belief import BeliefState
from .errors import DimensionMismatch, NonFinite
from .plant import SystemParams


class FormulationKind(enum.Enum):
    NOMINAL = "nominal"
    ROBUST = "robust"
    IMPLICIT_DUAL = "implicit-dual"
    EXPLICIT_DUAL = "explicit-dual"


DUAL_KINDS = (FormulationKind.IMPLICIT_DUAL, FormulationKind.EXPLICIT_DUAL)


@dataclass(frozen=True)
class ScrapSelectionProblem:
    """A smooth constrained program over stacked stage controls.

    Decision variable: u = (u_0, ..., u_{n_stages-1}), each stage on the
    simplex {sum u_k = 1, u_min <= u_k <= u_max}. Inequality constraints
    are the per-stage pollutant constraints; their values are returned by
    :func:`evaluate` in stage order.
    """

    kind: FormulationKind
    n_stages: int
    x_hat: np.ndarray
    p0_sqrt: np.ndarray
    q_sqrt: np.ndarray
    r_sqrt: float
    gamma: float
    y_max: float
    prices: np.ndarray
    alpha: float
    u_min: np.ndarray
    u_max: np.ndarray

    @property
    def n_x(self) -> int:
        return self.x_hat.size

    @property
    def dim(self) -> int:
        return self.n_stages * self.n_x

    def stacked_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.tile(self.u_min, self.n_stages)
        hi = np.tile(self.u_max, self.n_stages)
        return lo, hi


def build_nominal(belief: BeliefState, params: SystemParams) -> ScrapSelectionProblem:
    """Single-stage LP: cheapest mix whose estimated copper meets y_max."""
    return ScrapSelectionProblem(
        kind=FormulationKind.NOMINAL,
        n_stages=1,
        x_hat=belief.x_hat,
        p0_sqrt=belief.p_sqrt,
        q_sqrt=params.q_sqrt,
        r_sqrt=params.r_sqrt,
        gamma=0.0,
        y_max=params.y_max,
        prices=params.prices,
        alpha=0.0,
        u_min=params.u_min,
        u_max=params.u_max,
    )


def build_robust(belief: BeliefState, params: SystemParams) -> ScrapSelectionProblem:
    """Single-stage cone program: the pollutant budget shrinks by the backoff.

    The cone constraint is kept as the smooth scalar function
    u' x_hat + gamma * ||P^r u|| - y_max <= 0; with a positive definite
    covariance the norm argument cannot vanish on the simplex.
    """
    return ScrapSelectionProblem(
        kind=FormulationKind.ROBUST,
        n_stages=1,
        x_hat=belief.x_hat,
        p0_sqrt=belief.p_sqrt,
        q_sqrt=params.q_sqrt,
        r_sqrt=params.r_sqrt,
        gamma=params.gamma,
        y_max=params.y_max,
        prices=params.prices,
        alpha=0.0,
        u_min=params.u_min,
        u_max=params.u_max,
    )


def build_dual(
    belief: BeliefState,
    params: SystemParams,
    explicit_weight: float = 0.0,
    horizon: int | None = None,
) -> ScrapSelectionProblem:
    """(N+1)-stage dual problem; explicit_weight > 0 adds the uncertainty cost.

    The estimate mean is held constant across the horizon; only the
    covariance factor chain reacts to the planned controls. ``horizon``
    overrides params.horizon (N = 0 reduces the problem to the robust
    one and is allowed here for exactly that purpose).
    """
    n = params.horizon if horizon is None else int(horizon)
    if n < 0:
        raise DimensionMismatch(f"horizon must be >= 0, got {n}")
    if explicit_weight < 0.0:
        raise DimensionMismatch(f"explicit_weight must be >= 0, got {explicit_weight}")
    kind = (
        FormulationKind.EXPLICIT_DUAL
        if explicit_weight > 0.0
        else FormulationKind.IMPLICIT_DUAL
    )
    return ScrapSelectionProblem(
        kind=kind,
        n_stages=n + 1,
        x_hat=belief.x_hat,
        p0_sqrt=belief.p_sqrt,
        q_sqrt=params.q_sqrt,
        r_sqrt=params.r_sqrt,
        gamma=params.gamma,
        y_max=params.y_max,
        prices=params.prices,
        alpha=float(explicit_weight),
        u_min=params.u_min,
        u_max=params.u_max,
    )


class EvalResult(NamedTuple):
    objective: float
    constraints: np.ndarray
    gradient: np.ndarray | None
    jacobian: np.ndarray | None
    factors: np.ndarray
    backoffs: np.ndarray


def evaluate_full(
    problem: ScrapSelectionProblem, u, want_grad: bool = False
) -> EvalResult:
    """Evaluate objective, constraints, factor chain and optional gradients."""
    u = np.asarray(u, dtype=float)
    if u.size != problem.dim:
        raise DimensionMismatch(
            f"expected {problem.dim} decision variables, got {u.size}"
        )
    u2 = u.reshape(problem.n_stages, problem.n_x)
    f, g, grad, jac, factors, backoffs = _kernels.eval_problem(
        u2,
        problem.x_hat,
        problem.p0_sqrt,
        problem.q_sqrt,
        problem.r_sqrt,
        problem.gamma,
        problem.y_max,
        problem.prices,
        problem.alpha,
        want_grad,
    )
    return EvalResult(f, g, grad, jac, factors, backoffs)


def evaluate(problem: ScrapSelectionProblem, u) -> tuple[float, np.ndarray]:
    """Objective and inequality constraint values at stacked controls u.

    Evaluation is defined for any u in the bound box. The backoff norm is
    smooth at every point the solver visits (its argument stays away from
    zero on the simplex when the covariance is positive definite); should
    a caller evaluate gradients at a point with a vanishing norm argument,
    the norm's subgradient is taken as zero.
    """
    res = evaluate_full(problem, u, want_grad=False)
    if not np.isfinite(res.objective) or not np.all(np.isfinite(res.constraints)):
        raise NonFinite("objective or constraint evaluation produced NaN/Inf")
    return res.objective, res.constraints


@dataclass(frozen=True)
class SolveStats:
    """Solver diagnostics attached to a plan."""

    status: str
    iterations: int
    kkt_residual: float
    constraint_violation: float
    n_evaluations: int


@dataclass(frozen=True)
class Plan:
    """A solved control trajectory over the prediction horizon.

    ``predicted_sqrt_factors`` holds the covariance factor chain
    P~_0^r..P~_N^r for the dual kinds and is None for the single-stage
    formulations. ``backoffs`` are the realized per-stage backoff values
    gamma * ||P~_k^r u_k|| (zero for the nominal kind).
    """

    controls: np.ndarray
    objective_value: float
    backoffs: np.ndarray
    predicted_sqrt_factors: np.ndarray | None
    solver_stats: SolveStats

    @property
    def first_control(self) -> np.ndarray:
        return self.controls[0]
