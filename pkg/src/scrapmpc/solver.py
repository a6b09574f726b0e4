"""Dense SQP solver for the scrap-selection programs.

Sequential quadratic programming with a damped-BFGS Lagrangian Hessian,
an l1 exact-penalty line search, and a primal active-set QP subproblem
over the per-stage simplex equalities, box bounds and linearized
pollutant constraints. The QP always carries one shared elastic slack on
the inequalities; a problem is declared infeasible when the slack stays
above the feasibility tolerance while the step vanishes and growing the
slack penalty no longer helps.

Problems here are tiny (at most ~50 variables, ~35 constraints) and
dense, and the receding-horizon loop re-solves neighbours of the same
problem, so warm starts (shifted plan, previous QP working set, previous
Lagrangian Hessian) carry most of the load.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .belief import BeliefState
from .errors import DimensionMismatch
from .ocp import (
    DUAL_KINDS,
    Plan,
    ScrapSelectionProblem,
    SolveStats,
    evaluate_full,
)


# an INFEASIBLE verdict needs the violation to clearly exceed tolerances;
# stalls at rounding-level violations report MAX_ITERATIONS instead
_INFEASIBILITY_MARGIN = 1e-6


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max-iterations"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and algorithm switches; defaults suit the shipped scenarios."""

    kkt_tolerance: float = 1e-8
    feasibility_tolerance: float = 1e-8
    max_iterations: int = 200
    hessian: str = "damped-bfgs"  # or "gauss-newton-identity"
    penalty_growth: float = 10.0
    finite_difference_step: float = 1e-7

    def __post_init__(self):
        if self.kkt_tolerance <= 0 or self.feasibility_tolerance <= 0:
            raise DimensionMismatch("tolerances must be positive")
        if self.penalty_growth <= 1.0:
            raise DimensionMismatch("penalty_growth must exceed 1")
        if self.hessian not in ("damped-bfgs", "gauss-newton-identity"):
            raise DimensionMismatch(f"unknown hessian option {self.hessian!r}")


@dataclass
class WarmStart:
    """Cross-solve state reused by the receding-horizon loop."""

    working_set: list | None = None
    hessian: np.ndarray | None = None


@dataclass(frozen=True)
class SolveResult:
    u_star: np.ndarray
    status: SolveStatus
    kkt_residual: float
    constraint_violation: float
    iterations: int
    objective: float
    n_evaluations: int
    warm_start: WarmStart = field(default_factory=WarmStart, compare=False, repr=False)


def project_stages_box_simplex(u2, lo, hi) -> np.ndarray:
    """Row-wise Euclidean projection onto {u: sum(u) = 1, lo <= u <= hi}.

    Bisection on the per-row shift of the clipped vector; the row sum is
    monotone in the shift, so 60 halvings are exact to rounding.
    """
    u2 = np.atleast_2d(np.asarray(u2, dtype=float))
    lo = np.broadcast_to(np.asarray(lo, dtype=float), u2.shape[1:])
    hi = np.broadcast_to(np.asarray(hi, dtype=float), u2.shape[1:])
    t_lo = (u2 - hi).min(axis=1)
    t_hi = (u2 - lo).max(axis=1)
    for _ in range(60):
        t = 0.5 * (t_lo + t_hi)
        s = np.clip(u2 - t[:, None], lo, hi).sum(axis=1)
        above = s > 1.0
        t_lo = np.where(above, t, t_lo)
        t_hi = np.where(above, t_hi, t)
    return np.clip(u2 - (0.5 * (t_lo + t_hi))[:, None], lo, hi)


def project_box_simplex(v, lo, hi) -> np.ndarray:
    """Projection of one vector onto the box-bounded probability simplex."""
    return project_stages_box_simplex(v[None, :], lo, hi)[0]


# ----------------------------------------------------------------------
# QP subproblem
# ----------------------------------------------------------------------

_SLACK_ROW = ("slack-lb", -1)


class _QpResult:
    __slots__ = ("d", "s", "lam", "nu", "z_lo", "z_hi", "working_set", "ok")

    def __init__(self, d, s, lam, nu, z_lo, z_hi, working_set, ok):
        self.d = d
        self.s = s
        self.lam = lam
        self.nu = nu
        self.z_lo = z_lo
        self.z_hi = z_hi
        self.working_set = working_set
        self.ok = ok


def _qp_fail(n, m, n_stages, s0):
    return _QpResult(
        np.zeros(n), s0, np.zeros(m), np.zeros(n_stages),
        np.zeros(n), np.zeros(n), [], False,
    )


def _solve_qp(h, grad, jac, g, n_stages, n_x, lo, hi, rho, warm_ws):
    """Elastic primal active-set QP.

    min 0.5 d'Hd + grad'd + rho*s + 0.5*eps*s^2
    s.t. per-stage sum(d) = 0;  jac d - s <= -g;  lo <= d <= hi;  s >= 0.

    The start point d=0, s=max(0, max g) is always feasible; a stale warm
    working set is harmless because the first full step restores activity.
    One KKT solve per active-set change.
    """
    n = n_stages * n_x
    m = g.size
    nvar = n + 1
    eps_s = 1e-8 * max(rho, 1.0)

    eq_rows = np.zeros((n_stages, nvar))
    for k in range(n_stages):
        eq_rows[k, k * n_x : (k + 1) * n_x] = 1.0
    c_vec = np.concatenate([grad, [rho]])

    def row_of(entry):
        kind_, idx = entry
        a = np.zeros(nvar)
        if kind_ == "g":
            a[:n] = jac[idx]
            a[n] = -1.0
            return a, -g[idx]
        if kind_ == "lo":
            a[idx] = -1.0
            return a, -lo[idx]
        if kind_ == "hi":
            a[idx] = 1.0
            return a, hi[idx]
        a[n] = -1.0  # slack lower bound: -s <= 0
        return a, 0.0

    s0 = max(0.0, float(np.max(g)) if m else 0.0)
    x = np.zeros(nvar)
    x[n] = s0
    if warm_ws:
        ws = list(warm_ws)
    elif s0 == 0.0:
        ws = [_SLACK_ROW]
    else:
        ws = [("g", int(np.argmax(g)))]

    # membership masks for the vectorized ratio test
    g_in = np.zeros(m, dtype=bool)
    lo_in = np.zeros(n, dtype=bool)
    hi_in = np.zeros(n, dtype=bool)
    slo_in = False

    def set_mask(entry, value):
        nonlocal slo_in
        kind_, idx = entry
        if kind_ == "g":
            g_in[idx] = value
        elif kind_ == "lo":
            lo_in[idx] = value
        elif kind_ == "hi":
            hi_in[idx] = value
        else:
            slo_in = value

    row_cache: dict = {}
    rows_list = []
    rhs_list = []
    for entry in ws:
        r_, b_ = row_of(entry)
        row_cache[entry] = (r_, b_)
        rows_list.append(r_)
        rhs_list.append(b_)
        set_mask(entry, True)

    max_iter = 4 * (m + 2 * n + 2) + 10
    restarts = 0
    stalled = 0
    qobj_best = np.inf
    sol = None
    mults = np.empty(0)
    for _ in range(max_iter):
        nw = len(ws)
        size = nvar + n_stages + nw
        kkt = np.zeros((size, size))
        kkt[:n, :n] = h
        kkt[n, n] = eps_s
        kkt[:nvar, nvar : nvar + n_stages] = eq_rows.T
        kkt[nvar : nvar + n_stages, :nvar] = eq_rows
        rhs = np.empty(size)
        rhs[:nvar] = -c_vec
        rhs[nvar : nvar + n_stages] = 0.0
        if nw:
            wmat = np.stack(rows_list)
            kkt[:nvar, nvar + n_stages :] = wmat.T
            kkt[nvar + n_stages :, :nvar] = wmat
            rhs[nvar + n_stages :] = rhs_list
        ok = False
        delta = 1e-10
        row_rhs = rhs[nvar:]
        while delta <= 1e-4:
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                sol = None
            if sol is not None and np.all(np.isfinite(sol)):
                x_cand = sol[:nvar]
                row_resid = float(
                    np.max(np.abs(kkt[nvar:, :nvar] @ x_cand - row_rhs), initial=0.0)
                )
                row_scale = 1.0 + float(np.max(np.abs(row_rhs), initial=0.0)) + float(
                    np.max(np.abs(x_cand))
                )
                if row_resid <= 1e-7 * row_scale:
                    ok = True
                    break
            kkt[:nvar, :nvar] += delta * np.eye(nvar)
            delta *= 2.0
        if not ok:
            # degenerate working set (possible with a stale warm start)
            if restarts >= 2:
                return _qp_fail(n, m, n_stages, s0)
            restarts += 1
            for entry in ws:
                set_mask(entry, False)
            ws = [_SLACK_ROW] if s0 == 0.0 else [("g", int(np.argmax(g)))]
            rows_list, rhs_list = [], []
            for entry in ws:
                r_, b_ = row_cache.get(entry) or row_of(entry)
                row_cache[entry] = (r_, b_)
                rows_list.append(r_)
                rhs_list.append(b_)
                set_mask(entry, True)
            x = np.zeros(nvar)
            x[n] = s0
            continue
        x_star = sol[:nvar]
        mults = sol[nvar + n_stages :]
        # anti-cycling: the QP objective decreases strictly along the
        # active-set path; stagnation means a degenerate vertex where the
        # current point is primal-optimal while multiplier signs chatter
        qobj = 0.5 * float(x[:n] @ (h @ x[:n])) + float(c_vec @ x) + 0.5 * eps_s * x[n] ** 2
        if qobj >= qobj_best - 1e-11 * (1.0 + abs(qobj_best)):
            stalled += 1
            if stalled >= 6:
                break
        else:
            stalled = 0
            qobj_best = qobj
        p = x_star - x
        at_optimum = float(np.max(np.abs(p))) <= 1e-12 * (1.0 + float(np.max(np.abs(x))))
        if not at_optimum:
            alpha = 1.0
            blocker = None
            pd = p[:n]
            ap_g = jac @ pd - p[n] if m else np.empty(0)
            eps_block = 1e-11
            cand = (~g_in) & (ap_g > 1e-14)
            if np.any(cand):
                slack = (-g[cand]) - (jac[cand] @ x[:n] - x[n])
                caps = (slack + eps_block) / ap_g[cand]
                i_loc = int(np.argmin(caps))
                if caps[i_loc] < alpha - 1e-15:
                    alpha = max(float(caps[i_loc]), 0.0)
                    blocker = ("g", int(np.flatnonzero(cand)[i_loc]))
            cand = (~lo_in) & (pd < -1e-14)
            if np.any(cand):
                caps = (lo[cand] - x[:n][cand] - eps_block) / pd[cand]
                i_loc = int(np.argmin(caps))
                if caps[i_loc] < alpha - 1e-15:
                    alpha = max(float(caps[i_loc]), 0.0)
                    blocker = ("lo", int(np.flatnonzero(cand)[i_loc]))
            cand = (~hi_in) & (pd > 1e-14)
            if np.any(cand):
                caps = (hi[cand] - x[:n][cand] + eps_block) / pd[cand]
                i_loc = int(np.argmin(caps))
                if caps[i_loc] < alpha - 1e-15:
                    alpha = max(float(caps[i_loc]), 0.0)
                    blocker = ("hi", int(np.flatnonzero(cand)[i_loc]))
            if (not slo_in) and p[n] < -1e-14:
                cap = (0.0 - x[n] - eps_block) / p[n]
                if cap < alpha - 1e-15:
                    alpha = max(float(cap), 0.0)
                    blocker = _SLACK_ROW
            if blocker is not None:
                x = x + alpha * p
                ws.append(blocker)
                r_, b_ = row_cache.get(blocker) or row_of(blocker)
                row_cache[blocker] = (r_, b_)
                rows_list.append(r_)
                rhs_list.append(b_)
                set_mask(blocker, True)
                continue
            x = x_star
        # at the EQP optimum for this working set: check multiplier signs;
        # dropping every negative row at once saves KKT solves on stale
        # warm starts and cannot break convergence of the convex QP
        if len(ws) == 0:
            break
        neg = np.flatnonzero(mults < -1e-12)
        if neg.size == 0:
            break
        for i in sorted(neg.tolist(), reverse=True):
            entry = ws.pop(i)
            rows_list.pop(i)
            rhs_list.pop(i)
            set_mask(entry, False)
    else:
        return _qp_fail(n, m, n_stages, s0)

    lam = np.zeros(m)
    z_lo = np.zeros(n)
    z_hi = np.zeros(n)
    nu = sol[nvar : nvar + n_stages].copy()
    for entry, mult in zip(ws, mults):
        kind_, idx = entry
        val = max(float(mult), 0.0)
        if kind_ == "g":
            lam[idx] = val
        elif kind_ == "lo":
            z_lo[idx] = val
        elif kind_ == "hi":
            z_hi[idx] = val
    return _QpResult(x[:n].copy(), float(x[n]), lam, nu, z_lo, z_hi, list(ws), True)


# ----------------------------------------------------------------------
# SQP driver
# ----------------------------------------------------------------------


def _violation(g) -> float:
    return float(np.max(np.clip(g, 0.0, None), initial=0.0))


def solve(
    problem: ScrapSelectionProblem,
    initial_guess,
    config: SolverConfig | None = None,
    warm_start: WarmStart | None = None,
) -> SolveResult:
    """Find a KKT point of the problem from the given stacked guess.

    The guess is projected per stage onto the simplex-box intersection
    first; iterates then stay on the simplex and inside the box to
    rounding, so the l1 merit function only tracks the pollutant
    constraints. Deterministic: identical inputs give identical results.
    """
    cfg = config or SolverConfig()
    n_stages, n_x = problem.n_stages, problem.n_x
    dim = problem.dim
    u = np.asarray(initial_guess, dtype=float).reshape(-1)
    if u.size != dim:
        raise DimensionMismatch(f"expected guess of size {dim}, got {u.size}")
    lo_full, hi_full = problem.stacked_bounds()
    u = project_stages_box_simplex(
        u.reshape(n_stages, n_x), problem.u_min, problem.u_max
    ).reshape(-1)

    if warm_start is not None and warm_start.hessian is not None:
        h = warm_start.hessian.copy()
    else:
        h = np.eye(dim)
    warm_ws = list(warm_start.working_set) if warm_start and warm_start.working_set else None
    use_bfgs = cfg.hessian == "damped-bfgs"
    mu = 1.0
    rho = 100.0
    rho_max = 1e8
    feas_stall = 0
    n_eval = 0

    res = evaluate_full(problem, u, want_grad=True)
    n_eval += 1
    kkt_residual = np.inf
    viol = _violation(res.constraints)
    status = SolveStatus.MAX_ITERATIONS
    it = 0

    while it < cfg.max_iterations:
        it += 1
        lo = np.minimum(lo_full - u, 0.0)
        hi = np.maximum(hi_full - u, 0.0)
        qp = _solve_qp(
            h, res.gradient, res.jacobian, res.constraints,
            n_stages, n_x, lo, hi, rho, warm_ws,
        )
        if not qp.ok:
            status = SolveStatus.NUMERICAL_FAILURE
            break
        warm_ws = qp.working_set

        stat = (
            res.gradient
            + res.jacobian.T @ qp.lam
            + np.repeat(qp.nu, n_x)
            - qp.z_lo
            + qp.z_hi
        )
        comp = float(np.max(np.abs(qp.lam * res.constraints), initial=0.0))
        kkt_residual = max(float(np.max(np.abs(stat))), comp)
        viol = _violation(res.constraints)
        if kkt_residual <= cfg.kkt_tolerance and viol <= cfg.feasibility_tolerance:
            status = SolveStatus.OPTIMAL
            break

        d = qp.d
        step_norm = float(np.max(np.abs(d)))
        u_scale = 1.0 + float(np.max(np.abs(u)))
        if qp.s > cfg.feasibility_tolerance:
            if rho < rho_max:
                # slack engaged: the penalty is too low, grow it and re-solve
                rho = min(rho * cfg.penalty_growth, rho_max)
                it -= 1
                continue
            # feasibility phase: the QP minimizes the violation; a
            # stationary or stalled violation means (local) infeasibility,
            # but only a material violation justifies the verdict
            if step_norm <= 1e-8 * u_scale or feas_stall >= 4:
                status = (
                    SolveStatus.INFEASIBLE
                    if viol > _INFEASIBILITY_MARGIN
                    else SolveStatus.MAX_ITERATIONS
                )
                break
        if step_norm <= 1e-14 * u_scale:
            break  # stationary; convergence test above decides the status

        mu_target = 1.5 * float(np.max(np.abs(qp.lam), initial=0.0)) + 1.0
        if mu < mu_target:
            mu = mu_target
        elif mu > 100.0 * mu_target:
            mu = 10.0 * mu_target
        viol_l1 = float(np.sum(np.clip(res.constraints, 0.0, None)))
        merit0 = res.objective + mu * viol_l1
        lin_viol = float(np.sum(np.clip(res.constraints + res.jacobian @ d, 0.0, None)))
        descent = float(res.gradient @ d) + mu * (lin_viol - viol_l1)
        # merit comparisons are meaningless below rounding noise; near the
        # solution the unit step is the Newton-like step and is taken as is
        noise = 1e-13 * (1.0 + abs(res.objective) + mu * viol_l1)
        if descent > -noise:
            res_try = evaluate_full(problem, u + d, want_grad=True)
            n_eval += 1
            alpha = 1.0
            accepted = True
        else:
            alpha = 1.0
            res_try = None
            accepted = False
            for _ in range(40):
                u_try = u + alpha * d
                res_try = evaluate_full(problem, u_try, want_grad=True)
                n_eval += 1
                merit_try = res_try.objective + mu * float(
                    np.sum(np.clip(res_try.constraints, 0.0, None))
                )
                if merit_try <= merit0 + 1e-4 * alpha * descent + noise:
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            if qp.s > cfg.feasibility_tolerance and viol > _INFEASIBILITY_MARGIN:
                status = SolveStatus.INFEASIBLE
            else:
                status = SolveStatus.NUMERICAL_FAILURE
            break

        if qp.s > cfg.feasibility_tolerance:
            viol_new = _violation(res_try.constraints)
            if viol_new >= 0.98 * viol:
                feas_stall += 1
            else:
                feas_stall = 0

        if use_bfgs and step_norm > 1e-9 * u_scale and qp.s <= cfg.feasibility_tolerance:
            s_vec = alpha * d
            grad_lag_old = res.gradient + res.jacobian.T @ qp.lam
            grad_lag_new = res_try.gradient + res_try.jacobian.T @ qp.lam
            y_vec = grad_lag_new - grad_lag_old
            hs = h @ s_vec
            shs = float(s_vec @ hs)
            sy = float(s_vec @ y_vec)
            if shs > 1e-16:
                if sy < 0.2 * shs:
                    theta = 0.8 * shs / (shs - sy)
                    y_vec = theta * y_vec + (1.0 - theta) * hs
                    sy = float(s_vec @ y_vec)
                if sy > 1e-16:
                    h = h - np.outer(hs, hs) / shs + np.outer(y_vec, y_vec) / sy
        u = u + alpha * d
        res = res_try

    # exactness repair: re-center each stage onto the simplex
    u2 = u.reshape(n_stages, n_x).copy()
    u2 -= (u2.sum(axis=1, keepdims=True) - 1.0) / n_x
    u = u2.reshape(-1)

    return SolveResult(
        u_star=u,
        status=status,
        kkt_residual=float(kkt_residual),
        constraint_violation=float(viol),
        iterations=it,
        objective=float(res.objective),
        n_evaluations=n_eval,
        warm_start=WarmStart(working_set=warm_ws, hessian=h),
    )


# ----------------------------------------------------------------------
# Receding-horizon interface
# ----------------------------------------------------------------------


def uniform_guess(problem: ScrapSelectionProblem) -> np.ndarray:
    """Equal mass from every heap at every stage."""
    return np.full(problem.dim, 1.0 / problem.n_x)


def shifted_guess(previous_plan: Plan) -> np.ndarray:
    """Previous plan advanced one stage, last stage duplicated."""
    c = previous_plan.controls
    return np.vstack([c[1:], c[-1:]]).reshape(-1)


def make_plan(problem: ScrapSelectionProblem, result: SolveResult) -> Plan:
    """Package a solve result with the realized backoffs and factor chain."""
    res = evaluate_full(problem, result.u_star, want_grad=False)
    return Plan(
        controls=result.u_star.reshape(problem.n_stages, problem.n_x).copy(),
        objective_value=float(res.objective),
        backoffs=res.backoffs,
        predicted_sqrt_factors=res.factors if problem.kind in DUAL_KINDS else None,
        solver_stats=SolveStats(
            status=result.status.value,
            iterations=result.iterations,
            kkt_residual=result.kkt_residual,
            constraint_violation=result.constraint_violation,
            n_evaluations=result.n_evaluations,
        ),
    )


def solve_receding(
    problem_builder: Callable[[BeliefState], ScrapSelectionProblem],
    belief: BeliefState,
    previous_plan: Plan | None = None,
    config: SolverConfig | None = None,
    warm_start: WarmStart | None = None,
) -> Plan:
    """Build the problem at the current belief and solve it warm-started.

    The initial guess is the previous plan shifted by one stage with the
    last stage duplicated, or the uniform mix when no plan is available.
    """
    problem = problem_builder(belief)
    if previous_plan is not None and previous_plan.controls.shape == (
        problem.n_stages,
        problem.n_x,
    ):
        guess = shifted_guess(previous_plan)
    else:
        guess = uniform_guess(problem)
    result = solve(problem, guess, config, warm_start=warm_start)
    return make_plan(problem, result)
