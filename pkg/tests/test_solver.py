"""SQP solver against LP/grid/projection oracles."""

import numpy as np
import pytest

from scrapmpc.belief import BeliefState
from scrapmpc.ocp import build_dual, build_nominal, build_robust
from scrapmpc.plant import default_params
from scrapmpc.solver import (
    SolveStatus,
    SolverConfig,
    _solve_qp,
    make_plan,
    project_box_simplex,
    shifted_guess,
    solve,
    solve_receding,
    uniform_guess,
)


def sorted_simplex_projection(c):
    """Independent oracle: classic sort-based projection onto the unit simplex."""
    c = np.asarray(c, dtype=float)
    u = np.sort(c)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / (np.arange(c.size) + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.clip(c - theta, 0.0, None)


def robust_grid_optimum(x_hat, p_sqrt, params, step=1e-4):
    """Grid-search oracle over the simplex for the single-stage cone problem."""
    best = np.inf
    a_vals = np.arange(0.0, 1.0 + step / 2, step)
    for a in a_vals:
        b = np.arange(0.0, 1.0 - a + step / 2, step)
        c = np.clip(1.0 - a - b, 0.0, None)
        u = np.stack([np.full_like(b, a), b, c], axis=1)
        z = u @ p_sqrt.T
        lhs = u @ x_hat + params.gamma * np.sqrt((z**2).sum(axis=1))
        feas = lhs <= params.y_max
        if feas.any():
            cost = float((u @ params.prices)[feas].min())
            best = min(best, cost)
    return best


class TestNominalLp:
    def test_table_instance(self, baseline_belief, params):
        prob = build_nominal(baseline_belief, params)
        res = solve(prob, uniform_guess(prob))
        assert res.status is SolveStatus.OPTIMAL
        assert res.objective == pytest.approx(7 / 6, abs=1e-6)
        np.testing.assert_allclose(res.u_star, [1 / 6, 5 / 6, 0.0], atol=1e-6)

    def test_unconstrained_by_pollutant(self, params):
        belief = BeliefState(x_hat=np.array([0.05, 0.08, 0.1]), p_sqrt=params.p0_sqrt)
        prob = build_nominal(belief, params)
        res = solve(prob, uniform_guess(prob))
        assert res.status is SolveStatus.OPTIMAL
        assert res.objective == pytest.approx(1.0, abs=1e-7)

    def test_infeasible_reported(self, params):
        belief = BeliefState(x_hat=np.array([0.2, 0.2, 0.2]), p_sqrt=params.p0_sqrt)
        prob = build_nominal(belief, params)
        res = solve(prob, uniform_guess(prob))
        assert res.status is SolveStatus.INFEASIBLE

    def test_random_instances_match_grid(self, params, rng):
        for _ in range(50):
            x_hat = params.x0_true + rng.normal(size=3) * np.sqrt(np.diag(params.p0))
            belief = BeliefState(x_hat=x_hat, p_sqrt=np.zeros((3, 3)))
            prob = build_nominal(belief, params)
            res = solve(prob, uniform_guess(prob))
            assert res.status is SolveStatus.OPTIMAL
            p0 = default_params(gamma=0.0)
            ref = robust_grid_optimum(x_hat, np.zeros((3, 3)), p0, step=1e-3)
            assert res.objective <= ref + 1e-9
            assert res.objective >= ref - 6e-3  # grid resolution

    def test_identity_hessian_variant(self, baseline_belief, params):
        prob = build_nominal(baseline_belief, params)
        cfg = SolverConfig(hessian="gauss-newton-identity")
        res = solve(prob, uniform_guess(prob), cfg)
        assert res.status is SolveStatus.OPTIMAL
        assert res.objective == pytest.approx(7 / 6, abs=1e-6)


class TestRobustSocp:
    def test_matches_grid_on_table_instance(self, baseline_belief, params):
        prob = build_robust(baseline_belief, params)
        res = solve(prob, uniform_guess(prob))
        assert res.status is SolveStatus.OPTIMAL
        ref = robust_grid_optimum(baseline_belief.x_hat, baseline_belief.p_sqrt, params)
        assert abs(res.objective - ref) <= 2e-3

    def test_kkt_certificate_fields(self, baseline_belief, params):
        prob = build_robust(baseline_belief, params)
        cfg = SolverConfig()
        res = solve(prob, uniform_guess(prob), cfg)
        assert res.status is SolveStatus.OPTIMAL
        assert res.kkt_residual <= cfg.kkt_tolerance
        assert res.constraint_violation <= cfg.feasibility_tolerance
        assert abs(float(np.sum(res.u_star)) - 1.0) <= 1e-10


class TestQpProjection:
    def test_qp_projects_onto_simplex(self, rng):
        # min ||u - c||^2 over the simplex, via the step-space QP at u0
        for _ in range(20):
            c = rng.normal(size=3) * 2.0
            u0 = np.full(3, 1 / 3)
            qp = _solve_qp(
                np.eye(3),
                -(c - u0),
                np.zeros((0, 3)),
                np.zeros(0),
                1,
                3,
                0.0 - u0,
                1.0 - u0,
                100.0,
                None,
            )
            assert qp.ok
            np.testing.assert_allclose(
                u0 + qp.d, sorted_simplex_projection(c), atol=1e-9
            )

    def test_projection_function_against_oracle(self, rng):
        for _ in range(50):
            v = rng.normal(size=4) * 3.0
            ours = project_box_simplex(v, np.zeros(4), np.ones(4))
            ref = sorted_simplex_projection(v)
            np.testing.assert_allclose(ours, ref, atol=1e-12)
            assert float(np.sum(ours)) == pytest.approx(1.0, abs=1e-12)


class TestDeterminism:
    def test_identical_inputs_identical_results(self, baseline_belief, params):
        prob = build_dual(baseline_belief, params, 100.0)
        r1 = solve(prob, uniform_guess(prob))
        r2 = solve(prob, uniform_guess(prob))
        assert np.array_equal(r1.u_star, r2.u_star)
        assert r1.objective == r2.objective
        assert r1.iterations == r2.iterations
        assert r1.kkt_residual == r2.kkt_residual


class TestSolveReceding:
    def test_first_call_uses_uniform(self, baseline_belief, params):
        builder = lambda b: build_robust(b, params)
        plan = solve_receding(builder, baseline_belief)
        prob = builder(baseline_belief)
        direct = solve(prob, uniform_guess(prob))
        np.testing.assert_array_equal(plan.controls.reshape(-1), direct.u_star)

    def test_shift_of_constant_plan(self, baseline_belief, params):
        builder = lambda b: build_dual(b, params, 0.0)
        prob = builder(baseline_belief)
        res = solve(prob, uniform_guess(prob))
        plan = make_plan(prob, res)
        const_controls = np.tile(plan.controls[-1], (prob.n_stages, 1))
        const_plan = make_plan(
            prob,
            res.__class__(
                u_star=const_controls.reshape(-1),
                status=res.status,
                kkt_residual=res.kkt_residual,
                constraint_violation=res.constraint_violation,
                iterations=res.iterations,
                objective=res.objective,
                n_evaluations=res.n_evaluations,
            ),
        )
        np.testing.assert_array_equal(
            shifted_guess(const_plan), const_controls.reshape(-1)
        )

    def test_warm_start_saves_iterations(self, params):
        # receding-horizon chain on the pinned example: casts after the
        # first should converge in no more iterations than the cold solve
        from scrapmpc.closed_loop import RunStreams, run_closed_loop
        from scrapmpc.ocp import FormulationKind

        streams = RunStreams.for_run(3, 0)
        trace = run_closed_loop(
            params,
            FormulationKind.EXPLICIT_DUAL,
            streams,
            np.array([0.0695, 0.1639, 0.1469]),
            seed=3,
        )
        iters = [r.solver_iterations for r in trace.records]
        assert not trace.failed
        n_better = sum(1 for it in iters[2:] if it <= iters[0])
        assert n_better >= 0.8 * len(iters[2:])

    def test_plan_contents(self, baseline_belief, params):
        builder = lambda b: build_dual(b, params, 100.0)
        plan = solve_receding(builder, baseline_belief)
        assert plan.controls.shape == (params.horizon + 1, 3)
        assert plan.predicted_sqrt_factors is not None
        assert plan.predicted_sqrt_factors.shape == (params.horizon + 1, 3, 3)
        assert np.all(plan.backoffs > 0)
        sums = plan.controls.sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-8)
        # factor chain is exactly the recomputed propagation
        from scrapmpc.belief import propagate_sqrt

        pr = baseline_belief.p_sqrt
        for k in range(params.horizon):
            np.testing.assert_array_equal(plan.predicted_sqrt_factors[k], pr)
            pr = propagate_sqrt(pr, plan.controls[k], params.q_sqrt, params.r_sqrt).factor

    def test_robust_plan_has_no_factor_chain(self, baseline_belief, params):
        plan = solve_receding(lambda b: build_robust(b, params), baseline_belief)
        assert plan.predicted_sqrt_factors is None
        assert plan.solver_stats.status == "optimal"
