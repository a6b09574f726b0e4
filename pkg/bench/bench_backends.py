"""Benchmark: compiled kernels vs the pure numpy fallback.

Times the two hot paths (square-root covariance propagation and the full
dual-problem evaluation with Jacobians) and one complete SQP solve under
each backend. Run from the repository root:

    python bench/bench_backends.py

The backend is chosen per interpreter, so the fallback is measured in a
subprocess with SCRAPMPC_PURE_PYTHON=1.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time

import numpy as np


def _measure() -> dict:
    from scrapmpc import _kernels
    from scrapmpc.belief import BeliefState
    from scrapmpc.ocp import build_dual, evaluate_full
    from scrapmpc.plant import default_params
    from scrapmpc.solver import solve, uniform_guess

    params = default_params()
    belief = BeliefState(x_hat=np.array([0.0695, 0.1639, 0.1469]), p_sqrt=params.p0_sqrt)
    problem = build_dual(belief, params, 100.0)
    u = uniform_guess(problem)

    out = {"backend": _kernels.BACKEND}

    reps = 2000
    t0 = time.perf_counter()
    for _ in range(reps):
        _kernels.propagate_sqrt(params.p0_sqrt, np.array([1 / 3, 1 / 3, 1 / 3]),
                                params.q_sqrt, params.r_sqrt)
    out["propagate_sqrt_us"] = 1e6 * (time.perf_counter() - t0) / reps

    reps = 300
    t0 = time.perf_counter()
    for _ in range(reps):
        evaluate_full(problem, u, want_grad=True)
    out["dual_eval_grad_us"] = 1e6 * (time.perf_counter() - t0) / reps

    t0 = time.perf_counter()
    result = solve(problem, u)
    out["dual_solve_ms"] = 1e3 * (time.perf_counter() - t0)
    out["dual_solve_status"] = result.status.value
    out["dual_solve_iters"] = result.iterations
    return out


def main() -> int:
    if os.environ.get("_BENCH_CHILD"):
        print(json.dumps(_measure()))
        return 0

    results = []
    for pure in ("0", "1"):
        env = dict(os.environ, _BENCH_CHILD="1", SCRAPMPC_PURE_PYTHON=pure)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__)],
            env=env, capture_output=True, text=True, check=True,
        )
        results.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    header = f"{'metric':28s} " + " ".join(f"{r['backend']:>12s}" for r in results)
    print(header)
    print("-" * len(header))
    for metric, unit in (
        ("propagate_sqrt_us", "us"),
        ("dual_eval_grad_us", "us"),
        ("dual_solve_ms", "ms"),
    ):
        row = f"{metric:28s} " + " ".join(f"{r[metric]:>10.1f}{unit}" for r in results)
        print(row)
    fast, slow = results[0], results[1]
    if fast["backend"] == slow["backend"]:
        print("note: compiled extension unavailable; both columns ran the fallback")
    else:
        speedup = slow["dual_eval_grad_us"] / fast["dual_eval_grad_us"]
        print(f"dual evaluation speedup: x{speedup:.0f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
