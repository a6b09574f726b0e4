"""Monte Carlo campaigns: paired comparison of the four formulations.

Every run index draws its own initial estimate and noise streams from
(base_seed, run_index); all controller variants replay those identical
realizations, so cost differences are paired. Aggregation is collected
by run index, which makes summaries independent of worker count and
scheduling.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .closed_loop import RunOutcome, RunStreams, run_closed_loop, violation_share
from .errors import EmptyInput, ValidationError
from .ocp import DUAL_KINDS, FormulationKind
from .plant import SystemParams
from .stochastic import SOURCE_INIT_ESTIMATE, GaussianSpec, make_stream, sample_gaussian

SCATTER_STRIDE = 7  # every 7th run of the cost cloud is exported (~15%)


@dataclass(frozen=True)
class Variant:
    """One controller under comparison: a formulation, plus alpha if explicit."""

    kind: FormulationKind
    alpha: float | None = None

    @property
    def key(self) -> str:
        if self.alpha is None:
            return self.kind.value
        a = self.alpha
        a_str = str(int(a)) if float(a).is_integer() else repr(a)
        return f"{self.kind.value}:alpha={a_str}"


@dataclass(frozen=True)
class CampaignSpec:
    """What to run: parameters, controller variants, run count and seeding."""

    params: SystemParams
    kinds: tuple = (
        FormulationKind.NOMINAL,
        FormulationKind.ROBUST,
        FormulationKind.IMPLICIT_DUAL,
        FormulationKind.EXPLICIT_DUAL,
    )
    alphas: tuple = ()  # explicit-dual only; empty means params.alpha
    n_runs: int = 1000
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValidationError("n_runs must be at least 1")
        if not self.kinds:
            raise ValidationError("kinds must be nonempty")
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))

    def variants(self) -> list[Variant]:
        out = []
        for kind in self.kinds:
            if kind is FormulationKind.EXPLICIT_DUAL:
                alphas = self.alphas or (self.params.alpha,)
                out.extend(Variant(kind, float(a)) for a in alphas)
            else:
                out.append(Variant(kind))
        return out


@dataclass
class VariantSummary:
    """Aggregates for one variant over all runs."""

    variant: Variant
    costs: np.ndarray  # successful runs only, in run order
    violations: np.ndarray
    n_failed: int
    n_casts: int

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.costs)) if self.costs.size else math.nan

    @property
    def violation_share(self) -> float:
        outcomes = [
            RunOutcome(total_cost=c, violations=int(v), failed=False)
            for c, v in zip(self.costs, self.violations)
        ]
        return violation_share(outcomes, self.n_casts)

    def quantiles(self, levels=(0.5, 0.9, 0.99)) -> dict[str, float]:
        return {str(lv): quantile(self.costs, lv) for lv in levels}


@dataclass
class MonteCarloSummary:
    """Campaign result: one VariantSummary per controller variant."""

    spec: CampaignSpec
    variants: dict[str, VariantSummary] = field(default_factory=dict)
    per_run: list = field(default_factory=list)  # raw (key, cost, violations, failed) per run index

    def to_json(self) -> str:
        payload = {}
        for key in sorted(self.variants):
            vs = self.variants[key]
            payload[key] = {
                "mean_cost": vs.mean_cost,
                "quantiles": vs.quantiles(),
                "violation_share": vs.violation_share,
                "n_failed": vs.n_failed,
            }
        meta = {
            "n_runs": self.spec.n_runs,
            "n_casts": self.spec.params.n_casts,
            "base_seed": self.spec.base_seed,
        }
        return json.dumps({"campaign": meta, "results": payload}, sort_keys=True, indent=2)


def quantile(values, level: float) -> float:
    """Empirical quantile, linear interpolation between order statistics.

    The convention matches the common default of statistical software
    (h = (n - 1) * level; interpolate between the floor and ceil order
    statistics).
    """
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size == 0:
        raise EmptyInput("quantile of an empty list")
    if not 0.0 <= level <= 1.0:
        raise EmptyInput(f"quantile level must be in [0, 1], got {level}")
    h = (vals.size - 1) * float(level)
    lo = int(math.floor(h))
    hi = min(lo + 1, vals.size - 1)
    return float(vals[lo] + (h - lo) * (vals[hi] - vals[lo]))


def kde_density(values, n_grid: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian kernel density with Silverman bandwidth on a fixed grid."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise EmptyInput("density of an empty list")
    std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    iqr = quantile(vals, 0.75) - quantile(vals, 0.25)
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    if spread <= 0:
        spread = max(abs(float(vals[0])), 1.0) * 1e-3
    bw = 0.9 * spread * vals.size ** (-0.2)
    grid = np.linspace(vals.min() - 3 * bw, vals.max() + 3 * bw, n_grid)
    z = (grid[:, None] - vals[None, :]) / bw
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (vals.size * bw * math.sqrt(2 * math.pi))
    return grid, dens


def _execute_run(args) -> list[tuple[str, float, int, bool]]:
    """All variants of one run index on shared noise realizations."""
    params, variant_items, base_seed, run_index, multi_start = args
    init_stream = make_stream(base_seed, run_index, SOURCE_INIT_ESTIMATE)
    x_hat_0 = sample_gaussian(init_stream, GaussianSpec(params.x0_true, params.p0_sqrt))
    results = []
    for kind_value, alpha in variant_items:
        kind = FormulationKind(kind_value)
        streams = RunStreams.for_run(base_seed, run_index)
        trace = run_closed_loop(
            params,
            kind,
            streams,
            x_hat_0,
            alpha=alpha,
            # the extra start exists to stabilize the nonconvex solves;
            # the single-stage problems are convex and solve identically
            multi_start=multi_start and kind in DUAL_KINDS,
            seed=base_seed,
            run_index=run_index,
        )
        results.append(
            (
                Variant(kind, alpha if kind is FormulationKind.EXPLICIT_DUAL else None).key,
                trace.total_cost,
                trace.violations,
                trace.failed,
            )
        )
    return results


def run_campaign(spec: CampaignSpec, multi_start: bool = True) -> MonteCarloSummary:
    """Run every variant on every run index and aggregate.

    Multi-start (shifted-plan and uniform starts, keep the better) is on
    by default: the dual problems are nonconvex and the extra start
    stabilizes the comparison. The summary is identical for any worker
    count because results are keyed by run index.
    """
    variant_items = [
        (v.kind.value, v.alpha if v.alpha is not None else spec.params.alpha)
        for v in spec.variants()
    ]
    jobs = [
        (spec.params, variant_items, spec.base_seed, k, multi_start)
        for k in range(spec.n_runs)
    ]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            per_run = list(pool.map(_execute_run, jobs, chunksize=8))
    else:
        per_run = [_execute_run(job) for job in jobs]

    summary = MonteCarloSummary(spec=spec, per_run=per_run)
    for variant in spec.variants():
        key = variant.key
        costs, viols, failed = [], [], 0
        for run_results in per_run:
            for k_key, cost, v, f in run_results:
                if k_key != key:
                    continue
                if f:
                    failed += 1
                else:
                    costs.append(cost)
                    viols.append(v)
        summary.variants[key] = VariantSummary(
            variant=variant,
            costs=np.asarray(costs, dtype=float),
            violations=np.asarray(viols, dtype=float),
            n_failed=failed,
            n_casts=spec.params.n_casts,
        )
    return summary


def runs_csv(summary: MonteCarloSummary) -> str:
    """Per-run costs of all variants as CSV text, in run order."""
    lines = ["run_index,kind,alpha,total_cost,violations,failed"]
    for run_idx, run_results in enumerate(summary.per_run):
        for key, cost, viol, failed in run_results:
            kind_value, _, alpha_part = key.partition(":alpha=")
            lines.append(
                f"{run_idx},{kind_value},{alpha_part},{float(cost)!r},{int(viol)},{int(failed)}"
            )
    return "\n".join(lines) + "\n"


def density_csv(values) -> str:
    grid, dens = kde_density(values)
    lines = ["cost,density"]
    lines.extend(f"{float(g)!r},{float(d)!r}" for g, d in zip(grid, dens))
    return "\n".join(lines) + "\n"


def scatter_csv(values, stride: int = SCATTER_STRIDE) -> str:
    vals = np.asarray(values, dtype=float)
    lines = ["run_index,total_cost"]
    lines.extend(f"{i},{float(vals[i])!r}" for i in range(0, vals.size, stride))
    return "\n".join(lines) + "\n"
