"""Command-line front end.

Subcommands:
    single       one closed-loop run; writes a trace CSV and figure-data CSVs
    campaign     Monte Carlo comparison; writes summary JSON, runs CSV and
                 per-variant density / scatter CSVs
    sweep-alpha  explicit-dual exploration-weight sweep; writes summary JSON

Copper contents in figure-data files are percent by weight; the trace CSV
keeps internal fractions. Exit codes: 0 success, 1 configuration or
validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .closed_loop import RunStreams, run_closed_loop
from .config import Config, parse_config
from .errors import ParseError, ScrapMpcError, ValidationError
from .experiments import (
    CampaignSpec,
    density_csv,
    run_campaign,
    runs_csv,
    scatter_csv,
)
from .ocp import FormulationKind
from .stochastic import SOURCE_INIT_ESTIMATE, GaussianSpec, make_stream, sample_gaussian

OUT_DIR_ENV = "SCRAPMPC_OUT_DIR"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scrapmpc",
        description="Closed-loop scrap-selection control simulations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="configuration file (flat key = value lines)")
        p.add_argument("--out", help="output directory (default: $SCRAPMPC_OUT_DIR or '.')")
        p.add_argument("--seed", type=int, help="base seed")
        p.add_argument("--workers", type=int, help="parallel worker count")

    p_single = sub.add_parser("single", help="one closed-loop run of one formulation")
    common(p_single)
    p_single.add_argument(
        "--kind",
        choices=[k.value for k in FormulationKind],
        help="formulation to run (default from config)",
    )
    p_single.add_argument("--alpha", type=float, help="exploration weight (explicit dual)")
    p_single.add_argument(
        "--x-hat", help="pin the initial estimate, e.g. '0.0695,0.1639,0.1469'"
    )

    p_camp = sub.add_parser("campaign", help="Monte Carlo comparison of formulations")
    common(p_camp)
    p_camp.add_argument("--runs", type=int, help="number of Monte Carlo runs")
    p_camp.add_argument("--kinds", help="comma-separated formulation kinds")
    p_camp.add_argument("--alphas", help="comma-separated explicit-dual weights")

    p_sweep = sub.add_parser("sweep-alpha", help="explicit-dual exploration-weight sweep")
    common(p_sweep)
    p_sweep.add_argument("--runs", type=int, help="number of Monte Carlo runs")
    p_sweep.add_argument("--alphas", required=True, help="comma-separated weights")
    return parser


def _load_config(args) -> Config:
    cfg = parse_config(args.config) if args.config else Config()
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        updates["workers"] = args.workers
    if getattr(args, "out", None):
        updates["out_dir"] = args.out
    if getattr(args, "kind", None):
        updates["kind"] = args.kind
    if getattr(args, "alpha", None) is not None:
        updates["alpha"] = args.alpha
    if getattr(args, "runs", None) is not None:
        updates["runs"] = args.runs
    if getattr(args, "kinds", None):
        updates["kinds"] = tuple(k.strip() for k in args.kinds.split(","))
    if getattr(args, "alphas", None):
        updates["alphas"] = tuple(float(a) for a in args.alphas.split(","))
    if getattr(args, "x_hat", None):
        updates["x_hat0"] = tuple(float(v) for v in args.x_hat.split(","))
    if updates:
        cfg = replace(cfg, **updates)
    return cfg.validate()


def _out_dir(cfg: Config) -> Path:
    out = cfg.out_dir or os.environ.get(OUT_DIR_ENV, "") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fig_files(trace, params, out: Path, tag: str) -> None:
    n_x = params.n_x
    pct = 100.0
    states = ["t," + ",".join(
        [f"x_true_pct_{i}" for i in range(n_x)]
        + [f"x_hat_pct_{i}" for i in range(n_x)]
        + [f"sigma_pct_{i}" for i in range(n_x)]
    )]
    controls = ["t," + ",".join(f"u_{i}" for i in range(n_x))]
    output = ["t,y_pct,y_max_pct,backoff_pct"]
    for r in trace.records:
        sig = np.sqrt(r.p_diag)
        states.append(
            f"{r.t},"
            + ",".join(repr(float(v) * pct) for v in r.x_true)
            + ","
            + ",".join(repr(float(v) * pct) for v in r.x_hat)
            + ","
            + ",".join(repr(float(v) * pct) for v in sig)
        )
        controls.append(f"{r.t}," + ",".join(repr(float(v)) for v in r.u))
        output.append(
            f"{r.t},{float(r.y) * pct!r},{float(trace.y_max) * pct!r},{float(r.backoff) * pct!r}"
        )
    (out / f"fig_states_{tag}.csv").write_text("\n".join(states) + "\n")
    (out / f"fig_controls_{tag}.csv").write_text("\n".join(controls) + "\n")
    (out / f"fig_output_{tag}.csv").write_text("\n".join(output) + "\n")


def _run_single(cfg: Config) -> int:
    params = cfg.to_params()
    kind = FormulationKind(cfg.kind)
    if cfg.x_hat0 is not None:
        x_hat0 = np.asarray(cfg.x_hat0, dtype=float)
    else:
        stream = make_stream(cfg.seed, 0, SOURCE_INIT_ESTIMATE)
        x_hat0 = sample_gaussian(stream, GaussianSpec(params.x0_true, params.p0_sqrt))
    streams = RunStreams.for_run(cfg.seed, 0)
    trace = run_closed_loop(
        params, kind, streams, x_hat0, alpha=cfg.alpha, seed=cfg.seed
    )
    out = _out_dir(cfg)
    tag = kind.value
    (out / f"trace_{tag}.csv").write_text(trace.to_csv())
    _fig_files(trace, params, out, tag)
    outcome = trace.outcome()
    print(
        f"{tag}: cost {outcome.total_cost:.4f}, violations {outcome.violations}"
        + (f", FAILED at cast {outcome.failure_cast} ({outcome.failure_reason})"
           if outcome.failed else "")
    )
    if trace.failed:
        return 2
    return 0


def _run_campaign(cfg: Config, sweep_only_explicit: bool = False) -> int:
    params = cfg.to_params()
    if sweep_only_explicit:
        kinds = (FormulationKind.EXPLICIT_DUAL,)
    else:
        kinds = tuple(FormulationKind(k) for k in cfg.kinds)
    spec = CampaignSpec(
        params=params,
        kinds=kinds,
        alphas=cfg.alphas,
        n_runs=cfg.runs,
        base_seed=cfg.seed,
        workers=cfg.workers,
    )
    summary = run_campaign(spec)
    out = _out_dir(cfg)
    name = "sweep_alpha.json" if sweep_only_explicit else "summary.json"
    (out / name).write_text(summary.to_json() + "\n")
    (out / "runs.csv").write_text(runs_csv(summary))
    for key, vs in sorted(summary.variants.items()):
        tag = key.replace(":", "_").replace("=", "_")
        if vs.costs.size:
            (out / f"density_{tag}.csv").write_text(density_csv(vs.costs))
            (out / f"scatter_{tag}.csv").write_text(scatter_csv(vs.costs))
    print(summary.to_json())
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = _load_config(args)
    except (ParseError, ValidationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "single":
            return _run_single(cfg)
        if args.command == "campaign":
            return _run_campaign(cfg)
        return _run_campaign(cfg, sweep_only_explicit=True)
    except ScrapMpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surface, do not trace-dump, for CLI users
        print(f"unexpected failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entry_point() -> None:
    sys.exit(main())
