"""
Command-line entry point.

    python -m app.cli simulate   --config cfg.json --seed 3 --out data/
    python -m app.cli track      --config cfg.json --input data/ --filter tmb --out track/
    python -m app.cli evaluate   --truth data/truth.jsonl --estimates track/estimates.jsonl
    python -m app.cli experiment --config cfg.json --runs 50 --workers 8 --out results/ttombp

Exit status: 0 on success, 2 for invalid input or configuration, 1 for I/O
failures.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from app.config.settings import settings
from app.models.schemas import FilterKind, RunConfig
from app.services.simulation_service import GroundTruth, simulate
from app.services.tracking_service import (
    estimate_record,
    evaluate_records,
    run_experiment,
    run_filter,
    score_run,
)
from app.utils import file_utils
from app.utils.log_utils import configure_logging
from app.utils.rng_utils import filter_rng


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def _non_negative_int(value: str) -> int:
    number = int(value)
    if number < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return number


def load_config(
    path: Optional[str],
    runs: Optional[int] = None,
    seed: Optional[int] = None,
    filter_kind: Optional[str] = None,
    out: Optional[str] = None,
) -> RunConfig:
    """RunConfig from a JSON file (or defaults) with command-line overrides applied."""
    if path:
        cfg = RunConfig.model_validate_json(file_utils.read_text(path))
    else:
        cfg = RunConfig(n_runs=settings.default_runs, base_seed=settings.default_seed)
    overrides: dict[str, Any] = {}
    if runs is not None:
        overrides["n_runs"] = runs
    if seed is not None:
        overrides["base_seed"] = seed
    if filter_kind is not None:
        overrides["filter"] = filter_kind
    if out is not None:
        overrides["output_dir"] = out
    if not overrides:
        return cfg
    return RunConfig.model_validate({**cfg.model_dump(), **overrides})


# ============================================
# Subcommands
# ============================================

def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, seed=args.seed)
    seed = cfg.base_seed
    out = Path(args.out or cfg.output_dir)
    truth, frames = simulate(cfg.scenario, seed)
    file_utils.write_jsonl(out / "truth.jsonl", truth.records())
    for image in frames:
        file_utils.write_frame(out / "frames", image)
    print(f"Wrote {len(truth.trajectories)} trajectories and {len(frames)} frames to {out}")
    return 0


def cmd_track(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, seed=args.seed, filter_kind=args.filter)
    seed = cfg.base_seed
    out = Path(args.out or cfg.output_dir)
    truth: Optional[GroundTruth] = None
    if args.input:
        source = Path(args.input)
        frames = file_utils.read_frames(source / "frames", cfg.scenario.geometry)
        truth_path = source / "truth.jsonl"
        if truth_path.exists():
            truth = GroundTruth.from_records(list(file_utils.read_jsonl(truth_path)), len(frames))
    else:
        truth, frames = simulate(cfg.scenario, seed)
        file_utils.write_jsonl(out / "truth.jsonl", truth.records())

    steps = run_filter(cfg, frames, filter_rng(seed))
    if truth is not None:
        records = score_run(steps, truth, cfg.ospa)
    else:
        records = [
            {
                "k": step.k,
                "n_estimates": len(step.estimates),
                "estimates": [estimate_record(tid, x, r) for tid, x, r in step.estimates],
            }
            for step in steps
        ]
    file_utils.write_jsonl(out / "estimates.jsonl", records)
    print(f"{cfg.filter.value}: tracked {len(steps)} frames, estimates in {out / 'estimates.jsonl'}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    truth = list(file_utils.read_jsonl(args.truth))
    estimates = list(file_utils.read_jsonl(args.estimates))
    scored = evaluate_records(truth, estimates, cfg.ospa)
    if args.out:
        file_utils.write_jsonl(Path(args.out) / "ospa.jsonl", scored)
    mean = float(np.mean([s["ospa"] for s in scored])) if scored else 0.0
    print(f"steps={len(scored)} mean_ospa={mean:.4f}")
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, runs=args.runs, seed=args.seed, filter_kind=args.filter, out=args.out)
    summary = run_experiment(cfg, max_workers=args.workers)
    print(f"Wrote {summary.output_dir / 'mospa.csv'} ({cfg.n_runs} runs, {summary.wall_time:.1f}s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tbdtrack", description="Track-before-detect PMB filter experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="RunConfig JSON file")
        p.add_argument("--out", help="output directory (defaults to the config's output_dir)")

    p = sub.add_parser("simulate", help="write truth and intensity frames")
    common(p)
    p.add_argument("--seed", type=_non_negative_int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run a filter over stored or freshly simulated frames")
    common(p)
    p.add_argument("--input", help="directory written by 'simulate'")
    p.add_argument("--seed", type=_non_negative_int)
    p.add_argument("--filter", choices=[k.value for k in FilterKind])
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="OSPA of stored estimates against stored truth")
    common(p)
    p.add_argument("--truth", required=True)
    p.add_argument("--estimates", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="end-to-end Monte Carlo experiment")
    common(p)
    p.add_argument("--runs", type=_positive_int)
    p.add_argument("--seed", type=_non_negative_int)
    p.add_argument("--filter", choices=[k.value for k in FilterKind])
    p.add_argument("--workers", type=_positive_int, default=settings.max_workers)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(settings.log_level)
    try:
        return args.func(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
