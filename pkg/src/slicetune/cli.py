"""Command-line entry point.

Example:
    tune --space space.json --workload workload.json --method water \\
         --executor sim:1 --budget-s 5000 --seed 7 --out runs/water-7
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .session import METHODS, SessionConfig, run_session


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tune",
        description="Workload-adaptive database knob tuning over a simulated or external executor.",
    )
    p.add_argument("--space", required=True, help="knob-space JSON file")
    p.add_argument("--workload", required=True, help="workload JSON file")
    p.add_argument("--method", choices=METHODS, default="water")
    p.add_argument(
        "--executor",
        default="sim:0",
        help="sim:SEED for the deterministic simulator, external:HOST:PORT for a controller",
    )
    budget = p.add_mutually_exclusive_group(required=True)
    budget.add_argument("--budget-s", type=float, help="budget in simulated seconds")
    budget.add_argument("--slices", type=int, help="budget as a slice count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory for trace.csv and report.json")
    p.add_argument("--eta0", type=float, default=0.75)
    p.add_argument("--eta-step", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--quota", type=int, default=20)
    p.add_argument("--lhs-floor", type=int, default=10)
    p.add_argument("--explore-prune-factor", type=float, default=1.2)
    p.add_argument(
        "--initial-strategy",
        choices=("random", "coverage"),
        default="coverage",
        help="cold-start subset strategy for the adaptive method",
    )
    p.add_argument("--n-trees", type=int, default=100)
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("TUNE_LOG_LEVEL", "WARNING"),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    cfg = SessionConfig(
        space_path=args.space,
        workload_path=args.workload,
        executor=args.executor,
        method=args.method,
        budget_s=args.budget_s,
        max_slices=args.slices,
        seed=args.seed,
        out_dir=args.out,
        eta0=args.eta0,
        eta_step=args.eta_step,
        beta=args.beta,
        alpha=args.alpha,
        quota=args.quota,
        lhs_floor=args.lhs_floor,
        explore_prune_factor=args.explore_prune_factor,
        initial_strategy=args.initial_strategy,
        n_trees=args.n_trees,
    )
    result = run_session(cfg)
    report = result.report
    print(
        f"method={report['method']} best={report['best_full_latency_s']:.3f}s "
        f"default={report['default_full_latency_s']:.3f}s "
        f"elapsed={report['elapsed_s']:.1f}s evaluations={report['evaluations']}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
