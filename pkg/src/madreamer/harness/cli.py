"""Command-line interface.

Subcommands: train, eval, compare, plot, divergence.  Environment overrides:
MADREAMER_OUT prefixes relative output directories, MADREAMER_THREADS caps
BLAS threads (set before numpy loads).  Exit code 0 only when the requested
postconditions hold.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _apply_thread_env():
    threads = os.environ.get("MADREAMER_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def _resolve_out(path: str) -> str:
    root = os.environ.get("MADREAMER_OUT")
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="madreamer",
        description="Multi-agent latent-imagination RL on 2D soccer tasks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training experiment")
    p_train.add_argument("--config", required=True, help="path to a config JSON")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_train.add_argument("--out", default=None, help="override the output directory")

    p_eval = sub.add_parser("eval", help="evaluate a finished run greedily")
    p_eval.add_argument("--run", required=True)
    p_eval.add_argument("--episodes", type=int, default=50)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--checkpoint", default="best", choices=("best", "last"))

    p_cmp = sub.add_parser("compare", help="ordering table over finished runs")
    p_cmp.add_argument("runs", nargs="+")
    p_cmp.add_argument("--out", default=None, help="write the JSON report here")

    p_plot = sub.add_parser("plot", help="emit SVG+CSV figures for a run")
    p_plot.add_argument("--run", required=True)

    p_div = sub.add_parser("divergence", help="measure naive-vs-shared rollout divergence")
    p_div.add_argument("--run", required=True)
    p_div.add_argument("--horizon", type=int, default=15)
    p_div.add_argument("--starts", type=int, default=500)
    p_div.add_argument("--episodes", type=int, default=8)
    p_div.add_argument("--seed", type=int, default=1234)
    return parser


def main(argv=None) -> int:
    _apply_thread_env()
    args = build_parser().parse_args(argv)

    if args.command == "train":
        from .config import load_config
        from .train import train
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        cfg.out_dir = _resolve_out(cfg.out_dir)
        run_dir = train(cfg)
        print(f"run complete: {run_dir}")
        return 0

    if args.command == "eval":
        from .evaluate import evaluate
        stats = evaluate(args.run, n_episodes=args.episodes, seed=args.seed,
                         checkpoint=args.checkpoint)
        print(json.dumps({k: stats[k] for k in
                          ("mean_social", "std_social", "mean_per_agent",
                           "correct_goal_rate", "wrong_goal_rate", "n_episodes")},
                         indent=2))
        return 0

    if args.command == "compare":
        from .compare import compare
        report = compare(args.runs)
        print(report["table"])
        if args.out:
            with open(_resolve_out(args.out), "w") as f:
                json.dump(report, f, indent=2)
        return 0

    if args.command == "plot":
        from .plots import emit_plots
        paths = emit_plots(args.run)
        for p in paths:
            print(p)
        return 0

    if args.command == "divergence":
        from .divergence import measure_divergence
        result = measure_divergence(args.run, horizon=args.horizon,
                                    n_starts=args.starts, n_episodes=args.episodes,
                                    seed=args.seed)
        print(json.dumps({k: result[k] for k in
                          ("naive_at_horizon", "shared_at_horizon",
                           "bootstrap_p_naive_not_greater")}, indent=2))
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
