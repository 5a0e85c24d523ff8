"""Command line interface.

Subcommands: train, ablate, sweep-eps, sweep-ema, replay, report, validate.
Exit codes: 0 success, 1 configuration error, 2 numerical failure or failed
validation, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import __version__
from . import _kernels as K
from .checkpoint import load_checkpoint
from .config import MODES, TrainConfig, load_config
from .core import ConfigError, NumericalError
from .metrics import read_summary, validate_run_dir, write_confusion, write_summary
from .reporting import (
    ABLATION_COLUMNS,
    TRAJECTORY_COLUMNS,
    ablation_table,
    export_trajectory,
    format_table,
    write_csv_table,
)
from .trainer import evaluate, train


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def _base_config(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "mode", None) is not None:
        cfg = dataclasses.replace(cfg, mode=args.mode)
    if getattr(args, "iterations", None) is not None:
        cfg = dataclasses.replace(cfg, iterations=args.iterations)
    return cfg


def _print_run(result) -> None:
    print(
        f"mode={result.config.mode} seed={result.config.seed} "
        f"iterations={result.iteration}/{result.config.iterations} "
        f"backend={K.ACTIVE_BACKEND} accuracy={result.final_accuracy:.4f}"
    )


def cmd_train(args) -> int:
    cfg = _base_config(args)
    result = train(cfg, out_dir=args.out, resume_from=args.resume, stop_after=args.stop_after)
    _print_run(result)
    return 0


def cmd_ablate(args) -> int:
    cfg = _base_config(args)
    seeds = args.seeds if args.seeds else [cfg.seed]
    summaries = []
    for mode in MODES:
        for seed in seeds:
            run_cfg = dataclasses.replace(cfg, mode=mode, seed=seed)
            run_dir = os.path.join(args.out, f"{mode}_seed{seed}") if args.out else None
            result = train(run_cfg, out_dir=run_dir)
            _print_run(result)
            summaries.append(result.summary)
    rows = ablation_table(summaries)
    print(format_table(rows, ABLATION_COLUMNS))
    if args.out:
        write_csv_table(os.path.join(args.out, "ablation.csv"), rows, ABLATION_COLUMNS)
    return 0


EPS_SWEEP_COLUMNS = (
    "eps_weak",
    "eps_strong",
    "accuracy_pct",
    "quantity_pct",
    "quality_pct",
    "anchors_skipped_total",
)


def cmd_sweep_eps(args) -> int:
    cfg = _base_config(args)
    if not cfg.use_contrastive:
        cfg = dataclasses.replace(cfg, mode="full")
    eps_weak_grid = args.eps_weak if args.eps_weak else [0.5, 0.8]
    eps_strong_grid = args.eps_strong if args.eps_strong else [round(0.1 * k, 1) for k in range(1, 9)]
    rows = []
    for ew in eps_weak_grid:
        for es in eps_strong_grid:
            run_cfg = dataclasses.replace(
                cfg,
                contrastive=dataclasses.replace(cfg.contrastive, eps_weak=ew, eps_strong=es),
            )
            run_dir = os.path.join(args.out, f"eps_{ew}_{es}") if args.out else None
            result = train(run_cfg, out_dir=run_dir)
            _print_run(result)
            rows.append(
                {
                    "eps_weak": ew,
                    "eps_strong": es,
                    "accuracy_pct": result.summary["final_accuracy"] * 100.0,
                    "quantity_pct": result.summary["mean_quantity_last_tenth"] * 100.0,
                    "quality_pct": result.summary["mean_quality_last_tenth"] * 100.0,
                    "anchors_skipped_total": result.summary["anchors_skipped_total"],
                }
            )
    print(format_table(rows, EPS_SWEEP_COLUMNS))
    if args.out:
        write_csv_table(os.path.join(args.out, "sweep_eps.csv"), rows, EPS_SWEEP_COLUMNS)
    return 0


EMA_SWEEP_COLUMNS = ("decay", "accuracy_pct", "final_tau")


def cmd_sweep_ema(args) -> int:
    cfg = _base_config(args)
    if not cfg.adaptive_thresholds:
        cfg = dataclasses.replace(cfg, mode="full")
    decays = args.decays if args.decays else [0.9, 0.99, 0.999, 0.9999]
    rows = []
    for decay in decays:
        run_cfg = dataclasses.replace(
            cfg, thresholds=dataclasses.replace(cfg.thresholds, ema_decay=decay)
        )
        run_dir = os.path.join(args.out, f"decay_{decay}") if args.out else None
        result = train(run_cfg, out_dir=run_dir)
        _print_run(result)
        rows.append(
            {
                "decay": decay,
                "accuracy_pct": result.summary["final_accuracy"] * 100.0,
                "final_tau": result.summary["final_tau"],
            }
        )
    accs = [r["accuracy_pct"] for r in rows]
    print(format_table(rows, EMA_SWEEP_COLUMNS, floatfmt="{:.4f}"))
    print(f"accuracy span: {max(accs) - min(accs):.4f} points")
    if args.out:
        write_csv_table(os.path.join(args.out, "sweep_ema.csv"), rows, EMA_SWEEP_COLUMNS)
    return 0


def cmd_replay(args) -> int:
    from .trainer import build_dataset

    ckpt = load_checkpoint(args.checkpoint)
    network, _, shadow, _, _ = ckpt.restore()
    _, eval_x, eval_y = build_dataset(ckpt.config)
    accuracy, confusion = evaluate(shadow.snapshot_network(ckpt.arch), eval_x, eval_y)
    raw_accuracy, _ = evaluate(network, eval_x, eval_y)
    print(
        f"checkpoint at iteration {ckpt.iteration}: "
        f"shadow accuracy={accuracy:.4f} raw accuracy={raw_accuracy:.4f}"
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_confusion(os.path.join(args.out, "confusion.csv"), confusion)
        write_summary(
            os.path.join(args.out, "replay.json"),
            {
                "iteration": ckpt.iteration,
                "shadow_accuracy": accuracy,
                "raw_accuracy": raw_accuracy,
            },
        )
    return 0


def cmd_report(args) -> int:
    summary = read_summary(os.path.join(args.run, "summary.json"))
    for key in sorted(summary):
        print(f"{key}: {summary[key]}")
    out_path = args.out or os.path.join(args.run, "trajectory.csv")
    rows = export_trajectory(args.run, out_path)
    print(f"trajectory ({len(rows)} iterations) written to {out_path}")
    return 0


def cmd_validate(args) -> int:
    errors = validate_run_dir(args.run)
    if errors:
        for err in errors:
            print(f"INVARIANT VIOLATION: {err}", file=sys.stderr)
        return 2
    print(f"run {args.run}: all metric invariants hold")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptmatch",
        description="semi-supervised training with self-adjusting pseudo-label thresholds",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_out=True):
        p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        if with_out:
            p.add_argument("--out", help="directory for run artifacts")

    p_train = sub.add_parser("train", help="run one training session")
    add_common(p_train)
    p_train.add_argument("--mode", choices=MODES, help="override the config mode")
    p_train.add_argument("--iterations", type=int, help="override the configured iterations")
    p_train.add_argument("--resume", help="checkpoint to continue from")
    p_train.add_argument("--stop-after", type=int, dest="stop_after",
                         help="run at most this many iterations this session")
    p_train.set_defaults(func=cmd_train)

    p_ablate = sub.add_parser("ablate", help="run all four modes over a seed list")
    add_common(p_ablate)
    p_ablate.add_argument("--seeds", type=_ints, help="comma-separated seeds")
    p_ablate.set_defaults(func=cmd_ablate)

    p_eps = sub.add_parser("sweep-eps", help="grid over the positive-set cutoffs")
    add_common(p_eps)
    p_eps.add_argument("--eps-weak", type=_floats, dest="eps_weak",
                       help="comma-separated weak-view cutoffs")
    p_eps.add_argument("--eps-strong", type=_floats, dest="eps_strong",
                       help="comma-separated strong-view cutoffs")
    p_eps.set_defaults(func=cmd_sweep_eps)

    p_ema = sub.add_parser("sweep-ema", help="sweep the global threshold decay")
    add_common(p_ema)
    p_ema.add_argument("--decays", type=_floats, help="comma-separated decay values")
    p_ema.set_defaults(func=cmd_sweep_ema)

    p_replay = sub.add_parser("replay", help="re-evaluate a checkpoint")
    p_replay.add_argument("--checkpoint", required=True)
    p_replay.add_argument("--out", help="directory for replay artifacts")
    p_replay.set_defaults(func=cmd_replay)

    p_report = sub.add_parser("report", help="print a run summary and export its trajectory")
    p_report.add_argument("--run", required=True, help="run directory")
    p_report.add_argument("--out", help="trajectory CSV path")
    p_report.set_defaults(func=cmd_report)

    p_validate = sub.add_parser("validate", help="re-check metric invariants of a run")
    p_validate.add_argument("--run", required=True, help="run directory")
    p_validate.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
