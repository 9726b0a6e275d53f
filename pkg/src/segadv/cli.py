"""Command-line entry point: ``segadv <subcommand> ...``.

Precedence for every setting is: explicit flag, then ``--set key=value``,
then the ``--config`` file, then the built-in default. Relative output paths
are placed under the output directory (``--out-dir``, config ``out_dir``,
``$SEGADV_OUT_DIR``, or the working directory, in that order).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .analysis import (
    Oracle,
    SegmentSampler,
    correlation_study,
    default_estimators,
    fit_value_head,
)
from .bias_lab import BIAS_CSV_COLUMNS, report_row, run_grid
from .config import ConfigError, RunConfig, load_config, resolve_out_dir, set_value
from .core import ValidationError, value_series
from .env import Policy
from .estimators import EstimatorKind, estimate
from .io import iter_trajectories, read_jsonl, write_csv, write_jsonl
from .segmentation import SegMethod, avg_segment_length, boundary_count_histogram, segment
from .trainer import METRIC_COLUMNS, ValueHead, train

log = logging.getLogger("segadv")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 2 with a structured message
        self.print_usage(sys.stderr)
        _report("usage", message)
        raise SystemExit(2)


def _report(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------


def _config(args: argparse.Namespace, flag_map: dict[str, str]) -> RunConfig:
    config = load_config(args.config)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        set_value(config, key.strip(), raw)
    for dest, dotted in flag_map.items():
        value = getattr(args, dest, None)
        if value is not None:
            set_value(config, dotted, json.dumps(value))
    return config


def _out_path(config: RunConfig, args: argparse.Namespace, name: str | None) -> Path | None:
    if name is None:
        return None
    path = Path(name)
    if not path.is_absolute():
        path = resolve_out_dir(config, args.out_dir) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


_SEG_FLAGS = {"seg_method": "segmentation.method", "p": "segmentation.p", "M": "segmentation.M",
              "delimiters": "segmentation.delimiters"}
_EST_FLAGS = {"estimator": "estimator.kind", "lam": "estimator.lambda",
              "adaptive_coeff": "estimator.adaptive_coeff", **_SEG_FLAGS}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_estimate(args: argparse.Namespace) -> int:
    config = _config(args, _EST_FLAGS)
    spec = config.estimator_spec()
    records = read_jsonl(args.input)
    parsed = list(iter_trajectories(records))
    rewards = np.array([t.reward for t, _ in parsed])
    out = []
    for i, (rec, (traj, values)) in enumerate(zip(records, parsed)):
        if spec.kind is EstimatorKind.GRPO:
            g = i // args.group_size
            members = rewards[g * args.group_size:(g + 1) * args.group_size]
            adv = estimate(traj, None, spec, group_rewards=members, group_index=i - g * args.group_size)
        else:
            if values is None:
                raise ValidationError(f"line {i + 1}: estimator {spec.kind.value} needs 'values'")
            adv = estimate(traj, value_series(traj, values), spec)
        out.append({**rec, "advantages": adv.tolist()})
    write_jsonl(_out_path(config, args, args.output), out)
    return 0


def cmd_segment(args: argparse.Namespace) -> int:
    config = _config(args, _SEG_FLAGS)
    trajs = [t for t, _ in iter_trajectories(read_jsonl(args.input))]
    seg = config.segmentation.build()
    out = []
    records = read_jsonl(args.input)
    for rec, traj in zip(records, trajs):
        out.append({**rec, "boundaries": list(segment(traj, seg).positions)})
    if args.output:
        write_jsonl(_out_path(config, args, args.output), out)
    if args.summary:
        thresholds = args.p_sweep if args.p_sweep else [seg.p]
        rows = []
        for p in thresholds:
            cfg = seg if seg.method is not SegMethod.PROBABILITY else \
                type(seg)(SegMethod.PROBABILITY, p, seg.M, seg.delimiters)
            sets = [segment(t, cfg) for t in trajs]
            hist = boundary_count_histogram(sets)
            rows.append([
                seg.method.value,
                p if seg.method is SegMethod.PROBABILITY else "",
                avg_segment_length(sets),
                len(sets),
                ";".join(f"{k}:{v}" for k, v in hist.items()),
            ])
        write_csv(_out_path(config, args, args.summary),
                  ["method", "threshold", "mean_segment_length", "n_trajectories",
                   "boundary_count_histogram"], rows)
    return 0


def cmd_bias_lab(args: argparse.Namespace) -> int:
    config = _config(args, {
        "T": "bias_lab.T", "M": "bias_lab.M", "lam": "bias_lab.lambda", "alpha": "bias_lab.alpha",
        "beta": "bias_lab.beta", "pattern": "bias_lab.patterns", "n_seeds": "bias_lab.n_seeds",
        "seed": "seed",
    })
    grid = config.bias_lab.build(config.seed)
    rows = (report_row(report) for report, _ in run_grid(grid))
    write_csv(_out_path(config, args, args.output), BIAS_CSV_COLUMNS, rows)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _config(args, {"seed": "seed", "max_updates": "ppo.max_updates",
                            "actor_lr": "ppo.actor_lr", **_EST_FLAGS})
    env = config.env.build()
    metrics = train(env, config.ppo_config(), threads=args.threads)
    header = list(METRIC_COLUMNS) + (["wall_clock_s"] if args.timing else [])
    rows = []
    for row, wall in zip(metrics.rows, metrics.wall_clock):
        rows.append([row[c] for c in METRIC_COLUMNS] + ([wall] if args.timing else []))
    write_csv(_out_path(config, args, args.output), header, rows)
    steps = metrics.steps_to_threshold(config.ppo.target_success)
    log.info("steps to expected success %.2f: %s", config.ppo.target_success, steps)
    return 0


def _study_head(config: RunConfig, env, policy: Policy) -> ValueHead:
    vh = config.analysis.value_head
    head = ValueHead(env.T, features=vh.features, bucket=vh.bucket, use_flag=vh.use_flag,
                     degree=vh.degree)
    return fit_value_head(env, policy, head, vh.fit_updates, vh.fit_rollouts, vh.lr, config.seed)


def cmd_correlate(args: argparse.Namespace) -> int:
    config = _config(args, {
        "lambda_sweep": "analysis.lambda_sweep", "p_sweep": "analysis.p_sweep",
        "oracle": "analysis.oracle", "mc_rollouts": "analysis.mc_rollouts",
        "n_seeds": "analysis.n_seeds", "seed": "seed",
    })
    a = config.analysis
    env = config.env.build()
    policy = Policy.with_correct_prob(env, a.correct_prob)
    head = _study_head(config, env, policy)
    estimators = default_estimators(a.lambda_sweep, a.p_sweep, a.sae_lambda)
    sampler = SegmentSampler(a.segments_per_traj, a.overlap)
    seeds = range(config.seed, config.seed + a.n_seeds)
    rows, reports = correlation_study(env, policy, head, estimators, sampler, seeds, a.n_traj,
                                      a.group_size, Oracle(a.oracle), a.mc_rollouts)
    write_csv(_out_path(config, args, args.output),
              ["estimator", "param", "seed", "pearson_r", "n_points"],
              ([r.estimator, r.param, r.seed, r.pearson_r, r.n_points] for r in rows))
    if args.summary:
        write_csv(_out_path(config, args, args.summary),
                  ["estimator", "param", "oracle", "mean_pearson_r", "se", "n_seeds", "n_points",
                   "n_missing"],
                  ([r.estimator, r.param, r.oracle, r.pearson_r, r.se, r.n_seeds, r.n_points,
                    r.n_missing] for r in reports))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. ppo.actor_lr=10 (repeatable)")
    p.add_argument("--out-dir", help="directory for relative output paths")
    p.add_argument("--threads", type=int, default=1, help="rollout worker threads (1 = reference)")


def _seg_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seg-method", choices=[m.value for m in SegMethod])
    p.add_argument("--p", type=float, help="probability threshold")
    p.add_argument("--M", type=int, help="uniform segment length")
    p.add_argument("--delimiters", type=_ints, help="comma-separated delimiter token ids")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="segadv", description="Segmental advantage estimation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("estimate", help="per-token advantages for trajectory JSONL")
    _common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--estimator", choices=[k.value for k in EstimatorKind])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--adaptive-coeff", type=float)
    p.add_argument("--group-size", type=int, default=8, help="consecutive records per GRPO group")
    _seg_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("segment", help="boundary sets and segment-length statistics")
    _common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output")
    p.add_argument("--summary", help="CSV with mean segment length per threshold")
    p.add_argument("--p-sweep", type=_floats, help="thresholds for the summary CSV")
    _seg_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("bias-lab", help="empirical bias vs the uniform-segmentation bound")
    _common(p)
    p.add_argument("--out", dest="output", default="bias_lab.csv")
    p.add_argument("--T", type=_ints)
    p.add_argument("--M", type=_ints)
    p.add_argument("--lambda", dest="lam", type=_floats)
    p.add_argument("--alpha", type=_floats)
    p.add_argument("--beta", type=_floats)
    p.add_argument("--pattern", type=lambda s: s.split(","))
    p.add_argument("--n-seeds", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_bias_lab)

    p = sub.add_parser("train", help="PPO on the junction environment")
    _common(p)
    p.add_argument("--out", dest="output", default="metrics.csv")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-updates", type=int)
    p.add_argument("--actor-lr", type=float)
    p.add_argument("--estimator", choices=[k.value for k in EstimatorKind])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--adaptive-coeff", type=float)
    p.add_argument("--timing", action="store_true", help="add a wall-clock column")
    _seg_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("correlate", help="correlation of estimators with the reference advantage")
    _common(p)
    p.add_argument("--out", dest="output", default="correlation.csv")
    p.add_argument("--summary", help="CSV with mean r and standard error per estimator")
    p.add_argument("--lambda-sweep", type=_floats)
    p.add_argument("--p-sweep", type=_floats)
    p.add_argument("--oracle", choices=[o.value for o in Oracle])
    p.add_argument("--mc-rollouts", type=int)
    p.add_argument("--n-seeds", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_correlate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        _report("usage", "a subcommand is required")
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func: Callable[[argparse.Namespace], int] = args.func
    try:
        return func(args)
    except ConfigError as exc:
        _report("config", str(exc))
        return 2
    except (ValidationError, OSError) as exc:
        _report(type(exc).__name__, str(exc))
        return 1
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        log.debug("unhandled error", exc_info=True)
        _report(type(exc).__name__, str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
