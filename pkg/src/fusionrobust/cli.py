"""Command-line entry point: verification suites, runs, sweeps, tables.

Subcommands:
  verify    run the analytical oracle-agreement suites
  run       train + evaluate per configured seed, write reports and figures
  sweep     compare all four training procedures on one task
  motivate  print the unbalanced-split error table for a scalar example

Exit codes: 0 success, 2 configuration error, 3 verification failure,
4 training divergence.  All delimited outputs are bit-deterministic for a
fixed config (floats serialized via repr, no timestamps).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .config import (
    ExperimentConfig,
    apply_overrides,
    config_to_dict,
    load_config,
    save_config,
)
from .corruption import (
    CorruptionSpec,
    default_tau,
    evaluate_robustness,
    make_task,
    write_report_json,
)
from .errors import ConfigurationError, FusionRobustError, TrainingDivergedError
from .linear import unbalanced_error_profile
from .models import build_conv_model, build_linear_model
from .training import ALGORITHMS, TrainConfig, fine_tune, train, write_trace_csv
from .verify import run_suites

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3
EXIT_DIVERGED = 4

SUMMARY_COLUMNS = (
    "algorithm",
    "fusion",
    "seed",
    "metric_kind",
    "source",
    "mean",
    "ci_low",
    "ci_high",
)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _build_model(config: ExperimentConfig, seed: int):
    task = config.task
    rng = np.random.default_rng(seed)
    if task.kind == "conv_classification":
        return build_conv_model(
            task.source_shapes,
            config.model.depths,
            rng,
            fusion=config.model.fusion,
            hidden=config.model.hidden,
            lel_l1_coeff=config.model.lel_l1_coeff,
        )
    if task.kind == "linear_regression":
        return build_linear_model(task.d1, task.d2, task.d3, rng)
    # nonlinear sources are flat vectors; a direct linear readout suffices
    # for the plumbing path (no shared split is tracked here)
    w1 = int(np.prod(task.source_shapes[0]))
    w2 = int(np.prod(task.source_shapes[1]))
    return build_linear_model(w1, w2, 0, rng)


def _corruption_specs(cc, sources) -> list[CorruptionSpec]:
    return [
        CorruptionSpec(
            kind=cc.kind,
            tau=default_tau(s),
            factor=cc.factor,
            keep_ratio=cc.keep_ratio,
            axis=cc.axis,
        )
        for s in sources
    ]


def run_single(config: ExperimentConfig, seed: int, out_dir: Path):
    """One seed: build, train, evaluate, write the per-seed directory.

    Returns (report, diverged_at) where diverged_at is None on success.
    Figures render only on success; the failure marker file records the
    iteration for partial-result bookkeeping.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set, val_set = make_task(config.task)
    graph = _build_model(config, seed)
    train_specs = _corruption_specs(config.train.corruption, train_set.sources)
    tc = TrainConfig(
        iterations=config.train.iterations,
        batch_size=config.train.batch_size,
        lr=config.train.lr,
        seed=seed,
        noise_per_sample=config.train.noise_per_sample,
    )
    diverged_at = None
    try:
        if config.train.mode == "fine_tune":
            result = fine_tune(
                graph,
                train_set,
                tc,
                config.train.algorithm,
                train_specs,
                config.train.n_clean,
                config.train.n_tune,
            )
        else:
            result = train(
                graph,
                train_set,
                tc,
                algorithm=config.train.algorithm,
                corruption=train_specs,
            )
    except TrainingDivergedError as exc:
        diverged_at = exc.iteration
        (out_dir / "FAILED").write_text(
            f"training diverged at iteration {exc.iteration}\n"
        )
        return None, diverged_at

    eval_specs = _corruption_specs(config.eval.corruption, train_set.sources)
    report = evaluate_robustness(
        graph,
        val_set,
        eval_specs,
        trials=config.eval.trials,
        confidence=config.eval.confidence,
    )

    write_trace_csv(result.trace, out_dir / "trace.csv")
    write_report_json(report, out_dir / "report.json")
    dc.save_checkpoint(graph, out_dir / "checkpoint")
    save_config(config, out_dir / "config.json")
    from .plots import render_robustness_figure, render_trace_figure

    render_trace_figure(result.trace, out_dir / "trace.png")
    render_robustness_figure(
        report,
        out_dir / "robustness.png",
        title=f"{config.train.algorithm} / {config.model.fusion} / seed {seed}",
    )
    return report, None


def _summary_rows(algorithm, fusion, seed, report):
    rows = []

    def row(metric_kind, source, mean, lo, hi):
        rows.append(
            (algorithm, fusion, str(seed), metric_kind, source, mean, lo, hi)
        )

    c = report.clean_metric
    row("clean", "", c.mean, c.ci_low, c.ci_high)
    for i, m in enumerate(report.per_source_metric):
        row("source_corrupted", str(i + 1), m.mean, m.ci_low, m.ci_high)
    a = report.asn_metric
    row("asn", "all", a.mean, a.ci_low, a.ci_high)
    row("min_metric", "", report.min_metric, float("nan"), float("nan"))
    row("max_diff_metric", "", report.max_diff_metric, float("nan"), float("nan"))
    return rows


def _provenance_lines(config: ExperimentConfig):
    blob = json.dumps(config_to_dict(config), sort_keys=True)
    return [f"# config: {blob}", f"# seeds: {','.join(str(s) for s in config.seeds)}"]


def _write_summary_csv(path, config, rows):
    lines = _provenance_lines(config)
    lines.append(",".join(SUMMARY_COLUMNS))
    for r in rows:
        lines.append(",".join(_fmt(x) for x in r))
    Path(path).write_text("\n".join(lines) + "\n")


def _aggregate_rows(algorithm, fusion, reports):
    """Median and mean rows across seeds for the headline metrics."""
    rows = []
    for metric_kind, values in (
        ("clean", [r.clean_metric.mean for r in reports]),
        ("min_metric", [r.min_metric for r in reports]),
        ("max_diff_metric", [r.max_diff_metric for r in reports]),
        ("asn", [r.asn_metric.mean for r in reports]),
    ):
        vals = np.asarray(values, dtype=np.float64)
        rows.append(
            (
                algorithm,
                fusion,
                "median",
                metric_kind,
                "",
                float(np.median(vals)),
                float("nan"),
                float("nan"),
            )
        )
        rows.append(
            (
                algorithm,
                fusion,
                "mean",
                metric_kind,
                "",
                float(vals.mean()),
                float("nan"),
                float("nan"),
            )
        )
    return rows


def cmd_run(config: ExperimentConfig) -> int:
    out_root = Path(config.output)
    out_root.mkdir(parents=True, exist_ok=True)
    rows = []
    reports = []
    any_diverged = False
    for seed in config.seeds:
        report, diverged_at = run_single(config, seed, out_root / f"seed_{seed}")
        if diverged_at is not None:
            any_diverged = True
            print(f"seed {seed}: diverged at iteration {diverged_at}", file=sys.stderr)
            continue
        reports.append(report)
        rows.extend(
            _summary_rows(config.train.algorithm, config.model.fusion, seed, report)
        )
    if reports:
        rows.extend(_aggregate_rows(config.train.algorithm, config.model.fusion, reports))
    _write_summary_csv(out_root / "summary.csv", config, rows)
    for report in reports[:1]:
        print(
            f"{config.train.algorithm}/{config.model.fusion}: "
            f"clean={report.clean_metric.mean:.4f} min={report.min_metric:.4f} "
            f"maxdiff={report.max_diff_metric:.4f}"
        )
    return EXIT_DIVERGED if any_diverged else EXIT_OK


def cmd_sweep(config: ExperimentConfig) -> int:
    """All four procedures on the configured task, one summary table."""
    out_root = Path(config.output)
    out_root.mkdir(parents=True, exist_ok=True)
    rows = []
    table = {}
    any_diverged = False
    for algorithm in ALGORITHMS:
        cfg = dataclasses.replace(
            config,
            train=dataclasses.replace(config.train, algorithm=algorithm),
            output=str(out_root / algorithm),
        )
        reports = []
        for seed in cfg.seeds:
            report, diverged_at = run_single(cfg, seed, Path(cfg.output) / f"seed_{seed}")
            if diverged_at is not None:
                any_diverged = True
                continue
            reports.append(report)
            rows.extend(_summary_rows(algorithm, cfg.model.fusion, seed, report))
        if reports:
            rows.extend(_aggregate_rows(algorithm, cfg.model.fusion, reports))
            table[algorithm] = {
                "clean": float(np.median([r.clean_metric.mean for r in reports])),
                "asn": float(np.median([r.asn_metric.mean for r in reports])),
                "ssn_min": float(np.median([r.min_metric for r in reports])),
                "ssn_maxdiff": float(np.median([r.max_diff_metric for r in reports])),
            }
    _write_summary_csv(out_root / "summary.csv", config, rows)
    header = f"{'algorithm':<10} {'clean':>10} {'asn':>10} {'ssn_min':>10} {'maxdiff':>10}"
    print(header)
    for algorithm, cells in table.items():
        print(
            f"{algorithm:<10} {cells['clean']:>10.4f} {cells['asn']:>10.4f} "
            f"{cells['ssn_min']:>10.4f} {cells['ssn_maxdiff']:>10.4f}"
        )
    return EXIT_DIVERGED if any_diverged else EXIT_OK


def cmd_verify(suite: str, mutate: bool = False) -> int:
    reports = run_suites(suite, mutate=mutate)
    ok = True
    for report in reports:
        for line in report.lines():
            print(line)
        ok = ok and report.passed
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_motivate(sigma: float = 1.0) -> int:
    """Unbalanced-split error table for the scalar example c1=c2=1, c3=10."""
    c1, c2, c3 = 1.0, 1.0, 10.0
    print(f"c1={c1} c2={c2} c3={c3} sigma={sigma}")
    print(f"{'delta':>8} {'rms_src1':>10} {'rms_src2':>10} {'ratio':>8}")
    for delta in (0.1, 0.5, 1.0, 2.0, 5.0, 8.0, 9.0, 9.5, 9.9):
        r1, r2 = unbalanced_error_profile(c1, c2, c3, delta, sigma)
        ratio = r2 / r1 if r1 > 0 else float("inf") if r2 > 0 else 1.0
        print(f"{delta:>8.2f} {r1:>10.4f} {r2:>10.4f} {ratio:>8.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fusionrobust",
        description="multi-source fusion robustness experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run analytical verification suites")
    p_verify.add_argument(
        "--suite",
        default="all",
        choices=["linear", "adversarial", "gradients", "all"],
    )
    p_verify.add_argument(
        "--mutate",
        action="store_true",
        help="perturb the quantities under test to confirm suite sensitivity",
    )

    for name, text in (("run", "train and evaluate"), ("sweep", "compare algorithms")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, action="append", help="override seeds")
        p.add_argument("--out", help="override output directory")
        p.add_argument("--trials", type=int, help="override evaluation trials")

    p_mot = sub.add_parser("motivate", help="unbalanced-split error table")
    p_mot.add_argument("--sigma", type=float, default=1.0)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, mutate=args.mutate)
        if args.command == "motivate":
            return cmd_motivate(args.sigma)
        config = load_config(args.config)
        config = apply_overrides(
            config, seeds=args.seed, out=args.out, trials=args.trials
        )
        if args.command == "run":
            return cmd_run(config)
        return cmd_sweep(config)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FusionRobustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
