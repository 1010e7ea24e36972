"""Command-line entry point: verify, train, grad-study, ablate.

Exit codes: 0 success, 1 check/run failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import replace
from pathlib import Path

from .charts import write_log_line_chart
from .config import ExperimentConfig, load_config
from .errors import ConfigError, VetoKDError
from .estimator import build_student
from .policy import make_teacher
from .training import (
    METRICS_CSV_COLUMNS,
    GridCell,
    MetricsRecord,
    compare_objectives,
    train,
)
from .verify import SUITE_BUILDERS, run_suites, write_report

GRAD_STUDY_CSV_COLUMNS = ("step", "beta", "objective", "max_grad_ignorant", "n_ignorant")
ABLATE_CSV_COLUMNS = ("label", "objective", "schedule", "beta_init", "final_accuracy",
                      "max_grad_ignorant", "final_entropy", "final_kl_to_teacher")


def _fmt(value) -> str:
    # repr round-trips floats exactly, keeping reruns byte-identical.
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _metrics_rows(records: list[MetricsRecord]):
    return [{c: getattr(r, c) for c in METRICS_CSV_COLUMNS} for r in records]


def _say(quiet: bool, *parts) -> None:
    if not quiet:
        print(*parts)


def _load(args) -> tuple[ExperimentConfig, Path]:
    config = load_config(args.config)
    out_dir = Path(args.out if args.out else (config.out_dir or "vetokd_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.seed is not None:
        config.seeds = [args.seed]
    return config, out_dir


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    reports = run_suites(args.suite)
    out_dir = Path(args.out) if args.out else Path("vetokd_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "verify_report.txt"
    write_report(reports, report_path)
    for report in reports:
        _say(args.quiet, report.summary())
    ok = all(r.passed for r in reports)
    _say(args.quiet, f"report: {report_path} ({time.perf_counter() - t0:.1f}s)")
    return 0 if ok else 1


def cmd_train(args) -> int:
    config, out_dir = _load(args)
    teacher = make_teacher(config.task, config.policy.smoothing)
    single = len(config.seeds) == 1
    summary_lines = []
    for seed in config.seeds:
        train_config = replace(config.train, seed=seed)
        student = build_student(config.task, init=config.policy.init,
                                init_range=config.policy.init_range,
                                init_seed=config.policy.init_seed)
        records, policy = train(student, teacher, config.task, train_config)
        tag = "" if single else f"_seed{seed}"
        _write_csv(out_dir / f"metrics{tag}.csv", METRICS_CSV_COLUMNS, _metrics_rows(records))
        policy.save(out_dir / f"policy{tag}.bin")
        summary_lines += [
            f"seed={seed} objective={train_config.objective} steps={train_config.total_steps}",
            f"seed={seed} final_loss={records[-1].loss!r}",
            f"seed={seed} final_accuracy={records[-1].accuracy!r}",
            f"seed={seed} max_grad_ignorant={max(r.max_grad_ignorant for r in records)!r}",
            f"seed={seed} wall_ms={sum(r.ms for r in records):.1f}",
        ]
        _say(args.quiet, f"seed {seed}: final accuracy {records[-1].accuracy:.4f}, "
                         f"metrics -> {out_dir / f'metrics{tag}.csv'}")
    (out_dir / "summary.txt").write_text("\n".join(summary_lines) + "\n", encoding="utf-8")
    return 0


def cmd_grad_study(args) -> int:
    config, out_dir = _load(args)
    teacher = make_teacher(config.task, config.policy.smoothing)
    seed = config.seeds[0]

    def fresh():
        return build_student(config.task, init=config.policy.init,
                             init_range=config.policy.init_range,
                             init_seed=config.policy.init_seed)

    rows = []
    series = {}
    maxima = {}
    for objective in ("forward_std", "forward_veto"):
        train_config = replace(config.train, objective=objective, seed=seed)
        records, _ = train(fresh(), teacher, config.task, train_config)
        for r in records:
            rows.append({"step": r.step, "beta": r.beta, "objective": objective,
                         "max_grad_ignorant": r.max_grad_ignorant, "n_ignorant": r.n_ignorant})
        series[objective] = ([r.step for r in records],
                             [r.max_grad_ignorant for r in records])
        maxima[objective] = max(r.max_grad_ignorant for r in records)

    _write_csv(out_dir / "grad_study.csv", GRAD_STUDY_CSV_COLUMNS, rows)
    write_log_line_chart(out_dir / "grad_study.svg", series,
                         title="max ignorant-token gradient per step",
                         x_label="step", y_label="|d loss / d P_S(y)|")
    ratio = (maxima["forward_std"] / maxima["forward_veto"]
             if maxima["forward_veto"] > 0 else float("inf"))
    ceiling_ok = maxima["forward_veto"] < config.grad_ceiling
    (out_dir / "grad_study_summary.txt").write_text(
        f"max_forward_std={maxima['forward_std']!r}\n"
        f"max_forward_veto={maxima['forward_veto']!r}\n"
        f"suppression_ratio={ratio!r}\n"
        f"veto_below_ceiling_{config.grad_ceiling:g}={ceiling_ok}\n",
        encoding="utf-8")
    _say(args.quiet, f"suppression ratio {ratio:.1f}, veto max {maxima['forward_veto']:.2f} "
                     f"(ceiling {config.grad_ceiling:g}), -> {out_dir / 'grad_study.csv'}")
    return 0


def _render_table(columns, rows) -> str:
    cells = [[_fmt(row[c]) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) if cells else len(c)
              for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    config, out_dir = _load(args)
    teacher = make_teacher(config.task, config.policy.smoothing)
    seed = config.seeds[0]
    train_config = replace(config.train, seed=seed)

    def fresh():
        return build_student(config.task, init=config.policy.init,
                             init_range=config.policy.init_range,
                             init_seed=config.policy.init_seed)

    cells = [GridCell(config.ablate.objective, schedule_kind=kind, beta_init=beta)
             for beta in config.ablate.beta_values
             for kind in config.ablate.schedules]
    rows = compare_objectives(config.task, teacher, train_config, cells, fresh)
    _write_csv(out_dir / "ablate.csv", ABLATE_CSV_COLUMNS, rows)
    table = _render_table(ABLATE_CSV_COLUMNS, rows)
    (out_dir / "ablate.txt").write_text(table, encoding="utf-8")
    _say(args.quiet, table.rstrip("\n"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vetokd",
                                     description="On-policy distillation sandbox")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the numerical check suites")
    p.add_argument("suite", nargs="?", default="all",
                   choices=["all", *SUITE_BUILDERS.keys()])
    p.add_argument("--out", default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_verify)

    for name, func in (("train", cmd_train), ("grad-study", cmd_grad_study),
                       ("ablate", cmd_ablate)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--quiet", action="store_true")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VetoKDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
