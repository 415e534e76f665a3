"""Scenario runner CLI.

    btkeylab run scenario.json [--trace-out t.btsnoop] [--report-out r.jsonl]
    btkeylab matrix scenarios/matrix/ [--report-out m.jsonl]
    btkeylab --list-profiles

Exit status: 0 when no compliance violation was found, 1 when at least one
check reported a violation, 2 on configuration or usage errors. Writing a
report also renders a figure next to it unless --no-figure is given.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import report as report_mod
from .compliance import verdict_matrix
from .engine import run_scenario
from .profiles import UnknownProfileError, builtin_profiles
from .scenario import ConfigError, ScenarioConfig, load_config
from .trace import write_trace


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="btkeylab",
        description="deterministic Bluetooth key-mismatch simulator and compliance lab",
    )
    parser.add_argument(
        "--list-profiles", action="store_true", help="list built-in stack profiles and exit"
    )
    sub = parser.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="execute one scenario config")
    run_p.add_argument("config", type=Path)
    run_p.add_argument("--trace-out", type=Path, help="btsnoop output path (overrides config)")
    run_p.add_argument("--report-out", type=Path, help="JSONL verdict report path (overrides config)")
    run_p.add_argument("--figure-out", type=Path, help="figure path (default: report path with .png)")
    run_p.add_argument("--no-figure", action="store_true", help="skip figure rendering")
    run_p.add_argument("--seed-override", type=int, help="replace the config's seed")

    matrix_p = sub.add_parser("matrix", help="run every scenario in a directory against all profiles")
    matrix_p.add_argument("directory", type=Path)
    matrix_p.add_argument("--profiles", help="comma-separated profile names (default: all built-ins)")
    matrix_p.add_argument("--report-out", type=Path, help="JSONL report path for all cells")
    matrix_p.add_argument("--figure-out", type=Path, help="figure path (default: report path with .png)")
    matrix_p.add_argument("--no-figure", action="store_true", help="skip figure rendering")
    matrix_p.add_argument("--seed-override", type=int, help="replace every config's seed")
    return parser


def _print_profiles() -> None:
    rows = [("name", "on failure", "reason bug", "key survives", "transports")]
    for profile in builtin_profiles().values():
        rows.append(
            (
                profile.name,
                profile.on_auth_failure.value,
                "yes" if profile.disconnect_reason_bug else "no",
                "yes" if profile.key_survives_failure else "no",
                "+".join(sorted(t.value for t in profile.supported_transports)),
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    for i, row in enumerate(rows):
        print("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
        if i == 0:
            print("  ".join("-" * w for w in widths))


def _load(path: Path, seed_override: int | None) -> ScenarioConfig:
    config = load_config(path)
    if seed_override is not None:
        config = replace(config, seed=seed_override)
    return config


def _figure_path(report_path: Path, figure_out: Path | None) -> Path:
    return figure_out if figure_out is not None else report_path.with_suffix(".png")


def _cmd_run(args) -> int:
    try:
        config = _load(args.config, args.seed_override)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        run = run_scenario(config)
    except UnknownProfileError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    trace_path = args.trace_out or (Path(config.outputs.trace) if config.outputs.trace else None)
    if trace_path is not None:
        trace_path.parent.mkdir(parents=True, exist_ok=True)
        trace_path.write_bytes(write_trace(run.result.trace_packets))
        print(f"trace: {trace_path} ({len(run.result.trace_packets)} packets)")

    report_path = args.report_out or (Path(config.outputs.report) if config.outputs.report else None)
    if run.verdict is None:
        print(f"scenario {config.scenario_id}: no gradeable failure occurred")
        if report_path is not None:
            report_path.parent.mkdir(parents=True, exist_ok=True)
            report_path.write_text("", encoding="utf-8")
        return 0

    print(report_mod.render_verdict_text(run.verdict))
    if report_path is not None:
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(
            report_mod.render_report(report_mod.verdict_records(run.verdict)), encoding="utf-8"
        )
        print(f"report: {report_path}")
        if not args.no_figure:
            from .figures import render_verdict_figure

            figure_path = _figure_path(report_path, args.figure_out)
            render_verdict_figure(run.verdict, figure_path)
            print(f"figure: {figure_path}")
    return run.exit_status


def _cmd_matrix(args) -> int:
    directory: Path = args.directory
    if not directory.is_dir():
        print(f"config error: {directory} is not a directory", file=sys.stderr)
        return 2
    paths = sorted(directory.glob("*.json"))
    try:
        configs = [_load(path, args.seed_override) for path in paths]
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.profiles:
        profiles = [name.strip() for name in args.profiles.split(",") if name.strip()]
        unknown = [name for name in profiles if name not in builtin_profiles()]
        if unknown:
            print(f"config error: unknown profiles: {', '.join(unknown)}", file=sys.stderr)
            return 2
    else:
        profiles = list(builtin_profiles())

    matrix = verdict_matrix(profiles, configs)
    print(matrix.render_text())

    if args.report_out is not None:
        args.report_out.parent.mkdir(parents=True, exist_ok=True)
        args.report_out.write_text(
            report_mod.render_report(report_mod.matrix_records(matrix)), encoding="utf-8"
        )
        print(f"report: {args.report_out}")
        if not args.no_figure:
            from .figures import render_matrix_figure

            figure_path = _figure_path(args.report_out, args.figure_out)
            render_matrix_figure(matrix, figure_path)
            print(f"figure: {figure_path}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.list_profiles:
        _print_profiles()
        return 0
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "matrix":
        return _cmd_matrix(args)
    parser.print_help()
    return 2


if __name__ == "__main__":
    sys.exit(main())
