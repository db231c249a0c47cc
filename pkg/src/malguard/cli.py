"""Command-line entry point.

Exit codes: 0 every protected attribute passed its post-test (or replay
matched), 1 a post-test failed (or replay diverged), 2 the input could not
be read or parsed.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .attacks import CATALOG
from .engine import ReplayDivergence, recorded_digest, replay, run_scenario
from .events import EventLog
from .guards import DESCRIPTIONS, GuardKind, classify
from .host import SpecError
from .report import ReportFormat, render_report
from .scenario_file import bundled_scenarios, load_scenario

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_BAD_INPUT = 2

FORMAT_ENV = "MALGUARD_REPORT_FORMAT"


def _err(msg: str) -> None:
    print(f"malguard: {msg}", file=sys.stderr)


def _run_one(path: str, seed: int | None, ticks: int | None, fmt: str) -> tuple[int, bytes, str, str]:
    """Run one scenario file; returns (exit code, report, ndjson log, error)."""
    try:
        spec = load_scenario(path)
        if seed is not None:
            spec = replace(spec, seed=seed)
        if ticks is not None:
            spec = replace(spec, run_length=ticks)
        report = run_scenario(spec)
    except FileNotFoundError as exc:
        return EXIT_BAD_INPUT, b"", "", f"{path}: {exc.strerror or exc}"
    except (SpecError, OSError) as exc:
        return EXIT_BAD_INPUT, b"", "", f"{path}: {exc}"
    code = EXIT_OK if report.passed else EXIT_FAILED
    return code, render_report(report, fmt), report.log.to_ndjson(), ""


def cmd_run(args: argparse.Namespace) -> int:
    fmt = args.report_format or os.environ.get(FORMAT_ENV, ReportFormat.HUMAN.value)
    try:
        fmt = ReportFormat(fmt).value
    except ValueError:
        _err(f"unknown report format {fmt!r}")
        return EXIT_BAD_INPUT
    if len(args.scenarios) > 1 and (args.out or args.log):
        _err("--out and --log take a single scenario")
        return EXIT_BAD_INPUT

    jobs = [(p, args.seed, args.ticks, fmt) for p in args.scenarios]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*job) for job in jobs]

    worst = EXIT_OK
    for code, report, log_text, error in results:
        worst = max(worst, code)
        if error:
            _err(error)
            continue
        if args.out:
            Path(args.out).write_bytes(report)
        else:
            sys.stdout.buffer.write(report)
            sys.stdout.buffer.flush()
        if args.log:
            Path(args.log).write_text(log_text)
    return worst


def cmd_list_attacks(args: argparse.Namespace) -> int:
    for info in CATALOG.values():
        tag = info.capec or "-"
        target = info.target_kind.value if info.target_kind else "process matcher"
        print(f"{info.vector_id.value:<34} {tag:<10} {target:<16} {info.summary}")
    return EXIT_OK


def cmd_list_guards(args: argparse.Namespace) -> int:
    for kind in GuardKind:
        posture, scope = classify(kind)
        tag = f"({posture.value.capitalize()}, {scope.value.capitalize()})"
        print(f"{kind.value:<24} {tag:<20} {DESCRIPTIONS[kind]}")
    return EXIT_OK


def cmd_list_rules(args: argparse.Namespace) -> int:
    try:
        spec = load_scenario(args.scenario)
    except FileNotFoundError as exc:
        _err(f"{args.scenario}: {exc.strerror or exc}")
        return EXIT_BAD_INPUT
    except (SpecError, OSError) as exc:
        _err(f"{args.scenario}: {exc}")
        return EXIT_BAD_INPUT
    for rule in spec.rulebook.ordered():
        vectors = ",".join(sorted(rule.vectors)) or "*"
        flags = " immediate" if rule.immediate else ""
        print(
            f"[{rule.priority:>3}] {rule.rule_id}: {vectors} on {rule.target} "
            f">= {rule.threshold} in {rule.window} ticks -> {rule.activate}{flags}"
        )
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        spec = load_scenario(args.scenario)
        log = EventLog.from_ndjson(Path(args.log).read_text())
    except FileNotFoundError as exc:
        _err(f"{exc.filename or exc}: no such file")
        return EXIT_BAD_INPUT
    except (SpecError, OSError, ValueError, KeyError, TypeError) as exc:
        _err(f"cannot parse input: {exc}")
        return EXIT_BAD_INPUT
    expected = recorded_digest(log)
    if expected is None:
        _err("log carries no final-state record")
        return EXIT_FAILED
    try:
        host = replay(log, spec.host)
    except ReplayDivergence as exc:
        _err(f"replay diverged: {exc}")
        return EXIT_FAILED
    except SpecError as exc:
        _err(str(exc))
        return EXIT_BAD_INPUT
    if host.digest() != expected:
        _err("replayed final state differs from the recorded one")
        return EXIT_FAILED
    print(f"replay ok: {len(log)} entries, final state {expected[:16]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="malguard", description="Attack/defense simulator for self-protecting tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one or more scenario files")
    run.add_argument("scenarios", nargs="+", help=f"scenario paths, or bundled:<name> ({', '.join(bundled_scenarios())})")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--ticks", type=int, help="override the run length")
    run.add_argument("--report-format", choices=[f.value for f in ReportFormat],
                     help=f"default from ${FORMAT_ENV}, else human")
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--log", help="write the event log (NDJSON) here")
    run.add_argument("--jobs", type=int, default=1, help="run scenarios in parallel")
    run.set_defaults(func=cmd_run)

    sub.add_parser("list-attacks", help="print the attack vector catalog").set_defaults(func=cmd_list_attacks)
    sub.add_parser("list-guards", help="print the guard catalog").set_defaults(func=cmd_list_guards)

    rules = sub.add_parser("list-rules", help="print a scenario's rulebook by priority")
    rules.add_argument("scenario")
    rules.set_defaults(func=cmd_list_rules)

    rep = sub.add_parser("replay", help="re-apply a logged run and compare final states")
    rep.add_argument("log")
    rep.add_argument("scenario")
    rep.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_INPUT if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
