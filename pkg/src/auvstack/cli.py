"""Command line interface: run, validate, replay.

Exit codes: 0 mission DONE, 2 FAULT, 3 time limit reached, 4 config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import runner as runner_mod
from .config import ConfigError, load_run_config, validate


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="auvstack",
        description="Deterministic AUV navigation-stack mission simulator",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a mission run config")
    run_p.add_argument("config", help="run config YAML (stack + mission + seed)")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--transport", default=None,
                       help="inproc (deterministic) or tcp[:host:port]")
    run_p.add_argument("--log-dir", default=None, help="output directory for logs")

    val_p = sub.add_parser("validate", help="check a run config without running")
    val_p.add_argument("config")

    rep_p = sub.add_parser("replay", help="re-render report.json from a log directory")
    rep_p.add_argument("log_dir")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)

    if args.command == "replay":
        log_dir = Path(args.log_dir)
        if not (log_dir / "log.csv").exists():
            print(f"error: {log_dir} does not contain log.csv", file=sys.stderr)
            return runner_mod.EXIT_CONFIG
        report = runner_mod.replay(log_dir)
        print(report.to_json(), end="")
        return report.exit_code

    findings: list = []
    try:
        run_config = load_run_config(
            args.config,
            seed_override=getattr(args, "seed", None),
            transport_override=getattr(args, "transport", None),
            log_dir_override=getattr(args, "log_dir", None),
            findings=findings,
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return runner_mod.EXIT_CONFIG
    findings.extend(validate(run_config))

    if args.command == "validate":
        if findings:
            for path, message in findings:
                print(f"{path}: {message}")
            return runner_mod.EXIT_CONFIG
        print("ok: configuration valid")
        return 0

    if findings:
        print("configuration invalid:", file=sys.stderr)
        for path, message in findings:
            print(f"  {path}: {message}", file=sys.stderr)
        return runner_mod.EXIT_CONFIG

    log_dir = run_config.log_dir or f"runs/{run_config.mission_spec.mission.name}-seed{run_config.seed}"
    report = runner_mod.run(run_config, log_dir)
    print(report.to_json(), end="")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
