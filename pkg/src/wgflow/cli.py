"""Command-line entry point: ``wgflow <command> --config FILE [--out DIR]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .runner import _COMMAND_ALIASES, ConfigError, execute, load_config


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="wgflow",
        description="Wasserstein gradient flows of entropy, confinement and interaction energies.",
    )
    ap.add_argument("command", choices=sorted(_COMMAND_ALIASES), help="experiment to run")
    ap.add_argument("--config", required=True, help="JSON experiment file")
    ap.add_argument("--out", help="output directory (overrides the config's 'output')")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--emit-states", action="store_true", help="also write every quantile state")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"wgflow: configuration error: {exc}", file=sys.stderr)
        return 2
    cmd = _COMMAND_ALIASES[args.command]
    if cmd is not cfg.command:
        print(
            f"wgflow: command line asks for {cmd.value!r} but the config says {cfg.command.value!r}",
            file=sys.stderr,
        )
        return 2
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            print("wgflow: --seed must be nonnegative", file=sys.stderr)
            return 2
        changes["seed"] = args.seed
    if args.emit_states:
        changes["emit_states"] = True
    cfg = dataclasses.replace(cfg, **changes)
    report = execute(cfg, args.out)
    failed = [k for k, v in report.checks.items() if not v]
    if report.partial:
        print(f"wgflow: run incomplete: {report.error}", file=sys.stderr)
    elif failed:
        print(f"wgflow: failed checks: {', '.join(failed)}", file=sys.stderr)
    else:
        print(f"wgflow: {cfg.command.value} ok")
    return report.exit_status


if __name__ == "__main__":
    sys.exit(main())
