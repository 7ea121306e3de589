"""Command-line front end: ``speedlab run | verify | sweep``.

Exit codes: 0 on success, 2 for configuration errors (the message names
the offending ``section.key``), 1 for runtime failures or failed
verification.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .runner import execute_run, execute_sweep, execute_verify
from .scheduler import LoopError
from .verify import SUITES


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speedlab",
        description="Screened-curriculum training runs, verification suites, "
                    "and comparative sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one configured run")
    run.add_argument("--config", required=True, help="path to the config file")
    run.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    run.add_argument("--out", default=None, help="override the output directory")

    verify = sub.add_parser("verify", help="run verification suites")
    verify.add_argument("--suite", default="all", choices=("all",) + SUITES)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--out", default=None, help="directory for the report")

    sweep = sub.add_parser("sweep", help="comparative sweep over one axis")
    sweep.add_argument("--config", required=True, help="path to the config file")
    sweep.add_argument("--axis", default=None,
                       help="override the sweep axis from the config")
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            out_dir = Path(args.out) if args.out else None
            code, document = execute_verify(args.suite, args.seed, out_dir)
            for suite in document["suites"]:
                for check in suite["checks"]:
                    print(f"{suite['suite']}.{check['name']}: {check['status']}")
            if document["bound_discrepancies"]:
                print("bound discrepancies:")
                print(json.dumps(document["bound_discrepancies"], indent=2))
                code = 1
            print(f"verify {args.suite}: {document['status']}")
            return code

        config = load_config(args.config, seed_override=args.seed,
                             out_override=args.out)
        out_dir = Path(config["output"]["dir"])
        if args.command == "run":
            if config.mode == "verify":
                code, document = execute_verify(
                    config["verify"]["suite"], config.seed, out_dir)
                print(f"verify {config['verify']['suite']}: {document['status']}")
                return code
            if config.mode == "sweep":
                execute_sweep(config, out_dir)
                print(f"sweep written to {out_dir}")
                return 0
            summary = execute_run(config, out_dir)
            print(f"run written to {out_dir}")
            for target, seconds in summary.get("time_to_target", {}).items():
                rendered = "never" if seconds is None else f"{seconds:.1f}s"
                print(f"  time to {target}: {rendered}")
            for target, ratio in summary.get("speedup", {}).items():
                rendered = "n/a" if ratio is None else f"{ratio:.2f}x"
                print(f"  speedup at {target}: {rendered}")
            return 0

        # sweep subcommand
        if args.axis is not None:
            from .config import SWEEP_AXES

            if args.axis not in SWEEP_AXES:
                raise ConfigError("sweep.axis", f"must be one of {SWEEP_AXES}")
            config.sections["sweep"]["axis"] = args.axis
        if config.mode != "sweep":
            raise ConfigError("run.mode", "sweep subcommand needs mode = sweep")
        execute_sweep(config, out_dir)
        print(f"sweep written to {out_dir}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LoopError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
