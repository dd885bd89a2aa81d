"""Command line entry points: batch runs, correction validation, serving."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError
from .harness import AblationMode, load_scenario, run_experiment, validate_correction_models


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corobot", description="Deterministic replanning workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scripted scenario for N seeded trials")
    run_p.add_argument("--scenario", required=True, help="scenario JSON file")
    run_p.add_argument("--mode", choices=[m.value for m in AblationMode], default="full")
    run_p.add_argument("--trials", type=int, default=1)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--out", default="report.json")
    run_p.add_argument("--log-dir", default=None, help="also write per-trial comparison-form event logs here")

    val_p = sub.add_parser("validate-corrections", help="run the adversarial battery")
    val_p.add_argument("--battery", required=True, help="battery JSON file")
    val_p.add_argument("--out", default="report.json")

    serve_p = sub.add_parser("serve", help="serve live sessions over HTTP")
    serve_p.add_argument("--port", type=int, default=8000)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--scenario-dir", default="configs", help="directory of scenario JSON files")
    serve_p.add_argument("--static-dir", default=None, help="optional console bundle to serve at /")
    serve_p.add_argument("--log-dir", default=None, help="append per-session event logs here")

    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    mode = AblationMode(args.mode)
    report = run_experiment([scenario], [mode], trials=args.trials, base_seed=args.seed, log_dir=args.log_dir)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(report.text_table())
    print(f"report written to {args.out}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    report = validate_correction_models(args.battery)
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    for key, agg in report["categories"].items():
        print(f"{key}: {agg['matched']}/{agg['cases']} as expected")
    print("all expectations met" if report["all_pass"] else f"{len(report['failures'])} case(s) off expectation")
    print(f"report written to {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .gateway import create_app

    app = create_app(scenario_dir=args.scenario_dir, static_dir=args.static_dir, log_dir=args.log_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "validate-corrections": _cmd_validate, "serve": _cmd_serve}
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
