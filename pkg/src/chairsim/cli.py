"""Command-line entry points: `sim` (run/replay) and `cloud` (serve)."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional

from .bridge import BridgeServer
from .cloudd import CloudService
from .runner import replay_trace, run_scenario
from .scenario import ScenarioError, load_scenario


def _sim_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sim", description="Wheelchair/watch system simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario")
    run.add_argument("--scenario", required=True, help="scenario JSON file")
    run.add_argument("--out", help="write the NDJSON trace here")
    run.add_argument("--no-cloud", action="store_true",
                     help="skip the modem link and telemetry uploads")
    run.add_argument("--interactive", action="store_true",
                     help="serve the operator WebSocket and pace to wall time")
    run.add_argument("--port", type=int, default=8765,
                     help="WebSocket port for --interactive (default 8765)")

    rep = sub.add_parser("replay", help="re-check invariants from a trace file")
    rep.add_argument("trace", help="NDJSON trace file")
    return parser


def sim_main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _sim_parser().parse_args(argv)
    if args.command == "run":
        return _run(args)
    return _replay(args.trace)


def _run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    bridge = None
    if args.interactive:
        if not scenario.interactive:
            print("error: scenario does not set interactive", file=sys.stderr)
            return 1
        bridge = BridgeServer(port=args.port).start()
        print(f"operator socket on ws://127.0.0.1:{bridge.port}")

    try:
        result = run_scenario(
            scenario,
            out_path=args.out,
            no_cloud=args.no_cloud,
            control=bridge,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted")
        return 1
    finally:
        if bridge is not None:
            bridge.stop()

    accepted = sum(1 for u in result.uploads if u.get("status") == "accepted")
    print(f"ran {result.ticks} ticks, {len(result.uploads)} uploads "
          f"({accepted} accepted), {result.violations} safety violations")
    if args.out:
        print(f"trace written to {args.out}")
    return result.exit_code


def _replay(path: str) -> int:
    try:
        summary = replay_trace(path)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return 1
    if summary.events == 0 and not summary.corrupt_lines:
        print("warning: empty trace, checks pass vacuously")
    for lineno in summary.corrupt_lines:
        print(f"corrupt line {lineno}: skipped")
    for check in summary.checks:
        mark = "PASS" if check.passed else "FAIL"
        tail = f" ({check.detail})" if check.detail else ""
        print(f"{mark} {check.name}{tail}")
    return 0 if summary.ok else 2


def cloud_main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = argparse.ArgumentParser(prog="cloud", description="Telemetry channel service")
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--port", type=int, required=True)
    serve.add_argument("--data", required=True, help="directory for NDJSON storage")
    serve.add_argument("--min-interval", type=float, default=15.0,
                       help="seconds between accepted writes per channel (default 15)")
    serve.add_argument("--seed", type=int, help="seed for reproducible write keys")
    args = parser.parse_args(argv)

    service = CloudService(
        args.data, port=args.port, min_interval=args.min_interval, seed=args.seed
    )
    print(f"serving on http://127.0.0.1:{service.port}, data in {args.data}")
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(sim_main())
