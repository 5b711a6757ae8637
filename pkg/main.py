"""
Path-integral sampling-complexity toolkit: command-line entry point.

    python main.py <subcommand> --config <path> [--seed <u64>] [--out <dir>] [--threads <k>]
                   [--hoeffding-form eq9|prop1] [--delta-mode folded|diffusion]
    python main.py history [--limit N]
"""
import argparse
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv

# Load .env before other imports that may use env vars
load_dotenv()

from complexity_engine.bounds import HoeffdingForm
from dynamics_service.models import DeltaMode
from experiments.commands import RunOptions, run_command

logger = logging.getLogger(__name__)

# Subcommand name -> experiment kind in the config file
SUBCOMMANDS = {
    "uav": "uav",
    "ugv": "ugv",
    "complexity": "complexity",
    "variance-sweep": "variance_sweep",
    "coverage": "coverage",
}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 bits, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="main.py", description="Path-integral control sampling-complexity experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--seed", type=_u64, default=None, help="override pi.seed")
        p.add_argument("--out", default=None, help="output directory (default $PI_OUTPUT_DIR or ./out)")
        p.add_argument("--threads", type=_positive_int, default=None, help="rollout worker threads (default $PI_THREADS or 1)")
        p.add_argument("--hoeffding-form", choices=[f.value for f in HoeffdingForm], default=None)
        p.add_argument("--delta-mode", choices=[m.value for m in DeltaMode], default=None)
    history = sub.add_parser("history", help="show recent runs")
    history.add_argument("--limit", type=_positive_int, default=10)
    return parser


def _default_threads() -> int:
    raw = os.environ.get("PI_THREADS", "").strip()
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        logger.warning("Ignoring PI_THREADS=%r", raw)
        return 1


def _print_history(limit: int) -> int:
    import database

    runs = database.get_recent_runs(limit=limit)
    if not runs:
        print("No runs recorded.")
        return 0
    for r in runs:
        print(f"{r['id']:>5}  {r['started_at']}  {r['experiment']:<15} {r['status']:<17} exit={r['exit_code']}  seed={r['seed']}  hash={r['config_hash']}  {r['out_dir']}")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("PI_LOG_LEVEL", "INFO").strip().upper() or "INFO",
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    if args.command == "history":
        return _print_history(args.limit)

    out_dir = Path(args.out or os.environ.get("PI_OUTPUT_DIR", "").strip() or "./out")
    options = RunOptions(
        out_dir=out_dir,
        seed=args.seed,
        threads=args.threads or _default_threads(),
        hoeffding_form=HoeffdingForm(args.hoeffding_form) if args.hoeffding_form else None,
        delta_mode=DeltaMode(args.delta_mode) if args.delta_mode else None,
    )
    result = run_command(SUBCOMMANDS[args.command], args.config, options)
    if result["success"]:
        print(f"{result['message']}; {len(result['files'])} files in {out_dir}")
    else:
        print(f"ERROR: {result['message']}", file=sys.stderr)
    return result["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
