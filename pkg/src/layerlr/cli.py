"""Command-line entry point.

    layerlr <train|evaluate|baseline|ablate|plot> --config cfg.json \
        [--seed N] [--out DIR] [--data DIR]

Exit code 0 on success. On failure a machine-readable JSON error record is
printed to stderr and written to <out>/error.json when possible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import MODES, load_experiment_config
from .harness import run_experiment

DATA_ENV_VAR = "LAYERLR_DATA"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layerlr",
        description="Layerwise learning-rate control experiments",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run an experiment in {mode} mode")
        p.add_argument("--config", required=True, help="experiment JSON document")
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--out", default="runs/out", help="output directory")
        p.add_argument(
            "--data",
            default=os.environ.get(DATA_ENV_VAR),
            help=f"dataset root directory (or ${DATA_ENV_VAR})",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_experiment_config(args.config)
        cfg.mode = args.mode
        artifacts = run_experiment(cfg, seed=args.seed, out_dir=args.out, data_dir=args.data)
    except Exception as exc:  # noqa: BLE001 - boundary: report and exit nonzero
        record = {"error": type(exc).__name__, "message": str(exc), "mode": args.mode}
        print(json.dumps(record), file=sys.stderr)
        try:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "error.json", "w") as fh:
                json.dump(record, fh, indent=2)
        except OSError:
            pass
        return 1
    def jsonable(value):
        if isinstance(value, Path):
            return str(value)
        if isinstance(value, (list, tuple)):
            return [jsonable(v) for v in value]
        return value

    summary = {k: jsonable(v) for k, v in artifacts.items() if k != "table"}
    print(json.dumps({"mode": args.mode, "out": str(args.out), **summary}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
