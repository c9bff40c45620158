#!/usr/bin/env python3
"""Emit the nine handcrafted schedule curves as CSV (and optional SVG).

Usage: python scripts/plot_schedules.py --out runs/schedules [--svg]
"""

import argparse
from pathlib import Path

from layerlr.schedules import SCHEDULE_KINDS, ScheduleSpec, schedule_table, write_schedule_csv


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/schedules")
    parser.add_argument("--base-lr", type=float, default=0.01)
    parser.add_argument("--total-steps", type=int, default=1000)
    parser.add_argument("--stride", type=int, default=1)
    parser.add_argument("--svg", action="store_true")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    specs = {kind: ScheduleSpec(kind, args.base_lr, args.total_steps) for kind in SCHEDULE_KINDS}
    for kind, spec in specs.items():
        write_schedule_csv(spec, args.stride, out / f"{kind}.csv")
    print(f"wrote {len(specs)} schedule curves to {out}")

    if args.svg:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, axes = plt.subplots(3, 3, figsize=(11, 8), sharex=True)
        for ax, (kind, spec) in zip(axes.ravel(), specs.items()):
            table = schedule_table(spec, args.stride)
            ax.plot([t for t, _ in table], [lr for _, lr in table])
            ax.set_title(kind, fontsize=9)
        fig.supxlabel("step")
        fig.supylabel("learning rate")
        fig.tight_layout()
        fig.savefig(out / "schedules.svg")
        print(f"wrote {out / 'schedules.svg'}")


if __name__ == "__main__":
    main()
