"""Plot one metric of a sweep.csv against one config column.

    python3 scripts/plot_sweep.py out/fig-busslots/sweep.csv --x period_us --y occupancy --group slots

Points are averaged over seeds; one line per value of ``--group``.
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path
from statistics import mean

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def number(text):
    try:
        return float(text)
    except ValueError:
        return text


def series(rows, x, y, group):
    acc = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if r[y] == "":
            continue
        acc[r[group] if group else ""][number(r[x])].append(float(r[y]))
    return {g: sorted((k, mean(v)) for k, v in pts.items()) for g, pts in acc.items()}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("sweep", help="sweep.csv written by `tarmac sweep`")
    p.add_argument("--x", required=True, help="config column for the x axis")
    p.add_argument("--y", required=True, help="metric column for the y axis")
    p.add_argument("--group", help="config column, one line per value")
    p.add_argument("--out", help="image path (default: <sweep dir>/<y>_vs_<x>.png)")
    args = p.parse_args(argv)

    rows = load(args.sweep)
    if not rows:
        p.error(f"{args.sweep} has no rows")
    for col in filter(None, (args.x, args.y, args.group)):
        if col not in rows[0]:
            p.error(f"no column {col!r} in {args.sweep}")

    fig, ax = plt.subplots(figsize=(6, 4))
    for g, pts in sorted(series(rows, args.x, args.y, args.group).items()):
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", label=f"{args.group}={g}" if args.group else None)
    ax.set_xlabel(args.x)
    ax.set_ylabel(args.y)
    if args.group:
        ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = args.out or str(Path(args.sweep).with_name(f"{args.y}_vs_{args.x}.png"))
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
