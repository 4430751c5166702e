"""Render the CSV files written by ``polarcomp sim`` / ``polarcomp app``.

    python3 scripts/plot_csv.py result.csv out.png

Histogram CSVs (bin_left, bin_right, count) are drawn as step plots, one
curve per value of the leading group column if present; history CSVs
(iteration, cost, ...) as cost curves. Needs matplotlib.
"""

import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def main(src, dst):
    with open(src) as fh:
        rows = list(csv.DictReader(fh))
    cols = list(rows[0])
    fig, ax = plt.subplots(figsize=(6, 4))
    if "bin_left" in cols:
        group = cols[0] if cols[0] not in ("bin_left",) else None
        curves = defaultdict(list)
        for r in rows:
            curves[r[group] if group else ""].append(
                (float(r["bin_left"]), float(r["bin_right"]), float(r["count"])))
        for key, pts in curves.items():
            xs = [(a + b) / 2 for a, b, _ in pts]
            total = sum(c for *_, c in pts) or 1.0
            ax.step(xs, [c / total for *_, c in pts], where="mid",
                    label=f"{group}={key}" if group else None)
        ax.set_xlabel("time")
        ax.set_ylabel("fraction")
    else:
        curves = defaultdict(list)
        for r in rows:
            key = (r.get("method", ""), r.get("seed", ""))
            curves[key].append((int(r["iteration"]), float(r["cost"])))
        for (method, seed), pts in curves.items():
            ax.plot(*zip(*pts), label=method or None, alpha=0.6)
        ax.set_xlabel("iteration")
        ax.set_ylabel("cost")
        ax.set_yscale("log")
    handles, labels = ax.get_legend_handles_labels()
    if labels:
        uniq = dict(zip(labels, handles))
        ax.legend(uniq.values(), uniq.keys())
    fig.tight_layout()
    fig.savefig(dst, dpi=120)


if __name__ == "__main__":
    main(*sys.argv[1:3])
