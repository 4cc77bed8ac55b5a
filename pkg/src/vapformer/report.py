"""Run reports: delimited metric tables plus rendered figures.

CSV files are the source of truth; figures are derived from the same rows.
Writers upsert by key and emit sorted rows, so re-running a command with
identical inputs rewrites identical bytes (figures included: the SVG hash
salt is pinned and no timestamp metadata is embedded).
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

matplotlib.rcParams["svg.hashsalt"] = "vapformer"

METRICS_HEADER = ["run_id", "strategy", "seed", "bacc", "f1", "auc", "trainable_params", "total_params"]
SWEEP_HEADER = ["axis", "count", "seed", "auc_pt", "auc_vistab"]

SWEEP_VARIANTS = (("pt", "auc_pt", "#1f77b4"), ("vistab", "auc_vistab", "#ff7f0e"))


def _fmt(x):
    return f"{x:.6f}" if isinstance(x, float) else str(x)


def metrics_row(report):
    m = report.metrics["test"]
    return {
        "run_id": report.run_id,
        "strategy": report.strategy,
        "seed": report.seed,
        "bacc": m["bacc"],
        "f1": m["f1"],
        "auc": m["auc"],
        "trainable_params": report.trainable_params,
        "total_params": report.total_params,
    }


def upsert_csv(path, header, rows, key_fields):
    """Merge rows into the CSV at `path` by key, rewrite sorted."""
    path = Path(path)
    merged = {}
    if path.exists():
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                merged[tuple(row[k] for k in key_fields)] = row
    for row in rows:
        formatted = {k: _fmt(row[k]) for k in header}
        merged[tuple(formatted[k] for k in key_fields)] = formatted
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for key in sorted(merged):
            writer.writerow(merged[key])


def write_metrics(path, reports):
    upsert_csv(path, METRICS_HEADER, [metrics_row(r) for r in reports], ["run_id"])


def write_sweep(path, rows):
    upsert_csv(path, SWEEP_HEADER, rows, ["axis", "count", "seed"])


def render_sweep_figure(svg_path, rows, axis_name):
    """Mean AUC line plus a min-max band per variant, across prompt counts."""
    counts = sorted({int(r["count"]) for r in rows})
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for variant, column, color in SWEEP_VARIANTS:
        means, lows, highs = [], [], []
        for c in counts:
            vals = [float(r[column]) for r in rows if int(r["count"]) == c]
            means.append(sum(vals) / len(vals))
            lows.append(min(vals))
            highs.append(max(vals))
        band = ax.fill_between(counts, lows, highs, alpha=0.25, color=color)
        band.set_gid(f"band-{variant}")
        label = "with global prompt" if variant == "pt" else "without global prompt"
        (line,) = ax.plot(counts, means, marker="o", color=color, label=label)
        line.set_gid(f"mean-{variant}")
    ax.set_xlabel(f"{axis_name} prompt count")
    ax.set_ylabel("test AUC")
    ax.set_title(f"Prompt-count sweep ({axis_name} axis), min-max over seeds")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
