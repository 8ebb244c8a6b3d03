"""Validation reports: signed basis-point differences and their statistics.

A report compares network predictions against oracle prices scenario by
scenario, in basis points of unit notional (1 bp = 1e-4).  Quantiles are
taken on the signed differences, so (Q10, Q90) brackets the central 80% of
deviations.  Reports are written as JSON plus a CSV histogram, and the same
histograms are rendered to PNG files next to the data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

BP = 1e4  # basis points per unit of price on unit notional
_HIST_BINS = 60


@dataclass
class DifferenceReport:
    diffs_bp: np.ndarray
    abs_avg: float
    mean: float
    q10: float
    q90: float
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    per_time: dict = field(default_factory=dict)
    t_values: np.ndarray = None

    def summary(self) -> str:
        return f"abs avg {self.abs_avg:.2f} bp, (Q10, Q90) = ({self.q10:.2f}, {self.q90:.2f}) bp"


def _stats(diffs_bp: np.ndarray) -> dict:
    return {
        "n": int(diffs_bp.size),
        "abs_avg_bp": float(np.abs(diffs_bp).mean()),
        "mean_bp": float(diffs_bp.mean()),
        "q10_bp": float(np.quantile(diffs_bp, 0.10)),
        "q90_bp": float(np.quantile(diffs_bp, 0.90)),
    }


def compute_report(predictions, oracle_prices, t_values=None) -> DifferenceReport:
    """Signed (prediction - oracle) differences in bp, with optional per-time
    breakdown keyed by the valuation times in ``t_values``."""
    pred = np.asarray(predictions, dtype=float).reshape(-1)
    orc = np.asarray(oracle_prices, dtype=float).reshape(-1)
    if pred.shape != orc.shape:
        raise ValueError("prediction/oracle length mismatch")
    diffs = (pred - orc) * BP
    counts, edges = np.histogram(diffs, bins=_HIST_BINS)
    per_time = {}
    if t_values is not None:
        t_values = np.asarray(t_values, dtype=float).reshape(-1)
        for t in np.unique(t_values):
            sub = diffs[t_values == t]
            per_time[float(t)] = _stats(sub)
    base = _stats(diffs)
    return DifferenceReport(
        diffs_bp=diffs,
        abs_avg=base["abs_avg_bp"],
        mean=base["mean_bp"],
        q10=base["q10_bp"],
        q90=base["q90_bp"],
        bin_edges=edges,
        bin_counts=counts,
        per_time=per_time,
        t_values=t_values,
    )


def write_report(report: DifferenceReport, out_dir, extra_meta: dict = None) -> dict:
    """Emit report.json, histogram.csv and the rendered PNG figures.

    Returns the JSON document (also written to disk).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "bp_convention": "1 bp = 1e-4 of unit notional price",
        "n": int(report.diffs_bp.size),
        "abs_avg_bp": report.abs_avg,
        "mean_bp": report.mean,
        "q10_bp": report.q10,
        "q90_bp": report.q90,
        "histogram": {
            "bin_edges_bp": report.bin_edges.tolist(),
            "counts": report.bin_counts.tolist(),
        },
        "per_time": {str(k): v for k, v in sorted(report.per_time.items())} or None,
    }
    if extra_meta:
        doc["meta"] = extra_meta
    with open(out_dir / "report.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    with open(out_dir / "histogram.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left_bp", "bin_right_bp", "count"])
        for left, right, count in zip(report.bin_edges[:-1], report.bin_edges[1:], report.bin_counts):
            writer.writerow([repr(float(left)), repr(float(right)), int(count)])
    _render_histogram(report, out_dir / "report_histogram.png")
    if report.per_time:
        _render_per_time(report, out_dir / "report_by_time.png")
    return doc


def _render_histogram(report: DifferenceReport, path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.hist(report.diffs_bp, bins=report.bin_edges, color="#4878cf", edgecolor="white")
    ax.axvline(report.q10, color="#d65f5f", linestyle="--", linewidth=1, label="Q10 / Q90")
    ax.axvline(report.q90, color="#d65f5f", linestyle="--", linewidth=1)
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("prediction - oracle (bp)")
    ax.set_ylabel("scenarios")
    ax.set_title(report.summary())
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_per_time(report: DifferenceReport, path) -> None:
    times = sorted(report.per_time)
    ncols = 3
    nrows = int(np.ceil(len(times) / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.0 * ncols, 2.8 * nrows), squeeze=False)
    for ax in axes.flat[len(times):]:
        ax.set_visible(False)
    lim = max(float(np.abs(report.diffs_bp).max()), 1e-9)
    bins = np.linspace(-lim, lim, 41)
    for ax, t in zip(axes.flat, times):
        stats = report.per_time[t]
        sub = report.diffs_bp[report.t_values == t]
        ax.hist(sub, bins=bins, color="#4878cf", edgecolor="white")
        ax.axvline(stats["q10_bp"], color="#d65f5f", linestyle="--", linewidth=1)
        ax.axvline(stats["q90_bp"], color="#d65f5f", linestyle="--", linewidth=1)
        ax.axvline(0.0, color="black", linewidth=0.8)
        ax.set_title(f"t = {t:g}: abs avg {stats['abs_avg_bp']:.2f} bp", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
