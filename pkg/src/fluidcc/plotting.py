"""Render figures from simulation CSV output.

All plots read the delimited files written by the run and sweep drivers, so
figures can be regenerated later without re-running anything.  The Agg
backend is forced; every function writes a PNG and returns its path.
"""

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _series_by(rows, key_col, t_col, val_col):
    """Group rows into per-key (time, value) arrays, preserving key order."""
    t = defaultdict(list)
    v = defaultdict(list)
    order = []
    for row in rows:
        key = row[key_col]
        if key not in t:
            order.append(key)
        t[key].append(float(row[t_col]))
        v[key].append(float(row[val_col]))
    return [(key, np.asarray(t[key]), np.asarray(v[key])) for key in order]


def plot_rates(flows_csv, out_path, title=None):
    """Per-flow sending rate versus time."""
    series = _series_by(_read_rows(flows_csv), "flow_id", "t", "rate_pkts_s")
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for fid, t, x in series:
        ax.plot(t, x, label=fid, linewidth=1.2)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("rate (pkt/s)")
    ax.set_title(title or "flow rates")
    ax.grid(True, alpha=0.3)
    if len(series) <= 12:
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_backlog(queues_csv, out_path, title=None):
    """Per-link queue backlog versus time."""
    series = _series_by(_read_rows(queues_csv), "link_id", "t", "backlog_pkts")
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for lid, t, b in series:
        if b.max() <= 0.0 and len(series) > 4:
            continue  # skip idle access links to keep the legend readable
        ax.plot(t, b, label=lid, linewidth=1.2)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("backlog (pkt)")
    ax.set_title(title or "queue backlog")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_sweep(summary_csv, out_path, title=None, xlabel="swept value"):
    """Measured fairness ratio versus swept value, one line per estimator.

    Rows whose status is not "ok" (when the column exists) or whose ratio is
    blank are skipped.  Predicted ratios are drawn dashed for comparison.
    """
    rows = _read_rows(summary_csv)
    measured = defaultdict(list)
    predicted = defaultdict(list)
    for row in rows:
        if row.get("status", "ok") != "ok":
            continue
        if not row.get("fairness_ratio"):
            continue
        est = row["estimator"]
        value = float(row.get("value") or row["n"])
        measured[est].append((value, float(row["fairness_ratio"])))
        if row.get("predicted_ratio"):
            predicted[est].append((value, float(row["predicted_ratio"])))
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for est in sorted(measured):
        pts = sorted(measured[est])
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                marker="o", linewidth=1.4, label=est)
        pred = sorted(predicted.get(est, []))
        if pred:
            ax.plot([p[0] for p in pred], [p[1] for p in pred],
                    linestyle="--", linewidth=1.0, alpha=0.7,
                    label=est + " (predicted)")
    ax.axhline(1.0, color="grey", linewidth=0.8, alpha=0.6)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("fairness ratio (new flow / peer mean)")
    ax.set_title(title or "fairness ratio")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_output_dir(out_dir, fig_dir=None, title=None):
    """Render every figure the CSVs in out_dir support; return written paths.

    flows.csv/queues.csv produce rate and backlog time-series plots; a
    summary.csv with a value column produces the sweep comparison plot.
    """
    fig_dir = fig_dir or out_dir
    os.makedirs(fig_dir, exist_ok=True)
    written = []
    flows = os.path.join(out_dir, "flows.csv")
    if os.path.exists(flows):
        written.append(plot_rates(
            flows, os.path.join(fig_dir, "rates.png"), title=title))
    queues = os.path.join(out_dir, "queues.csv")
    if os.path.exists(queues):
        written.append(plot_backlog(
            queues, os.path.join(fig_dir, "backlog.png"), title=title))
    summary = os.path.join(out_dir, "summary.csv")
    if os.path.exists(summary):
        with open(summary, newline="") as fh:
            header = fh.readline().strip().split(",")
        if "value" in header:
            written.append(plot_sweep(
                summary, os.path.join(fig_dir, "fairness.png"), title=title))
    return written
