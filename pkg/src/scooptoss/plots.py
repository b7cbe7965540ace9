"""Figure rendering for training logs, evaluation reports, and traces.

Every report path that writes a CSV also renders a PNG next to it through
these helpers. Headless backend; nothing here touches a display.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STAGE_COLORS = {"approach": "#8dd3c7", "scoop": "#80b1d3",
                "toss": "#fdb462", "load": "#fb8072"}


def _save(fig, out_png) -> Path:
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out_png, dpi=130)
    plt.close(fig)
    return out_png


def training_curves(metrics_csv, out_png) -> Path:
    rows = list(csv.DictReader(open(metrics_csv)))
    if not rows:
        raise ValueError(f"no rows in {metrics_csv}")
    steps = [int(r["env_steps"]) for r in rows]
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    panels = [("mean_reward", "mean step reward"),
              ("success_rate", "success rate / loaded"),
              ("curriculum_level", "curriculum level"),
              ("kl", "approx KL")]
    for ax, (col, title) in zip(axes.flat, panels):
        ax.plot(steps, [float(r[col]) for r in rows], lw=1.2)
        ax.set_title(title, fontsize=10)
        ax.set_xlabel("env steps", fontsize=8)
        ax.grid(alpha=0.3)
    return _save(fig, out_png)


def angular_sector_figure(report: dict, out_png) -> Path:
    sectors = report["sectors"]
    labels = [s["sector"] for s in sectors]
    x = range(len(sectors))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    width = 0.2
    for k, stage in enumerate(("approach", "scoop", "toss", "load")):
        vals = [s[f"{stage}_pct"] for s in sectors]
        ax1.bar([xi + (k - 1.5) * width for xi in x], vals, width,
                label=stage, color=STAGE_COLORS[stage])
    ax1.set_xticks(list(x), labels, rotation=45, fontsize=7)
    ax1.set_ylabel("success %")
    ax1.set_ylim(0, 105)
    ax1.legend(fontsize=8)
    ax1.set_title("stage success by angular sector", fontsize=10)

    heights = [s["height_success"] for s in sectors]
    ax2.plot(list(x), [h if h is not None else float("nan") for h in heights],
             "o-", label="loaded")
    fails = [s["height_fail"] for s in sectors]
    ax2.plot(list(x), [h if h is not None else float("nan") for h in fails],
             "s--", label="tossed, not loaded")
    ax2.set_xticks(list(x), labels, rotation=45, fontsize=7)
    ax2.set_ylabel("toss height (m)")
    ax2.legend(fontsize=8)
    ax2.grid(alpha=0.3)
    ax2.set_title("toss apex height", fontsize=10)
    return _save(fig, out_png)


def object_type_figure(report: dict, out_png) -> Path:
    rows = report["objects"]
    labels = [r["object"] for r in rows]
    x = range(len(rows))
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.2
    for k, stage in enumerate(("approach", "scoop", "toss", "load")):
        vals = [r[f"{stage}_pct"] for r in rows]
        ax.bar([xi + (k - 1.5) * width for xi in x], vals, width,
               label=stage, color=STAGE_COLORS[stage])
    ax.set_xticks(list(x), labels, rotation=20, fontsize=8)
    ax.set_ylabel("success %")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8)
    ax.set_title("stage success by object type (frontal spawns)", fontsize=10)
    return _save(fig, out_png)


def multi_eval_figure(rows: list[dict], out_png) -> Path:
    labels = [r["model"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.bar(labels, [r["mean_loaded"] for r in rows], color="#80b1d3")
    ax1.set_ylabel("objects loaded / episode")
    ax1.tick_params(axis="x", rotation=20, labelsize=8)
    ax2.bar(labels, [r["mean_time_per_object"] or 0 for r in rows],
            color="#fdb462")
    ax2.set_ylabel("seconds / loaded object")
    ax2.tick_params(axis="x", rotation=20, labelsize=8)
    return _save(fig, out_png)


def ablation_figure(rows: list[dict], out_png) -> Path:
    labels = [r["variant"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.2
    x = range(len(rows))
    for k, stage in enumerate(("approach", "scoop", "toss", "load")):
        vals = [r[f"{stage}_pct"] for r in rows]
        ax.bar([xi + (k - 1.5) * width for xi in x], vals, width,
               label=stage, color=STAGE_COLORS[stage])
    ax.set_xticks(list(x), labels, rotation=15, fontsize=8)
    ax.set_ylabel("success %")
    ax.legend(fontsize=8)
    ax.set_title("reward ablations (frontal spawns)", fontsize=10)
    return _save(fig, out_png)


def trajectory_figure(header: dict, records: list[dict], out_png) -> Path:
    """Top-down view of a trace: base path, final pose, object paths."""
    fig, ax = plt.subplots(figsize=(6, 6))
    rx = [r["robot"][0] for r in records]
    ry = [r["robot"][1] for r in records]
    ax.plot(rx, ry, "-", color="#555", lw=1.0, label="base path")
    n_obj = header.get("n_objects", 0)
    cmap = plt.get_cmap("tab10")
    for i in range(n_obj):
        ox = [r["objects"][i][0] for r in records]
        oy = [r["objects"][i][1] for r in records]
        ax.plot(ox, oy, ":", color=cmap(i % 10), lw=0.9)
        ax.plot(ox[-1], oy[-1], "o", color=cmap(i % 10), ms=5)
    if records:
        x, y, yaw = records[-1]["robot"][:3]
        ax.plot(x, y, "k^", ms=10)
        ax.arrow(x, y, 0.3 * math.cos(yaw), 0.3 * math.sin(yaw),
                 head_width=0.08, color="k")
    ax.set_aspect("equal")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("trace replay (top-down)", fontsize=10)
    return _save(fig, out_png)
