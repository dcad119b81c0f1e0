"""Static figures (PNG, Agg backend) for reports.

Files are written without a software/date stamp so reruns are
byte-identical.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import EvalReport, logistic5  # noqa: E402

_SAVE = dict(dpi=100, metadata={"Software": None})


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", **_SAVE)
    plt.close(fig)
    return path


def scatter_with_fit(pred, mos, report: EvalReport, path, title: str = "") -> Path:
    """Predicted score vs MOS with the fitted logistic curve, if any."""
    pred = np.asarray(pred, float)
    mos = np.asarray(mos, float)
    fig, ax = plt.subplots(figsize=(4.8, 4.0))
    ax.scatter(pred, mos, s=14, alpha=0.75, color="tab:blue", edgecolors="none")
    if report.logistic_params is not None and report.fit_converged and pred.size:
        xs = np.linspace(pred.min(), pred.max(), 200)
        ax.plot(xs, logistic5(xs, *report.logistic_params), color="tab:red", lw=1.5, label="logistic fit")
        ax.legend(loc="lower right", fontsize=8)
    p = "n/a" if not math.isfinite(report.plcc) else f"{report.plcc:.3f}"
    s = "n/a" if not math.isfinite(report.srcc) else f"{report.srcc:.3f}"
    ax.set_title(f"{title}  PLCC {p}  SRCC {s}".strip(), fontsize=9)
    ax.set_xlabel("predicted score")
    ax.set_ylabel("MOS")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def gain_heatmap(matrix, row_labels: Sequence[str], col_labels: Sequence[str], path, title: str = "") -> Path:
    """Heat map of gains in percent (rows: sources or models, columns: targets)."""
    data = np.asarray(matrix, float)
    fig, ax = plt.subplots(figsize=(1.1 * len(col_labels) + 2.4, 0.5 * len(row_labels) + 1.6))
    lim = max(1.0, float(np.nanmax(np.abs(data)))) if np.isfinite(data).any() else 1.0
    im = ax.imshow(np.ma.masked_invalid(data), cmap="RdYlGn", vmin=-lim, vmax=lim, aspect="auto")
    ax.set_xticks(range(len(col_labels)), col_labels, rotation=35, ha="right", fontsize=8)
    ax.set_yticks(range(len(row_labels)), row_labels, fontsize=8)
    for i in range(data.shape[0]):
        for j in range(data.shape[1]):
            if math.isfinite(data[i, j]):
                ax.text(j, i, f"{data[i, j]:+.1f}", ha="center", va="center", fontsize=7)
    fig.colorbar(im, ax=ax, label="gain (%)")
    ax.set_title(title, fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def gap_bars(mean_gaps: Mapping[str, Mapping[str, float]], path, title: str = "Mean gap") -> Path:
    """Grouped bars of mean PLCC/SRCC gap per database."""
    dbs = list(mean_gaps)
    x = np.arange(len(dbs))
    fig, ax = plt.subplots(figsize=(1.0 * len(dbs) + 2.0, 3.6))
    for k, (metric, color) in enumerate((("plcc", "tab:blue"), ("srcc", "tab:orange"))):
        vals = [mean_gaps[db].get(metric, math.nan) for db in dbs]
        ax.bar(x + (k - 0.5) * 0.38, vals, 0.38, label=metric.upper(), color=color)
    ax.axhline(0, color="black", lw=0.8)
    ax.set_xticks(x, dbs, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("gap (%)")
    ax.set_title(title, fontsize=9)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def rank_chart(per_perspective: Mapping[str, Mapping[str, int]], final: Mapping[str, int], path,
               title: str = "Database ranking") -> Path:
    """Rank of every database under each perspective, final rank last (1 = top)."""
    persp = list(per_perspective) + ["Final"]
    dbs = sorted(final, key=lambda db: final[db])
    fig, ax = plt.subplots(figsize=(1.0 * len(persp) + 3.0, 4.0))
    for db in dbs:
        ys = [per_perspective[p][db] for p in persp[:-1]] + [final[db]]
        ax.plot(range(len(persp)), ys, marker="o", label=db)
    ax.set_xticks(range(len(persp)), persp)
    ax.set_ylim(len(dbs) + 0.5, 0.5)
    ax.set_yticks(range(1, len(dbs) + 1))
    ax.set_ylabel("rank")
    ax.legend(fontsize=7, loc="center left", bbox_to_anchor=(1.0, 0.5))
    ax.set_title(title, fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)
