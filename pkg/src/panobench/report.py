"""Markdown, CSV and JSON rendering of evaluation and analysis results.

Correlations print with three decimals and percentages with one. Rows that
carry gaps or gains start with ``gain:`` so they can be told apart (or
styled) without parsing numbers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .analysis import CrossMatrix, Metric, RankTable, classify_saturation
from .metrics import EvalReport

GAIN_PREFIX = "gain:"
NA = "n/a"


def fmt3(v) -> str:
    if v is None or not math.isfinite(v):
        return NA
    return f"{v:.3f}"


def fmt_pct(v) -> str:
    if v is None or not math.isfinite(v):
        return "-"
    return f"{v:+.1f}%"


def clean(obj):
    """Recursively replace non-finite floats by ``None`` for strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalar
        return clean(obj.item())
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    return buf.getvalue()


def md_table(header: Sequence[str], rows: Iterable[Sequence[str]], align: str | None = None) -> str:
    header = list(header)
    align = align or ("l" + "r" * (len(header) - 1))
    sep = [":--" if a == "l" else "--:" for a in align]
    lines = ["| " + " | ".join(header) + " |", "| " + " | ".join(sep) + " |"]
    lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


# -- evaluation ----------------------------------------------------------------

def eval_table(reports: Mapping[str, EvalReport]) -> str:
    rows = []
    for name, r in reports.items():
        try:
            status = classify_saturation(r).value
        except Exception:
            status = NA
        flags = []
        if r.prefit and not r.fit_converged:
            flags.append("fit not converged")
        if r.negative_slope:
            flags.append("negative slope")
        rows.append([name, fmt3(r.plcc), fmt3(r.srcc), fmt3(r.raw_pearson), str(r.n), status,
                     ", ".join(flags) or "-"])
    return md_table(["Scorer", "PLCC", "SRCC", "raw PLCC", "n", "Status", "Flags"], rows, "lrrrrll")


# -- cross-database --------------------------------------------------------------

def cross_table(cm: CrossMatrix) -> str:
    """Model rows with transferred PLCC/SRCC, each followed by its gain row."""
    targets = cm.targets
    header = ["Model"] + [f"{t} {m.value.upper()}" for t in targets for m in Metric]
    rows = []
    for model in cm.models:
        rows.append([model] + [fmt3(cm.cells[(model, t, m)].p_test) for t in targets for m in Metric])
        rows.append([f"{GAIN_PREFIX} {model}"] + [fmt_pct(cm.gain(model, t, m)) for t in targets for m in Metric])
    mg = cm.mean_gain
    rows.append([f"{GAIN_PREFIX} Mean Gain"] + [fmt_pct(mg.get((t, m))) for t in targets for m in Metric])
    return md_table(header, rows)


def cross_csv(cm: CrossMatrix) -> str:
    rows = []
    for (model, t, m), c in cm.cells.items():
        rows.append([cm.source_database, model, t, m.value, c.p_ori, c.p_test, c.gain_percent])
    for (t, m), v in cm.mean_gain.items():
        rows.append([cm.source_database, "MEAN", t, m.value, None, None, v])
    return csv_text(["source", "model", "target", "metric", "p_ori", "p_test", "gain_percent"],
                    [[None if isinstance(v, float) and not math.isfinite(v) else v for v in r] for r in rows])


# -- gaps ------------------------------------------------------------------------

def gap_table(databases: Sequence[str], models: Sequence[str], p_ori: Mapping, p_test: Mapping,
              gaps: Mapping, mean_gaps: Mapping) -> str:
    """Transfer-gap table: a performance row and a ``gain:`` row per model.

    ``gaps[model]`` is ``None`` when the model's baseline is unknown.
    """
    header = ["Model"] + [f"{db} {m.upper()}" for db in databases for m in ("plcc", "srcc")]
    rows = []
    for model in models:
        rows.append([model] + [fmt3(p_test[model][db][m]) for db in databases for m in ("plcc", "srcc")])
        ori = p_ori.get(model)
        label = "Gap (-/-)" if ori is None else f"Gap ({ori['plcc']:.3f}/{ori['srcc']:.3f})"
        g = gaps.get(model)
        rows.append([f"{GAIN_PREFIX} {label}"] + [
            "-" if g is None else fmt_pct(g[db][m]) for db in databases for m in ("plcc", "srcc")])
    rows.append([f"{GAIN_PREFIX} Mean Gap"] + [fmt_pct(mean_gaps[db][m]) for db in databases for m in ("plcc", "srcc")])
    return md_table(header, rows)


# -- ranks -------------------------------------------------------------------------

def rank_table(rt: RankTable) -> str:
    persp = list(rt.per_perspective)
    order = sorted(rt.databases, key=lambda db: rt.final_rank[db])
    rows = [[db] + [str(rt.per_perspective[p][db]) for p in persp]
            + [f"{rt.mean_rank[db]:.2f}", str(rt.final_rank[db])] for db in order]
    return md_table(["Database"] + persp + ["Mean", "Final"], rows)


def rank_csv(rt: RankTable) -> str:
    persp = list(rt.per_perspective)
    return csv_text(["database"] + persp + ["mean", "final"],
                    [[db] + [rt.per_perspective[p][db] for p in persp] + [rt.mean_rank[db], rt.final_rank[db]]
                     for db in rt.databases])
