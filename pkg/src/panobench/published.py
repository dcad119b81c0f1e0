"""Replay of the embedded published tables through the analysis engine."""

from __future__ import annotations

import math
from pathlib import Path

from . import plotting, report
from .analysis import (
    CrossMatrix,
    GapRecord,
    Metric,
    Saturation,
    aggregate_ranks,
    classify_saturation,
    mean_gap,
    q1_ranks,
    q2_ranks,
    q3_ranks,
    t_ranks,
)
from .experiment import staged_output
from .fixtures import DATABASES, METRICS, PERSPECTIVES, known_inconsistencies, published_fixtures


def biqa_gap_records() -> list[GapRecord]:
    """Gap of every (model, database, metric) cell from the printed p_ori/p_test."""
    fx = published_fixtures().biqa_transfer
    out = []
    for model in fx.models:
        for db in fx.databases:
            for metric in METRICS:
                ori, test, _ = fx.lookup(model, db, metric)
                out.append(GapRecord(model, db, metric, ori, test))
    return out


def mean_gap_rows(source: str = "printed") -> dict:
    """``db -> metric -> mean gap``.

    ``source="printed"`` averages the printed per-model gap cells,
    ``"recomputed"`` averages gaps recomputed from p_ori/p_test.
    """
    fx = published_fixtures().biqa_transfer
    out = {}
    for db in fx.databases:
        out[db] = {}
        for metric in METRICS:
            if source == "printed":
                vals = [fx.printed_gap[m][db][metric] for m in fx.models_with_gap]
            else:
                vals = [r for r in biqa_gap_records() if r.database == db and r.metric.value == metric]
            out[db][metric] = mean_gap(vals)
    return out


def cross_matrix(source: str) -> CrossMatrix:
    """Cross table of ``source`` with p_ori from the in-domain table."""
    fx = published_fixtures()
    table = fx.cross[source]
    cm = CrossMatrix(source)
    for model in table.models:
        plcc, srcc = fx.in_domain.pair(model, source)
        for target in table.targets:
            cm.add(model, target, Metric.PLCC, plcc, table.p_test[model][target]["plcc"])
            cm.add(model, target, Metric.SRCC, srcc, table.p_test[model][target]["srcc"])
    return cm


def mean_gain_by_source(metric: str = "plcc", printed: bool = True) -> dict[str, float]:
    """Mean over targets of each source table's mean-gain row."""
    fx = published_fixtures()
    out = {}
    for src, table in fx.cross.items():
        if printed:
            out[src] = mean_gap([table.printed_mean_gain[t][metric] for t in table.targets])
        else:
            out[src] = cross_matrix(src).overall_mean_gain(metric)
    return out


def saturation_statuses() -> dict[str, list[Saturation]]:
    fx = published_fixtures().in_domain
    return {db: [classify_saturation(fx.pair(m, db)) for m in fx.models] for db in fx.databases}


def metric_driven_ranks() -> dict:
    """Q1/Q2/Q3/T recomputed from the tables (PLCC where a metric is needed)."""
    fx = published_fixtures()
    return {
        "Q1": q1_ranks(mean_gap_rows("printed")),
        "Q2": q2_ranks(saturation_statuses()),
        "Q3": q3_ranks(mean_gain_by_source("plcc")),
        "T": t_ranks(fx.debiased.printed_mean),
    }


def published_rank_table():
    fx = published_fixtures()
    return aggregate_ranks({p: fx.rank_column(p) for p in PERSPECTIVES})


def write_fixture_report(out_dir, figures: bool = True) -> dict:
    """Full analysis bundle of the embedded tables (Markdown, CSV, JSON, PNG)."""
    fx = published_fixtures()
    b = fx.biqa_transfer
    printed_means = mean_gap_rows("printed")
    recomputed = {m: {db: {k: GapRecord(m, db, k, *fx.biqa_transfer.lookup(m, db, k)[:2]).gap_percent
                           for k in METRICS} for db in b.databases}
                  for m in b.models_with_gap}
    statuses = saturation_statuses()
    derived = metric_driven_ranks()
    derived_table = aggregate_ranks({p: r.ranks for p, r in derived.items()})
    published = published_rank_table()
    crosses = {src: cross_matrix(src) for src in fx.cross}

    doc = {
        "gap": {"recomputed": recomputed, "mean_gap_printed_cells": printed_means,
                "mean_gap_recomputed": mean_gap_rows("recomputed"),
                "inconsistent_printed_cells": known_inconsistencies()},
        "saturation": {db: {s.value: sum(x is s for x in v) for s in Saturation} for db, v in statuses.items()},
        "cross": {src: cm.to_dict() for src, cm in crosses.items()},
        "mean_gain_by_source": mean_gain_by_source("plcc"),
        "ranks": {"published": published.to_dict(), "metric_driven": derived_table.to_dict(),
                  "metric_driven_ties": {p: [list(t) for t in r.ties] for p, r in derived.items()}},
    }
    with staged_output(out_dir) as out:
        report.write_text(out / "fixtures.json", report.dumps(doc))
        md = ["# Published-table analysis\n", "## Transfer gap (recomputed from p_ori/p_test)\n",
              report.gap_table(b.databases, b.models, b.p_ori, b.p_test, recomputed, printed_means)]
        bad = known_inconsistencies()
        if bad:
            md.append(f"{len(bad)} printed gap cell(s) do not follow from their printed inputs; "
                      "see `fixtures.json` -> `gap.inconsistent_printed_cells`.\n")
        md.append("## Saturation status counts\n")
        md.append(report.md_table(["Database"] + [s.value for s in Saturation],
                                  [[db] + [str(doc["saturation"][db][s.value]) for s in Saturation]
                                   for db in DATABASES]))
        for src, cm in crosses.items():
            md += [f"## Trained on {src}\n", report.cross_table(cm)]
        md += ["## Ranking (published perspective columns)\n", report.rank_table(published),
               "## Ranking (metric-driven perspectives)\n", report.rank_table(derived_table)]
        report.write_text(out / "fixtures.md", "\n".join(md))
        rows = [[r.model, r.database, r.metric.value, r.p_ori, r.p_test,
                 None if not math.isfinite(r.gap_percent) else r.gap_percent] for r in biqa_gap_records()]
        report.write_text(out / "gaps.csv", report.csv_text(
            ["model", "database", "metric", "p_ori", "p_test", "gap_percent"], rows))
        report.write_text(out / "cross.csv", "".join(
            report.cross_csv(cm) if i == 0 else report.cross_csv(cm).split("\n", 1)[1]
            for i, cm in enumerate(crosses.values())))
        report.write_text(out / "ranks.csv", report.rank_csv(published))
        if figures:
            plotting.gap_bars(printed_means, out / "figures" / "mean_gap.png")
            srcs = list(crosses)
            grid = [[crosses[s].mean_gain.get((t, Metric.PLCC), math.nan) for t in DATABASES] for s in srcs]
            plotting.gain_heatmap(grid, srcs, list(DATABASES), out / "figures" / "mean_gain_matrix.png",
                                  "Mean PLCC gain (%), rows: training database")
            plotting.rank_chart(published.per_perspective, published.final_rank,
                                out / "figures" / "ranks.png")
    return doc
