"""Gap/gain arithmetic, saturation status, cross-database matrices and ranking.

A *gap* (or *gain*, same formula) is the relative change
``(p_test - p_ori) / p_ori * 100`` between a model's native performance and
its performance elsewhere. Undefined values are ``nan`` and are skipped by
every mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, NumericalError
from .metrics import EvalReport

SATURATED_AT = 0.96
UNDERSATURATED_BELOW = 0.85


class Metric(str, Enum):
    PLCC = "plcc"
    SRCC = "srcc"


def gap(p_ori: float, p_test: float) -> float:
    """Relative change in percent; ``nan`` when ``p_ori`` is 0 or missing.

    >>> round(gap(0.917, 0.725), 1)
    -20.9
    """
    if p_ori is None or p_test is None:
        return math.nan
    p_ori, p_test = float(p_ori), float(p_test)
    if p_ori == 0.0 or not (math.isfinite(p_ori) and math.isfinite(p_test)):
        return math.nan
    return (p_test - p_ori) / p_ori * 100.0


gain = gap


@dataclass(frozen=True)
class GapRecord:
    model: str
    database: str
    metric: Metric
    p_ori: float | None
    p_test: float
    gap_percent: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric(self.metric))
        object.__setattr__(self, "gap_percent", gap(self.p_ori, self.p_test))

    @property
    def defined(self) -> bool:
        return math.isfinite(self.gap_percent)


def mean_gap(gaps: Iterable) -> float:
    """Arithmetic mean of the defined gaps (``GapRecord`` or plain numbers)."""
    vals = []
    for g in gaps:
        v = g.gap_percent if isinstance(g, GapRecord) else (math.nan if g is None else float(g))
        if math.isfinite(v):
            vals.append(v)
    if not vals:
        return math.nan
    return math.fsum(vals) / len(vals)


def mean_gap_table(records: Iterable[GapRecord]) -> dict[tuple[str, Metric], float]:
    """``(database, metric) -> mean gap`` over all defined records."""
    groups: dict[tuple[str, Metric], list[GapRecord]] = {}
    for r in records:
        groups.setdefault((r.database, r.metric), []).append(r)
    return {k: mean_gap(v) for k, v in groups.items()}


# -- saturation --------------------------------------------------------------

class Saturation(str, Enum):
    SATURATED = "Saturated"
    INTERMEDIATE = "Intermediate"
    UNDERSATURATED = "Undersaturated"


def classify_saturation(report) -> Saturation:
    """Status from ``min(plcc, srcc)``: >= 0.96 saturated, < 0.85 undersaturated.

    ``report`` is an ``EvalReport`` or a ``(plcc, srcc)`` pair.
    """
    if isinstance(report, EvalReport):
        p, s = report.plcc, report.srcc
    else:
        p, s = report
    if p is None or s is None or not (math.isfinite(p) and math.isfinite(s)):
        raise NumericalError(f"cannot classify undefined correlations ({p}, {s})")
    low = min(p, s)
    if low >= SATURATED_AT:
        return Saturation.SATURATED
    if low < UNDERSATURATED_BELOW:
        return Saturation.UNDERSATURATED
    return Saturation.INTERMEDIATE


# -- cross-database matrices --------------------------------------------------

@dataclass(frozen=True)
class CrossCell:
    p_ori: float
    p_test: float

    @property
    def gain_percent(self) -> float:
        return gain(self.p_ori, self.p_test)


@dataclass
class CrossMatrix:
    """Gains of models trained on ``source_database`` and tested elsewhere."""

    source_database: str
    cells: dict = field(default_factory=dict)  # (model, target, Metric) -> CrossCell

    def add(self, model: str, target: str, metric, p_ori: float, p_test: float) -> None:
        self.cells[(model, target, Metric(metric))] = CrossCell(p_ori, p_test)

    @property
    def models(self) -> list[str]:
        return list(dict.fromkeys(k[0] for k in self.cells))

    @property
    def targets(self) -> list[str]:
        return list(dict.fromkeys(k[1] for k in self.cells))

    def gain(self, model: str, target: str, metric) -> float:
        return self.cells[(model, target, Metric(metric))].gain_percent

    @property
    def mean_gain(self) -> dict[tuple[str, Metric], float]:
        out = {}
        for t in self.targets:
            for m in Metric:
                vals = [c.gain_percent for (mo, tg, me), c in self.cells.items() if tg == t and me == m]
                if vals:
                    out[(t, m)] = mean_gap(vals)
        return out

    def overall_mean_gain(self, metric=Metric.PLCC, exclude_source: bool = True) -> float:
        """Mean over targets of the per-target mean gain."""
        metric = Metric(metric)
        vals = [v for (t, m), v in self.mean_gain.items()
                if m == metric and not (exclude_source and t == self.source_database)]
        return mean_gap(vals)

    def to_dict(self) -> dict:
        def f(v):
            return None if not math.isfinite(v) else v

        return {
            "source_database": self.source_database,
            "cells": [
                {"model": mo, "target": t, "metric": me.value, "p_ori": f(c.p_ori),
                 "p_test": f(c.p_test), "gain_percent": f(c.gain_percent)}
                for (mo, t, me), c in self.cells.items()
            ],
            "mean_gain": [
                {"target": t, "metric": me.value, "mean_gain_percent": f(v)}
                for (t, me), v in self.mean_gain.items()
            ],
        }


def cross_validate(models: Mapping[str, object], source_db: str, target_dbs: Mapping[str, object],
                   protocol: Callable[[object, object], EvalReport],
                   in_domain: Mapping[str, EvalReport]) -> CrossMatrix:
    """Evaluate every trained model on every target database.

    Args:
        models: model name -> trained scorer (``None`` marks a missing one).
        source_db: name of the training database.
        target_dbs: target name -> database handle passed to ``protocol``.
        protocol: ``protocol(scorer, target_db)`` returns an ``EvalReport``
            over all images of the target.
        in_domain: model name -> held-out test report on ``source_db``;
            supplies ``p_ori``.
    """
    cm = CrossMatrix(source_db)
    for name, scorer in models.items():
        if scorer is None:
            raise ConfigurationError(f"no trained scorer {name!r} for source {source_db!r}")
        if name not in in_domain:
            raise ConfigurationError(f"no in-domain report for {name!r} on {source_db!r}")
        ori = in_domain[name]
        for tname, tdb in target_dbs.items():
            # the source itself scores its own baseline: gain 0 by construction
            rep = ori if tname == source_db else protocol(scorer, tdb)
            cm.add(name, tname, Metric.PLCC, ori.plcc, rep.plcc)
            cm.add(name, tname, Metric.SRCC, ori.srcc, rep.srcc)
    return cm


# -- ranking -------------------------------------------------------------------

class Direction(str, Enum):
    HIGHER_BETTER = "higher"
    LOWER_BETTER = "lower"
    HIGHER_MAGNITUDE_BETTER = "higher-magnitude"
    LOWER_MAGNITUDE_BETTER = "lower-magnitude"


@dataclass(frozen=True)
class RankResult:
    ranks: dict           # database -> rank (1 = best)
    ties: tuple = ()      # groups of databases sharing a rank

    @property
    def is_permutation(self) -> bool:
        return sorted(self.ranks.values()) == list(range(1, len(self.ranks) + 1))


def _badness(v: float, direction: Direction) -> float:
    if direction is Direction.HIGHER_BETTER:
        return -v
    if direction is Direction.LOWER_BETTER:
        return v
    if direction is Direction.HIGHER_MAGNITUDE_BETTER:
        return -abs(v)
    return abs(v)


def rank_from_metric(values: Mapping[str, float], direction=Direction.HIGHER_BETTER,
                     tie_break: Mapping[str, float] | None = None) -> RankResult:
    """Dense ranks (1 = best); exact ties share the better rank and are reported.

    With ``tie_break`` (database -> secondary key, lower is better) ties are
    resolved by that key and then by name, giving a permutation of ``1..n``;
    the original ties are still reported.
    """
    direction = Direction(direction)
    for db, v in values.items():
        if v is None or not math.isfinite(v):
            raise NumericalError(f"undefined ranking value for database {db!r}")
    bad = {db: _badness(float(v), direction) for db, v in values.items()}
    levels = sorted(set(bad.values()))
    groups = [tuple(sorted(db for db in bad if bad[db] == lv)) for lv in levels]
    ties = tuple(g for g in groups if len(g) > 1)
    if tie_break is None:
        ranks = {db: i + 1 for i, g in enumerate(groups) for db in g}
    else:
        order = sorted(bad, key=lambda db: (bad[db], tie_break[db], db))
        ranks = {db: i + 1 for i, db in enumerate(order)}
    return RankResult({db: ranks[db] for db in values}, ties)


@dataclass(frozen=True)
class RankTable:
    databases: tuple[str, ...]
    per_perspective: dict  # perspective -> {db: rank}
    final_rank: dict       # db -> rank
    mean_rank: dict        # db -> mean of perspective ranks

    def to_dict(self) -> dict:
        return {
            "databases": list(self.databases),
            "per_perspective": {p: {db: r[db] for db in self.databases} for p, r in self.per_perspective.items()},
            "mean_rank": {db: self.mean_rank[db] for db in self.databases},
            "final_rank": {db: self.final_rank[db] for db in self.databases},
        }


def _check_permutation(name: str, ranks: Mapping[str, int], dbs: Sequence[str]) -> None:
    if set(ranks) != set(dbs):
        raise ContractError(f"perspective {name}: databases {sorted(ranks)} differ from {sorted(dbs)}")
    if sorted(int(r) for r in ranks.values()) != list(range(1, len(dbs) + 1)):
        raise ContractError(f"perspective {name}: ranks {sorted(ranks.values())} are not a permutation of 1..{len(dbs)}")


def aggregate_ranks(per_perspective: Mapping[str, Mapping[str, int]]) -> RankTable:
    """Final rank = rank of the mean perspective rank.

    Ties in the mean go to the database with the best single-perspective
    rank, then to the alphabetically first name.
    """
    if not per_perspective:
        raise ContractError("no perspectives to aggregate")
    first = next(iter(per_perspective.values()))
    dbs = tuple(first)
    for name, ranks in per_perspective.items():
        _check_permutation(name, ranks, dbs)
    k = len(per_perspective)
    mean = {db: math.fsum(int(r[db]) for r in per_perspective.values()) / k for db in dbs}
    best = {db: min(int(r[db]) for r in per_perspective.values()) for db in dbs}
    order = sorted(dbs, key=lambda db: (mean[db], best[db], db))
    final = {db: i + 1 for i, db in enumerate(order)}
    return RankTable(dbs, {p: dict(r) for p, r in per_perspective.items()}, final, mean)


# -- metric-driven perspectives --------------------------------------------------

def _metric_mean(pairs: Mapping[str, Mapping[str, float]], metrics) -> dict[str, float]:
    return {db: float(np.mean([v[m] for m in metrics])) for db, v in pairs.items()}


def q1_ranks(mean_gaps: Mapping[str, Mapping[str, float]], metrics=("plcc",)) -> RankResult:
    """Transfer-gap perspective: the largest mean gap magnitude ranks first."""
    vals = _metric_mean(mean_gaps, metrics)
    return rank_from_metric(vals, Direction.HIGHER_MAGNITUDE_BETTER, tie_break={db: 0.0 for db in vals})


def q2_ranks(statuses: Mapping[str, Sequence[Saturation]]) -> RankResult:
    """Saturation perspective: fewest Saturated cells ranks first.

    Ties go to the database with more Undersaturated cells.
    """
    sat = {db: sum(s is Saturation.SATURATED for s in v) for db, v in statuses.items()}
    under = {db: -sum(s is Saturation.UNDERSATURATED for s in v) for db, v in statuses.items()}
    return rank_from_metric(sat, Direction.LOWER_BETTER, tie_break=under)


def q3_ranks(mean_gains: Mapping[str, float]) -> RankResult:
    """Generalisation perspective: highest mean cross-database gain ranks first.

    ``mean_gains`` maps a source database to the mean over its targets of
    the per-target mean gain.
    """
    return rank_from_metric(mean_gains, Direction.HIGHER_BETTER, tie_break={db: 0.0 for db in mean_gains})


def t_ranks(performance: Mapping[str, Mapping[str, float]], metrics=("plcc",)) -> RankResult:
    """Debiased perspective: highest mean performance on the external set first."""
    vals = _metric_mean(performance, metrics)
    return rank_from_metric(vals, Direction.HIGHER_BETTER, tie_break={db: 0.0 for db in vals})
