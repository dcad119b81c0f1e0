"""Published benchmark numbers, embedded for arithmetic regression tests.

Five JSON documents ship under ``panobench/data``:

* ``biqa_transfer.json``: planar models pretrained elsewhere, tested on the
  seven panoramic databases, with their original (p_ori) performance, the
  printed gap per cell and the printed mean-gap row.
* ``in_domain.json``: retrained in-domain test performance of fourteen
  panoramic models (type M1 = no panoramic-specific design, M2 = with).
* ``cross_database.json``: one table per source database; p_test of eight
  models on the six other databases, printed gains and mean-gain rows.
* ``debiased.json``: the same eight models tested on an AIGC database.
* ``global_rank.json``: per-perspective and final database ranks.

Values are verbatim, including a few printed cells that are inconsistent
with their own inputs; see ``known_inconsistencies``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import DataError

DATABASES = ("CVIQ", "OIQA", "MVAQD", "IQA-ODI", "OSIQA", "OIQ-10K", "JUFE-10K")
METRICS = ("plcc", "srcc")
PERSPECTIVES = ("Q1", "Q2", "Q3", "T")


def _load(name: str) -> dict:
    try:
        return json.loads(resources.files("panobench.data").joinpath(name).read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read embedded fixture {name}: {exc}") from exc


@dataclass(frozen=True)
class BiqaTransfer:
    databases: tuple[str, ...]
    models: tuple[str, ...]
    p_ori: dict          # model -> {metric: value} or None when unknown
    p_test: dict         # model -> db -> metric -> value
    printed_gap: dict    # model -> db -> metric -> percent (absent when undefined)
    printed_mean_gap: dict  # db -> metric -> percent
    printed_rank: dict   # db -> rank printed in the column header

    def lookup(self, model: str, database: str, metric: str):
        """``(p_ori, p_test, printed_gap)``; undefined entries are ``None``."""
        ori = self.p_ori.get(model)
        gap = self.printed_gap.get(model)
        return (
            None if ori is None else ori[metric],
            self.p_test[model][database][metric],
            None if gap is None else gap[database][metric],
        )

    @property
    def models_with_gap(self) -> tuple[str, ...]:
        return tuple(m for m in self.models if self.p_ori.get(m) is not None)


@dataclass(frozen=True)
class InDomain:
    databases: tuple[str, ...]
    models: tuple[str, ...]
    types: dict        # model -> "M1" | "M2"
    performance: dict  # model -> db -> metric -> value
    printed_rank: dict

    def pair(self, model: str, database: str) -> tuple[float, float]:
        p = self.performance[model][database]
        return p["plcc"], p["srcc"]


@dataclass(frozen=True)
class CrossTable:
    source: str
    targets: tuple[str, ...]
    models: tuple[str, ...]
    p_test: dict          # model -> target -> metric -> value
    printed_gain: dict    # model -> target -> metric -> percent
    printed_mean_gain: dict  # target -> metric -> percent


@dataclass(frozen=True)
class Debiased:
    target: str
    sources: tuple[str, ...]
    models: tuple[str, ...]
    performance: dict   # model -> source -> metric -> value
    printed_mean: dict  # source -> metric -> value
    printed_rank: dict


@dataclass(frozen=True)
class PublishedFixtures:
    biqa_transfer: BiqaTransfer
    in_domain: InDomain
    cross: dict  # source -> CrossTable
    debiased: Debiased
    global_ranks: dict  # db -> {Q1, Q2, Q3, T, Final}

    def rank_column(self, column: str) -> dict:
        return {db: r[column] for db, r in self.global_ranks.items()}


@lru_cache(maxsize=1)
def published_fixtures() -> PublishedFixtures:
    b = _load("biqa_transfer.json")
    biqa = BiqaTransfer(
        databases=tuple(b["databases"]),
        models=tuple(m["model"] for m in b["models"]),
        p_ori={m["model"]: m["p_ori"] for m in b["models"]},
        p_test={m["model"]: m["p_test"] for m in b["models"]},
        printed_gap={m["model"]: m["printed_gap"] for m in b["models"] if m["printed_gap"]},
        printed_mean_gap=b["printed_mean_gap"],
        printed_rank=b["printed_rank"],
    )
    d = _load("in_domain.json")
    in_domain = InDomain(
        databases=tuple(d["databases"]),
        models=tuple(m["model"] for m in d["models"]),
        types={m["model"]: m["type"] for m in d["models"]},
        performance={m["model"]: m["performance"] for m in d["models"]},
        printed_rank=d["printed_rank"],
    )
    c = _load("cross_database.json")
    cross = {}
    for src in c["sources"]:
        t = c["tables"][src]
        cross[src] = CrossTable(
            source=src,
            targets=tuple(t["targets"]),
            models=tuple(m["model"] for m in t["models"]),
            p_test={m["model"]: m["p_test"] for m in t["models"]},
            printed_gain={m["model"]: m["printed_gain"] for m in t["models"]},
            printed_mean_gain=t["printed_mean_gain"],
        )
    t = _load("debiased.json")
    debiased = Debiased(
        target=t["target"],
        sources=tuple(t["sources"]),
        models=tuple(m["model"] for m in t["models"]),
        performance={m["model"]: m["performance"] for m in t["models"]},
        printed_mean=t["printed_mean"],
        printed_rank=t["printed_rank"],
    )
    g = _load("global_rank.json")
    return PublishedFixtures(biqa, in_domain, cross, debiased, g["ranks"])


def known_inconsistencies(tolerance: float = 0.15) -> list[dict]:
    """Printed planar-transfer gaps that do not follow from their printed inputs."""
    fx = published_fixtures().biqa_transfer
    bad = []
    for model in fx.models_with_gap:
        for db in fx.databases:
            for metric in METRICS:
                ori, test, printed = fx.lookup(model, db, metric)
                value = (test - ori) / ori * 100.0
                if abs(value - printed) > tolerance:
                    bad.append({"model": model, "database": db, "metric": metric,
                                "p_ori": ori, "p_test": test, "printed": printed,
                                "recomputed": value,
                                "implied_p_ori": test / (1.0 + printed / 100.0),
                                "implied_p_test": ori * (1.0 + printed / 100.0)})
    return bad
