"""Correlation criteria, logistic prefitting, splitting and dual-MOS merging.

Undefined correlations (fewer than three samples, or a constant argument)
are returned as ``nan``; the accompanying ``EvalReport.diagnostics`` says
why.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import optimize, special, stats

from .errors import ContractError, DataError

log = logging.getLogger(__name__)

LOGISTIC_MAXITER = 5000
LOGISTIC_RTOL = 1e-10
MIN_CORR_N = 3
MIN_FIT_N = 5


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


def _as_pair(pred, mos, min_n: int = MIN_CORR_N) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(pred, dtype=np.float64).ravel()
    y = np.asarray(mos, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ContractError(f"length mismatch: {x.size} predictions vs {y.size} scores")
    if x.size < min_n:
        raise ContractError(f"need at least {min_n} samples, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ContractError("predictions and scores must be finite")
    return x, y


def _pearson(x: np.ndarray, y: np.ndarray) -> tuple[float, str | None]:
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        which = "prediction" if sxx == 0.0 else "score"
        return math.nan, f"zero variance in {which} vector; correlation undefined"
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r)), None


def pearson(pred, mos) -> float:
    """Raw Pearson correlation; ``nan`` if either argument is constant."""
    x, y = _as_pair(pred, mos)
    r, diag = _pearson(x, y)
    if diag:
        log.warning(diag)
    return r


def srcc(pred, mos) -> float:
    """Spearman rank correlation with average ranks for ties.

    >>> srcc([1, 2, 3, 5, 4], [1, 2, 3, 4, 5])
    0.9
    """
    x, y = _as_pair(pred, mos)
    r, diag = _pearson(stats.rankdata(x), stats.rankdata(y))
    if diag:
        log.warning("SRCC: %s", diag)
    return r


# -- five-parameter logistic -------------------------------------------------

def logistic5(x, b1, b2, b3, b4, b5):
    """``b1 * (1/2 - 1/(1 + exp(b2 (x - b3)))) + b4 x + b5``, overflow safe."""
    x = np.asarray(x, dtype=np.float64)
    # 1 / (1 + exp(z)) == expit(-z)
    return b1 * (0.5 - special.expit(-b2 * (x - b3))) + b4 * x + b5


@dataclass(frozen=True)
class LogisticFit:
    params: tuple[float, float, float, float, float]
    converged: bool
    ssr: float
    linear_ssr: float
    iterations: int
    restarted: bool = False

    def __iter__(self):
        # unpacks as (params, converged)
        yield self.params
        yield self.converged

    def __call__(self, x) -> np.ndarray:
        return logistic5(x, *self.params)


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx if sxx > 0 else 0.0
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    return slope, intercept, float(resid @ resid)


def _simplex(x, y, start, fatol):
    def ssr(beta):
        r = logistic5(x, *beta) - y
        val = float(r @ r)
        return val if math.isfinite(val) else math.inf

    res = optimize.minimize(
        ssr, np.asarray(start, float), method="Nelder-Mead",
        options={"maxiter": LOGISTIC_MAXITER, "maxfev": 4 * LOGISTIC_MAXITER,
                 "xatol": 1e-12, "fatol": fatol},
    )
    return np.asarray(res.x, float), float(res.fun), int(res.nit)


def fit_logistic(pred, mos) -> LogisticFit:
    """Least-squares fit of the five-parameter logistic by Nelder-Mead.

    Start: ``b1 = range(mos)``, ``b2 = 1/std(pred)``, ``b3 = mean(pred)``,
    ``b4 = 0``, ``b5 = mean(mos)``. The simplex is restarted from its own
    optimum while that still helps, and once from the best linear fit
    (``b1 = 0``) if the logistic start ends worse than a straight line.
    ``converged`` is false only if the final residual still exceeds the
    linear one, or with fewer than five samples.
    """
    x, y = _as_pair(pred, mos, min_n=1)
    slope, intercept, lin_ssr = _linear_fit(x, y)
    if x.size < MIN_FIT_N:
        params = (0.0, 1.0, float(x.mean()), slope, intercept)
        return LogisticFit(params, False, lin_ssr, lin_ssr, 0)

    sd = float(x.std())
    b2 = 1.0 / sd if sd > 0 else 1.0
    start = (float(y.max() - y.min()), b2, float(x.mean()), 0.0, float(y.mean()))
    energy = float((y - y.mean()) @ (y - y.mean()))
    fatol = LOGISTIC_RTOL * max(energy, 1e-300)

    beta, best, iters = _simplex(x, y, start, fatol)
    for _ in range(4):
        b, f, n = _simplex(x, y, beta, fatol)
        iters += n
        improved = f < best - fatol
        if f <= best:
            beta, best = b, f
        if not improved:
            break

    restarted = False
    if best > lin_ssr:
        restarted = True
        b, f, n = _simplex(x, y, (0.0, b2, float(x.mean()), slope, intercept), fatol)
        iters += n
        if f < best:
            beta, best = b, f
    converged = best <= lin_ssr * (1.0 + 1e-12) + 1e-300
    return LogisticFit(tuple(float(v) for v in beta), bool(converged), best, lin_ssr, iters, restarted)


@dataclass(frozen=True)
class PlccResult:
    plcc: float
    raw_pearson: float
    fit: LogisticFit | None
    negative_slope: bool
    diagnostics: tuple[str, ...] = ()


def plcc(pred, mos, prefit: bool = True) -> PlccResult:
    """Pearson correlation, optionally after logistic remapping of ``pred``."""
    x, y = _as_pair(pred, mos)
    raw, diag = _pearson(x, y)
    diags = [diag] if diag else []
    negative = bool(raw < 0)
    if not prefit or diag:
        return PlccResult(raw, raw, None, negative, tuple(diags))
    fit = fit_logistic(x, y)
    if not fit.converged:
        why = (f"n={x.size} < {MIN_FIT_N}" if x.size < MIN_FIT_N
               else "logistic residual above linear residual")
        diags.append(f"logistic fit not converged ({why}); PLCC falls back to raw Pearson")
        return PlccResult(raw, raw, fit, negative, tuple(diags))
    fitted, d2 = _pearson(fit(x), y)
    if d2:
        diags.append(f"fitted curve is flat: {d2}; PLCC falls back to raw Pearson")
        return PlccResult(raw, raw, fit, negative, tuple(diags))
    if negative:
        diags.append("predictions are anti-correlated with MOS (negative slope)")
    return PlccResult(fitted, raw, fit, negative, tuple(diags))


def _json_float(v):
    return None if v is None or not math.isfinite(v) else float(v)


def _from_json_float(v):
    return math.nan if v is None else float(v)


@dataclass(frozen=True)
class EvalReport:
    plcc: float
    srcc: float
    n: int
    logistic_params: tuple[float, ...] | None
    fit_converged: bool
    raw_pearson: float
    negative_slope: bool = False
    prefit: bool = True
    diagnostics: tuple[str, ...] = ()

    @property
    def defined(self) -> bool:
        return math.isfinite(self.plcc) and math.isfinite(self.srcc)

    def to_dict(self) -> dict:
        return {
            "plcc": _json_float(self.plcc),
            "srcc": _json_float(self.srcc),
            "n": self.n,
            "logistic_params": None if self.logistic_params is None else [float(b) for b in self.logistic_params],
            "fit_converged": self.fit_converged,
            "raw_pearson": _json_float(self.raw_pearson),
            "negative_slope": self.negative_slope,
            "prefit": self.prefit,
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        try:
            params = doc.get("logistic_params")
            return cls(
                plcc=_from_json_float(doc["plcc"]),
                srcc=_from_json_float(doc["srcc"]),
                n=int(doc["n"]),
                logistic_params=None if params is None else tuple(float(b) for b in params),
                fit_converged=bool(doc["fit_converged"]),
                raw_pearson=_from_json_float(doc["raw_pearson"]),
                negative_slope=bool(doc.get("negative_slope", False)),
                prefit=bool(doc.get("prefit", True)),
                diagnostics=tuple(doc.get("diagnostics", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed evaluation report: {exc}") from exc


def evaluate(pred, mos, prefit: bool = True) -> EvalReport:
    """PLCC (with optional logistic prefit) and SRCC in one report."""
    x, y = _as_pair(pred, mos)
    p = plcc(x, y, prefit=prefit)
    s, sdiag = _pearson(stats.rankdata(x), stats.rankdata(y))
    diags = list(p.diagnostics)
    if sdiag and sdiag not in diags:
        diags.append(f"SRCC: {sdiag}")
    fit = p.fit
    return EvalReport(
        plcc=p.plcc,
        srcc=s,
        n=int(x.size),
        logistic_params=None if fit is None else fit.params,
        fit_converged=bool(fit is not None and fit.converged),
        raw_pearson=p.raw_pearson,
        negative_slope=p.negative_slope,
        prefit=prefit,
        diagnostics=tuple(diags),
    )


# -- records, splitting, dual MOS ---------------------------------------------

@dataclass(frozen=True)
class QualityRecord:
    image_id: str
    predicted: float
    mos: float
    mos2: float | None = None
    split: Split | None = None
    database: str = ""
    distortion_tag: str | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("predicted", "mos"):
            if not math.isfinite(getattr(self, name)):
                raise ContractError(f"{self.image_id}: {name} must be finite")
        if self.mos2 is not None and not math.isfinite(self.mos2):
            raise ContractError(f"{self.image_id}: mos2 must be finite when present")
        if self.split is not None:
            object.__setattr__(self, "split", Split(self.split))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["split"] = None if self.split is None else self.split.value
        d["notes"] = list(self.notes)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "QualityRecord":
        doc = dict(doc)
        doc["notes"] = tuple(doc.get("notes", ()))
        return cls(**doc)


def split_counts(n: int, ratio: float = 0.8) -> tuple[int, int]:
    """``(train, test)`` sizes with ``train = round(ratio * n)`` (half up)."""
    if not 0.0 < ratio < 1.0:
        raise ContractError(f"split ratio {ratio} must lie in (0, 1)")
    n_train = int(math.floor(ratio * n + 0.5))
    return n_train, n - n_train


def split_indices(n: int, ratio: float = 0.8, seed: int = 0,
                  groups: Sequence[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random partition of ``range(n)`` into sorted train/test indices.

    With ``groups`` the partition is content-level: whole groups go to one
    side, ``round(ratio * n_groups)`` groups for training.
    """
    if n < MIN_FIT_N:
        raise ContractError(f"need at least {MIN_FIT_N} records to split, got {n}")
    rng = np.random.default_rng(int(seed))
    if groups is None:
        n_train, _ = split_counts(n, ratio)
        perm = rng.permutation(n)
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])
    if len(groups) != n:
        raise ContractError("one group label per record required")
    labels = sorted(set(groups))
    if len(labels) < 2:
        raise ContractError("content-level split needs at least two groups")
    g_train, _ = split_counts(len(labels), ratio)
    g_train = min(max(g_train, 1), len(labels) - 1)
    perm = rng.permutation(len(labels))
    train_groups = {labels[i] for i in perm[:g_train]}
    mask = np.array([g in train_groups for g in groups])
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def split_dataset(records: Sequence, ratio: float = 0.8, seed: int = 0, group_by=None) -> list:
    """Return copies of ``records`` with their ``split`` field set.

    ``records`` are dataclasses with a ``split`` field. ``group_by`` is an
    optional callable giving each record's content group.
    """
    groups = None if group_by is None else [str(group_by(r)) for r in records]
    train, _ = split_indices(len(records), ratio, seed, groups)
    in_train = set(train.tolist())
    return [dataclasses.replace(r, split=Split.TRAIN if i in in_train else Split.TEST)
            for i, r in enumerate(records)]


def merge_dual_mos(record):
    """Replace ``mos`` by the mean of both ratings and clear ``mos2``."""
    if getattr(record, "mos2", None) is None:
        raise ContractError(f"{_record_id(record)}: no second MOS to merge")
    merged = (record.mos + record.mos2) / 2.0
    changes = {"mos": merged, "mos2": None}
    if hasattr(record, "notes"):
        changes["notes"] = tuple(record.notes) + (f"mos averaged from dual ratings ({record.mos!r}, {record.mos2!r})",)
    return dataclasses.replace(record, **changes)


def _record_id(record) -> str:
    return str(getattr(record, "image_id", getattr(record, "id", "record")))
