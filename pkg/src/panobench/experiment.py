"""Experiment orchestration: manifest -> split -> features -> train -> evaluate.

``run_experiment`` covers one database (in-domain protocol), ``run_cross``
trains on a source database and tests every image of each target database.
Outputs (JSON, Markdown, CSV, PNG figures) are written to a staging
directory first and moved into place only when every stage succeeded, so a
failed run leaves nothing behind. All randomness derives from
``config.seed``; results do not depend on ``threads``.
"""

from __future__ import annotations

import contextlib
import dataclasses
import hashlib
import json
import os
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import plotting, report
from .analysis import CrossMatrix, Metric, classify_saturation, cross_validate
from .errors import ConfigurationError, DataError, PanobenchError
from .geometry import ErpImage, load_erp
from .manifest import DatasetManifest, load_manifest
from .metrics import EvalReport, Split, evaluate, split_dataset
from .scoring import (
    ImageAnalysis,
    analyze_image,
    available_scorers,
    fixed_scorers,
    load_scorer,
    train_integrated_scorer,
    train_linear_scorer,
)
from .viewports import make_trajectory

CONFIG_HASH_LEN = 16


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run's numbers.

    ``threads`` and ``out_dir`` affect only speed and location, so they are
    left out of the config hash.
    """

    manifest: str | None = None
    scorers: tuple[str, ...] = ("composite",)
    trajectory: str = "image8"
    split_ratio: float = 0.8
    seed: int = 0
    prefit: bool = True
    group_split: bool = False
    source: str | None = None
    targets: tuple[str, ...] = ()
    out_dir: str = "out"
    threads: int = 1
    figures: bool = True

    def hashed_fields(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("out_dir", "threads", "figures"):
            d.pop(k)
        d["scorers"] = list(self.scorers)
        d["targets"] = list(self.targets)
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:CONFIG_HASH_LEN]

    def validate(self, cross: bool = False) -> None:
        known = available_scorers()
        if not self.scorers:
            raise ConfigurationError("no scorers requested")
        for s in self.scorers:
            if s not in known:
                raise ConfigurationError(f"unknown scorer {s!r}; choose from {', '.join(known)}")
        if len(set(self.scorers)) != len(self.scorers):
            raise ConfigurationError("scorer list has duplicates")
        make_trajectory(self.trajectory)
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigurationError(f"split ratio {self.split_ratio} must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        paths = [self.source, *self.targets] if cross else [self.manifest]
        if cross and not self.targets:
            raise ConfigurationError("cross evaluation needs at least one target database")
        for p in paths:
            if p is None:
                raise ConfigurationError("no database manifest given")
            if not Path(p).is_file():
                raise ConfigurationError(f"database manifest {p} does not exist")


@contextlib.contextmanager
def stage(name: str):
    """Prefix any package error raised inside with ``[name]``."""
    try:
        yield
    except PanobenchError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc
    except ValueError as exc:
        raise DataError(f"[{name}] {exc}") from exc


@contextlib.contextmanager
def staged_output(out_dir):
    """Yield a staging directory; on success its files replace ``out_dir``'s."""
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.partial-", dir=out_dir.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    out_dir.mkdir(parents=True, exist_ok=True)
    for src in sorted(tmp.rglob("*")):
        if src.is_file():
            dst = out_dir / src.relative_to(tmp)
            dst.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src, dst)
    shutil.rmtree(tmp, ignore_errors=True)


# -- feature cache -------------------------------------------------------------

_ANALYSIS_CACHE: dict = {}
_CACHE_LIMIT = 4096


def _file_key(p: Path):
    st = p.stat()
    return (str(p.resolve()), st.st_size, st.st_mtime_ns)


def _load_image(m: DatasetManifest, rel: str, rid: str) -> ErpImage:
    return load_erp(m.resolve(rel), id=rid)


def analyze_manifest(m: DatasetManifest, traj_mode: str, need_reference: bool, threads: int = 1) -> list[ImageAnalysis]:
    """Analyse every row (in manifest order); results are cached per file."""
    traj = make_trajectory(traj_mode)

    def one(row):
        path = m.resolve(row.path)
        ref_rel = row.reference_path if need_reference else None
        key = (_file_key(path), None if ref_rel is None else _file_key(m.resolve(ref_rel)), traj)
        hit = _ANALYSIS_CACHE.get(key)
        if hit is not None:
            return dataclasses.replace(hit, image_id=row.id)
        img = _load_image(m, row.path, row.id)
        ref = None if ref_rel is None else _load_image(m, ref_rel, f"{row.id}:ref")
        a = analyze_image(img, traj, ref)
        if len(_ANALYSIS_CACHE) >= _CACHE_LIMIT:
            _ANALYSIS_CACHE.clear()
        _ANALYSIS_CACHE[key] = a
        return a

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, m.rows))
    return [one(r) for r in m.rows]


def clear_cache() -> None:
    _ANALYSIS_CACHE.clear()


# -- training and scoring --------------------------------------------------------

def _needs_reference(scorers: Sequence[str]) -> bool:
    fixed = fixed_scorers()
    return any(s in fixed and fixed[s].full_reference for s in scorers)


def _check_references(m: DatasetManifest, scorers: Sequence[str]) -> None:
    if _needs_reference(scorers):
        missing = [r.id for r in m.rows if r.reference_path is None]
        if missing:
            raise ConfigurationError(
                f"full-reference scorer requested but {len(missing)} row(s) of {m.name} have no "
                f"reference_path (first: {missing[0]})")


def train_scorer(name: str, analyses: Sequence[ImageAnalysis], mos: Sequence[float]):
    """Train a trainable scorer; fixed scorers are returned as-is."""
    records = [(a.features, float(y)) for a, y in zip(analyses, mos)]
    if name == "composite":
        return train_linear_scorer(records)
    if name == "composite-integrated":
        return train_integrated_scorer(records)
    fixed = fixed_scorers()
    if name in fixed:
        return fixed[name]
    raise ConfigurationError(f"unknown scorer {name!r}")


def apply_scorer(scorer, a: ImageAnalysis) -> float:
    if hasattr(scorer, "score_image"):
        return float(scorer.score_image(a.features))
    return float(scorer.score(a))


def _load_database(path: str) -> DatasetManifest:
    m = load_manifest(path).merged()
    if len(m) == 0:
        raise DataError(f"manifest {path} has no rows")
    return m


def _split(m: DatasetManifest, cfg: ExperimentConfig) -> tuple[list[int], list[int]]:
    given = [r.split for r in m.rows]
    if all(s is not None for s in given):
        train = [i for i, s in enumerate(given) if s is Split.TRAIN]
        test = [i for i, s in enumerate(given) if s is Split.TEST]
    elif any(s is not None for s in given):
        raise DataError(f"{m.name}: split column must be filled for every row or for none")
    else:
        group = None
        if cfg.group_split:
            def group(r):
                return (r.reference_path or r.id)
        rows = split_dataset(m.rows, cfg.split_ratio, cfg.seed, group_by=group)
        train = [i for i, r in enumerate(rows) if r.split is Split.TRAIN]
        test = [i for i, r in enumerate(rows) if r.split is Split.TEST]
    if len(test) < 3:
        raise DataError(f"{m.name}: test split has {len(test)} images; need at least 3")
    return train, test


def _scorer_doc(scorer) -> dict | None:
    return scorer.to_dict() if hasattr(scorer, "to_dict") else None


def _stamp(cfg: ExperimentConfig) -> dict:
    from . import __version__

    return {"config": cfg.hashed_fields(), "config_hash": cfg.config_hash, "seed": int(cfg.seed),
            "panobench_version": __version__}


def _eval_with_status(rep: EvalReport) -> dict:
    d = rep.to_dict()
    try:
        d["saturation"] = classify_saturation(rep).value
    except PanobenchError:
        d["saturation"] = None
    return d


@dataclass
class DatabaseRun:
    """In-memory result of the in-domain protocol on one database."""

    manifest: DatasetManifest
    analyses: list[ImageAnalysis]
    train_idx: list[int]
    test_idx: list[int]
    models: dict = field(default_factory=dict)       # scorer name -> trained object
    reports: dict = field(default_factory=dict)      # scorer name -> EvalReport (test split)
    predictions: dict = field(default_factory=dict)  # scorer name -> test predictions


def run_database(cfg: ExperimentConfig, manifest_path: str) -> DatabaseRun:
    with stage("load"):
        m = _load_database(manifest_path)
        _check_references(m, cfg.scorers)
    with stage("split"):
        train, test = _split(m, cfg)
    with stage("features"):
        analyses = analyze_manifest(m, cfg.trajectory, _needs_reference(cfg.scorers), cfg.threads)
    mos = np.array([r.mos for r in m.rows])
    run = DatabaseRun(m, analyses, train, test)
    for name in cfg.scorers:
        with stage(f"train:{name}"):
            model = train_scorer(name, [analyses[i] for i in train], mos[train])
        with stage(f"evaluate:{name}"):
            pred = [apply_scorer(model, analyses[i]) for i in test]
            run.models[name] = model
            run.predictions[name] = pred
            run.reports[name] = evaluate(pred, mos[test], prefit=cfg.prefit)
    return run


def run_experiment(cfg: ExperimentConfig) -> dict:
    """In-domain protocol on ``cfg.manifest``; writes the report bundle.

    Files in ``cfg.out_dir``: ``report.json``, ``report.md``,
    ``predictions.csv``, ``scorers/<name>.json`` for trained heads and
    ``figures/scatter_<name>.png``.
    """
    cfg.validate()
    run = run_database(cfg, cfg.manifest)
    m = run.manifest
    doc = {
        **_stamp(cfg),
        "database": m.name,
        "n_images": len(m),
        "n_train": len(run.train_idx),
        "n_test": len(run.test_idx),
        "results": {name: _eval_with_status(rep) for name, rep in run.reports.items()},
    }
    with stage("write"), staged_output(cfg.out_dir) as out:
        report.write_text(out / "report.json", report.dumps(doc))
        md = [f"# Evaluation on {m.name}\n",
              f"config hash `{cfg.config_hash}`, seed {cfg.seed}, "
              f"{len(run.train_idx)} train / {len(run.test_idx)} test images, "
              f"trajectory {cfg.trajectory}, logistic prefit {'on' if cfg.prefit else 'off'}\n",
              report.eval_table(run.reports)]
        report.write_text(out / "report.md", "\n".join(md))
        rows = []
        for k, i in enumerate(run.test_idx):
            r = m.rows[i]
            rows.append([r.id, r.mos, r.distortion] + [run.predictions[s][k] for s in cfg.scorers])
        report.write_text(out / "predictions.csv",
                          report.csv_text(["id", "mos", "distortion"] + list(cfg.scorers), rows))
        for name, model in run.models.items():
            sd = _scorer_doc(model)
            if sd is not None:
                report.write_text(out / "scorers" / f"{name}.json",
                                  report.dumps({**sd, "config_hash": cfg.config_hash, "seed": int(cfg.seed)}))
        if cfg.figures:
            mos = [m.rows[i].mos for i in run.test_idx]
            for name, rep in run.reports.items():
                plotting.scatter_with_fit(run.predictions[name], mos, rep,
                                          out / "figures" / f"scatter_{name}.png", f"{m.name} / {name}")
    return doc


def evaluate_model(cfg: ExperimentConfig, model_path: str, name: str = "model") -> dict:
    """Score every image of ``cfg.manifest`` with a saved scorer (no training)."""
    cfg.validate()
    with stage("load"):
        try:
            model = load_scorer(Path(model_path).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read scorer {model_path}: {exc}") from exc
        m = _load_database(cfg.manifest)
    with stage("features"):
        analyses = analyze_manifest(m, cfg.trajectory, False, cfg.threads)
    with stage("evaluate"):
        pred = [apply_scorer(model, a) for a in analyses]
        rep = evaluate(pred, [r.mos for r in m.rows], prefit=cfg.prefit)
    doc = {**_stamp(cfg), "database": m.name, "model": Path(model_path).name,
           "n_images": len(m), "results": {name: _eval_with_status(rep)}}
    with stage("write"), staged_output(cfg.out_dir) as out:
        report.write_text(out / "report.json", report.dumps(doc))
        report.write_text(out / "report.md", f"# {name} on {m.name} (all images)\n\n" + report.eval_table({name: rep}))
        report.write_text(out / "predictions.csv", report.csv_text(
            ["id", "mos", "distortion", name], [[r.id, r.mos, r.distortion, p] for r, p in zip(m.rows, pred)]))
        if cfg.figures:
            plotting.scatter_with_fit(pred, [r.mos for r in m.rows], rep,
                                      out / "figures" / f"scatter_{name}.png", f"{m.name} / {name}")
    return doc


def run_cross(cfg: ExperimentConfig) -> CrossMatrix:
    """Train on ``cfg.source`` (its own split), test on all images of each target.

    ``p_ori`` for every gain is the scorer's held-out test performance on the
    source database.
    """
    cfg.validate(cross=True)
    src = run_database(cfg, cfg.source)
    source_name = src.manifest.name
    targets = {}
    for path in cfg.targets:
        with stage("load"):
            tm = _load_database(path)
            _check_references(tm, cfg.scorers)
        if tm.name in targets or (tm.name == source_name and Path(path).resolve() != Path(cfg.source).resolve()):
            raise ConfigurationError(f"duplicate target database name {tm.name!r}")
        targets[tm.name] = tm

    def protocol(model, tm: DatasetManifest) -> EvalReport:
        with stage(f"features:{tm.name}"):
            analyses = analyze_manifest(tm, cfg.trajectory, _needs_reference(cfg.scorers), cfg.threads)
        with stage(f"evaluate:{tm.name}"):
            pred = [apply_scorer(model, a) for a in analyses]
            return evaluate(pred, [r.mos for r in tm.rows], prefit=cfg.prefit)

    with stage("cross"):
        cm = cross_validate(src.models, source_name, targets, protocol, src.reports)

    doc = {**_stamp(cfg), "source_database": source_name, "targets": list(targets),
           "in_domain": {n: _eval_with_status(r) for n, r in src.reports.items()},
           "matrix": cm.to_dict(),
           "overall_mean_gain": {m.value: cm.overall_mean_gain(m) for m in Metric}}
    with stage("write"), staged_output(cfg.out_dir) as out:
        report.write_text(out / "cross.json", report.dumps(doc))
        md = [f"# Cross-database evaluation, trained on {source_name}\n",
              f"config hash `{cfg.config_hash}`, seed {cfg.seed}; gains relative to the in-domain test split\n",
              "## In-domain (source test split)\n", report.eval_table(src.reports),
              "## Transfer\n", report.cross_table(cm)]
        report.write_text(out / "cross.md", "\n".join(md))
        report.write_text(out / "cross.csv", report.cross_csv(cm))
        for name, model in src.models.items():
            sd = _scorer_doc(model)
            if sd is not None:
                report.write_text(out / "scorers" / f"{name}.json",
                                  report.dumps({**sd, "config_hash": cfg.config_hash, "seed": int(cfg.seed)}))
        if cfg.figures:
            models = cm.models
            tnames = cm.targets
            grid = [[cm.gain(mo, t, Metric.PLCC) for t in tnames] for mo in models]
            plotting.gain_heatmap(grid, models, tnames, out / "figures" / "gain_heatmap.png",
                                  f"PLCC gain (%), trained on {source_name}")
    return cm
