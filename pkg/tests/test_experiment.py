import json

import pytest

from panobench.analysis import Metric
from panobench.errors import ConfigurationError, DataError
from panobench.experiment import ExperimentConfig, clear_cache, evaluate_model, run_cross, run_experiment
from panobench.manifest import load_manifest, write_manifest


def _cfg(manifest, out, **kw):
    return ExperimentConfig(manifest=str(manifest), out_dir=str(out), **kw)


def _read_tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_run_is_identical_across_thread_counts(small_db, tmp_path):
    clear_cache()
    run_experiment(_cfg(small_db, tmp_path / "a", scorers=("composite", "sharpness"), threads=1))
    clear_cache()
    run_experiment(_cfg(small_db, tmp_path / "b", scorers=("composite", "sharpness"), threads=2))
    a, b = _read_tree(tmp_path / "a"), _read_tree(tmp_path / "b")
    assert a == b
    assert {"report.json", "report.md", "predictions.csv", "scorers/composite.json",
            "figures/scatter_composite.png"} <= set(a)


def test_report_contents(small_db, tmp_path):
    doc = run_experiment(_cfg(small_db, tmp_path / "r", scorers=("composite", "composite-integrated"), figures=False))
    assert doc["n_images"] == 66 and (doc["n_train"], doc["n_test"]) == (53, 13)
    for name in ("composite", "composite-integrated"):
        r = doc["results"][name]
        assert r["n"] == 13 and -1 <= r["srcc"] <= 1
    # homogeneous blur and noise on the composite head is an easy in-domain task
    assert doc["results"]["composite"]["srcc"] > 0.8
    on_disk = json.loads((tmp_path / "r" / "report.json").read_text())
    assert on_disk["config_hash"] == _cfg(small_db, "elsewhere", scorers=("composite", "composite-integrated")).config_hash
    assert not (tmp_path / "r" / "figures").exists()


def test_seed_changes_split(small_db, tmp_path):
    a = run_experiment(_cfg(small_db, tmp_path / "a", figures=False, seed=0))
    b = run_experiment(_cfg(small_db, tmp_path / "b", figures=False, seed=1))
    assert a["config_hash"] != b["config_hash"]
    assert (tmp_path / "a" / "predictions.csv").read_text() != (tmp_path / "b" / "predictions.csv").read_text()


def test_config_hash_ignores_threads_and_output():
    a = ExperimentConfig(manifest="m.csv", threads=1, out_dir="x")
    assert a.config_hash == ExperimentConfig(manifest="m.csv", threads=4, out_dir="y", figures=False).config_hash
    assert a.config_hash != ExperimentConfig(manifest="m.csv", prefit=False).config_hash


@pytest.mark.parametrize("kw,needle", [
    ({"scorers": ("nope",)}, "unknown scorer"),
    ({"scorers": ()}, "no scorers"),
    ({"scorers": ("composite", "composite")}, "duplicates"),
    ({"split_ratio": 1.0}, "split ratio"),
    ({"threads": 0}, "threads"),
    ({"trajectory": "image9"}, "trajectory"),
])
def test_config_validated_before_compute(small_db, tmp_path, kw, needle):
    with pytest.raises(ConfigurationError, match=needle):
        run_experiment(_cfg(small_db, tmp_path / "o", **kw))
    assert not (tmp_path / "o").exists()


def test_missing_manifest(tmp_path):
    with pytest.raises(ConfigurationError, match="does not exist"):
        run_experiment(_cfg(tmp_path / "none.csv", tmp_path / "o"))


def test_failed_run_leaves_no_output(small_db, tmp_path):
    m = load_manifest(small_db)
    bad = tmp_path / "db" / "manifest.csv"
    write_manifest(m.__class__(m.name, m.root, m.rows[:20] + [m.rows[20].__class__("bad", "missing.png", 3.0)],
                               meta=m.meta), bad)
    with pytest.raises(DataError, match=r"\[load\]"):
        run_experiment(_cfg(bad, tmp_path / "o"))
    assert not (tmp_path / "o").exists()
    assert not list(tmp_path.glob(".o.partial-*"))


def test_reference_scorer_needs_references(small_db, tmp_path):
    m = load_manifest(small_db)
    rows = [r.__class__(r.id, r.path, r.mos) for r in m.rows]  # strip reference paths
    # written next to the original so relative image paths still resolve
    p = write_manifest(m.__class__(m.name, m.root, rows, meta=m.meta), m.root / "noref.csv")
    try:
        with pytest.raises(ConfigurationError, match="reference"):
            run_experiment(_cfg(p, tmp_path / "o", scorers=("ws-psnr",)))
    finally:
        p.unlink()
    assert not (tmp_path / "o").exists()


def test_evaluate_saved_model(small_db, tmp_path):
    run_experiment(_cfg(small_db, tmp_path / "train", figures=False))
    doc = evaluate_model(_cfg(small_db, tmp_path / "eval", figures=False),
                         str(tmp_path / "train" / "scorers" / "composite.json"), name="composite")
    assert doc["n_images"] == 66 and doc["results"]["composite"]["n"] == 66
    with pytest.raises(ConfigurationError):
        evaluate_model(_cfg(small_db, tmp_path / "e2"), str(tmp_path / "nope.json"))


def test_cross_source_equals_target_and_transfer(small_db, small_hetero_db, tmp_path):
    cfg = ExperimentConfig(source=str(small_db), targets=(str(small_db), str(small_hetero_db)),
                           scorers=("composite",), out_dir=str(tmp_path / "x"), figures=False)
    cm = run_cross(cfg)
    assert cm.gain("composite", "small", Metric.PLCC) == 0.0
    assert cm.gain("composite", "small", Metric.SRCC) == 0.0
    # local damage is partly invisible to a head trained on global damage
    assert cm.gain("composite", "small-het", Metric.SRCC) < 0
    assert {"cross.json", "cross.md", "cross.csv"} <= set(_read_tree(tmp_path / "x"))


def test_cross_needs_targets(small_db, tmp_path):
    with pytest.raises(ConfigurationError, match="target"):
        run_cross(ExperimentConfig(source=str(small_db), out_dir=str(tmp_path / "x")))
