"""Command-line interface (``panobench``).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__, report
from .errors import ConfigurationError, ContractError, DataError, DomainError, PanobenchError

log = logging.getLogger("panobench")


def _common(p: argparse.ArgumentParser, top: bool = False) -> None:
    # subcommand copies default to SUPPRESS so a flag given before the
    # subcommand is not reset by the subparser
    d = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=d(0), help="64-bit seed for every random choice (default 0)")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads for per-image work (default 1)")
    p.add_argument("--no-prefit", action="store_true", default=d(False),
                   help="report raw Pearson instead of logistic-prefitted PLCC")
    p.add_argument("--out", default=d("out"), help="output directory (default ./out)")


def _seed(v: int) -> int:
    if not 0 <= v < 2**64:
        raise ConfigurationError(f"seed {v} is not a 64-bit unsigned integer")
    return v


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


# -- subcommands -------------------------------------------------------------------

def cmd_extract_viewports(a) -> int:
    from .geometry import load_erp
    from .viewports import make_trajectory, write_viewports

    kw = {"start_lon": math.radians(a.start_lon)}
    traj = make_trajectory(a.mode, **kw)
    for path in a.images:
        img = load_erp(path)
        side = write_viewports(img, traj, Path(a.out), threads=a.threads)
        print(f"{path}: {len(side['viewports'])} viewports -> {a.out}")
    return 0


def cmd_synth(a) -> int:
    from .distortion import SynthesisPlan, build_database, procedural_panorama, write_database
    from .geometry import load_erp

    if a.sources:
        src_dir = Path(a.sources)
        files = sorted(p for p in src_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        if not files:
            raise DataError(f"no PNG/JPEG sources in {src_dir}")
        sources = [load_erp(p) for p in files]
    else:
        sources = [procedural_panorama(i, width=a.width, id=f"src{i:03d}")
                   for i in range(a.procedural)]
    plan = SynthesisPlan(types=tuple(_csv_list(a.types)), levels=a.levels, scopes=tuple(_csv_list(a.scopes)))
    db = build_database(sources, plan, seed=_seed(a.seed), name=a.name)
    path = write_database(db, Path(a.out) / a.name, threads=a.threads)
    print(f"{len(db.records)} records -> {path}")
    return 0


def _config(a, **kw):
    from .experiment import ExperimentConfig

    return ExperimentConfig(
        scorers=tuple(_csv_list(a.scorers)) if getattr(a, "scorers", None) else ("composite",),
        trajectory=getattr(a, "trajectory", "image8"),
        split_ratio=getattr(a, "split_ratio", 0.8),
        seed=_seed(a.seed),
        prefit=not a.no_prefit,
        group_split=getattr(a, "group_split", False),
        out_dir=a.out,
        threads=a.threads,
        figures=not getattr(a, "no_figures", False),
        **kw,
    )


def cmd_train(a) -> int:
    from .experiment import run_experiment

    doc = run_experiment(_config(a, manifest=a.manifest))
    _print_results(doc)
    print(f"trained scorers -> {Path(a.out) / 'scorers'}")
    return 0


def cmd_evaluate(a) -> int:
    from .experiment import evaluate_model, run_experiment

    cfg = _config(a, manifest=a.manifest)
    if a.model:
        doc = evaluate_model(cfg, a.model, name=Path(a.model).stem)
    else:
        doc = run_experiment(cfg)
    _print_results(doc)
    return 0


def _print_results(doc: dict) -> None:
    for name, r in doc["results"].items():
        fmt = report.fmt3
        plcc = math.nan if r["plcc"] is None else r["plcc"]
        srcc = math.nan if r["srcc"] is None else r["srcc"]
        print(f"{doc['database']}  {name:22s} PLCC {fmt(plcc)}  SRCC {fmt(srcc)}  n={r['n']}"
              + ("  [negative slope]" if r.get("negative_slope") else ""))


def cmd_cross(a) -> int:
    from .analysis import Metric
    from .experiment import run_cross

    cm = run_cross(_config(a, source=a.source, targets=tuple(a.target)))
    print(report.cross_table(cm), end="")
    for m in Metric:
        print(f"overall mean {m.value.upper()} gain: {report.fmt_pct(cm.overall_mean_gain(m))}")
    return 0


def cmd_gap(a) -> int:
    from .analysis import gap

    if a.p_ori is not None or a.p_test is not None:
        if a.p_ori is None or a.p_test is None:
            raise ConfigurationError("--p-ori and --p-test go together")
        g = gap(a.p_ori, a.p_test)
        if not math.isfinite(g):
            print("gap undefined (p_ori = 0)")
            return 4
        print(f"{g:.1f}%" if not a.full else repr(g))
        return 0
    from .experiment import staged_output
    from .fixtures import METRICS, published_fixtures
    from .published import biqa_gap_records, mean_gap_rows

    fx = published_fixtures().biqa_transfer
    rec = biqa_gap_records()
    recomputed = {m: {db: {} for db in fx.databases} for m in fx.models_with_gap}
    for r in rec:
        if r.defined:
            recomputed[r.model][r.database][r.metric.value] = r.gap_percent
    means = mean_gap_rows("printed")
    table = report.gap_table(fx.databases, fx.models, fx.p_ori, fx.p_test, recomputed, means)
    print(table, end="")
    with staged_output(a.out) as out:
        report.write_text(out / "gaps.md", table)
        report.write_text(out / "gaps.csv", report.csv_text(
            ["model", "database", "metric", "p_ori", "p_test", "gap_percent", "printed_gap"],
            [[r.model, r.database, r.metric.value, r.p_ori, r.p_test,
              r.gap_percent if r.defined else None, fx.lookup(r.model, r.database, r.metric.value)[2]]
             for r in rec]))
        report.write_text(out / "gaps.json", report.dumps({
            "mean_gap": means, "mean_gap_recomputed": mean_gap_rows("recomputed"),
            "metrics": list(METRICS)}))
    return 0


def cmd_rank(a) -> int:
    from .analysis import aggregate_ranks
    from .experiment import staged_output
    from .plotting import rank_chart
    from .published import metric_driven_ranks, published_rank_table

    if a.ranks:
        try:
            doc = json.loads(Path(a.ranks).read_text())
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read rank file {a.ranks}: {exc}") from exc
        try:
            rt = aggregate_ranks(doc)
        except ContractError as exc:
            raise DataError(str(exc)) from exc
    elif a.metric_driven:
        derived = metric_driven_ranks()
        for p, r in derived.items():
            for t in r.ties:
                print(f"{p}: tie among {', '.join(t)} (broken by secondary key, then name)")
        rt = aggregate_ranks({p: r.ranks for p, r in derived.items()})
    else:
        rt = published_rank_table()
    print(report.rank_table(rt), end="")
    with staged_output(a.out) as out:
        report.write_text(out / "ranks.md", report.rank_table(rt))
        report.write_text(out / "ranks.csv", report.rank_csv(rt))
        report.write_text(out / "ranks.json", report.dumps(rt.to_dict()))
        if not a.no_figures:
            rank_chart(rt.per_perspective, rt.final_rank, out / "figures" / "ranks.png")
    return 0


def cmd_report(a) -> int:
    from .published import write_fixture_report

    write_fixture_report(a.out, figures=not a.no_figures)
    print(f"report -> {Path(a.out) / 'fixtures.md'}")
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="panobench", description="Panoramic image quality benchmarking toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    _common(p, top=True)
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    s = sub.add_parser("extract-viewports", help="cut equator viewports from ERP images")
    _common(s)
    s.add_argument("images", nargs="+")
    s.add_argument("--mode", default="image8", choices=["image8", "video30"])
    s.add_argument("--start-lon", type=float, default=0.0, help="start longitude in degrees")
    s.set_defaults(func=cmd_extract_viewports)

    s = sub.add_parser("synth", help="synthesise a distorted database with a manifest")
    _common(s)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--sources", help="directory of 2:1 ERP source images")
    g.add_argument("--procedural", type=int, default=10, help="number of procedural sources (default 10)")
    s.add_argument("--width", type=int, default=1024, help="procedural source width (default 1024)")
    s.add_argument("--types", default="GB,GN", help="comma list of GB,GN,BD,ST")
    s.add_argument("--levels", type=int, default=5)
    s.add_argument("--scopes", default="homogeneous", help="comma list of homogeneous,heterogeneous")
    s.add_argument("--name", default="synthetic")
    s.set_defaults(func=cmd_synth)

    def run_opts(s):
        s.add_argument("--scorers", default="composite", help="comma list of scorers")
        s.add_argument("--trajectory", default="image8", choices=["image8", "video30"])
        s.add_argument("--split-ratio", type=float, default=0.8)
        s.add_argument("--group-split", action="store_true", help="split by content (reference image)")
        s.add_argument("--no-figures", action="store_true")

    s = sub.add_parser("train", help="train scorers on a manifest's training split")
    _common(s)
    s.add_argument("manifest")
    run_opts(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="in-domain evaluation, or score a saved model on all images")
    _common(s)
    s.add_argument("manifest")
    s.add_argument("--model", help="saved scorer JSON; evaluates it on every image")
    run_opts(s)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("cross", help="train on a source database, test on target databases")
    _common(s)
    s.add_argument("--source", required=True, help="source manifest")
    s.add_argument("--target", action="append", required=True, help="target manifest (repeatable)")
    run_opts(s)
    s.set_defaults(func=cmd_cross)

    s = sub.add_parser("gap", help="gap arithmetic: published-table replay or one ad-hoc pair")
    _common(s)
    s.add_argument("--p-ori", type=float)
    s.add_argument("--p-test", type=float)
    s.add_argument("--full", action="store_true", help="print full precision")
    s.set_defaults(func=cmd_gap)

    s = sub.add_parser("rank", help="aggregate per-perspective database ranks")
    _common(s)
    s.add_argument("--ranks", help="JSON {perspective: {database: rank}}")
    s.add_argument("--metric-driven", action="store_true", help="recompute perspectives from the tables")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("report", help="full analysis bundle of the embedded published tables")
    _common(s)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse usage errors are configuration errors
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        return int(args.func(args) or 0)
    except PanobenchError as exc:
        print(f"panobench: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ContractError, DomainError) as exc:
        print(f"panobench: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
