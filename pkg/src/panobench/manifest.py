"""Dataset manifests: a CSV index of images, scores and references.

Format (UTF-8, LF line endings)::

    # schema_version=1
    # name=my-db
    id,path,mos,mos2,reference_path,distortion,split
    img001,images/img001.png,3.42,,refs/src01.png,GB:homogeneous:L2,

Leading ``# key=value`` lines are optional metadata; a missing
``schema_version`` means 1. Paths are relative to the manifest's directory.
Empty fields mean "absent" for the optional columns.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path, PurePosixPath

from .errors import DataError
from .metrics import Split, merge_dual_mos

SCHEMA_VERSION = 1
HEADER = ("id", "path", "mos", "mos2", "reference_path", "distortion", "split")


@dataclass(frozen=True)
class ManifestRow:
    id: str
    path: str
    mos: float
    mos2: float | None = None
    reference_path: str | None = None
    distortion: str | None = None
    split: Split | None = None
    notes: tuple[str, ...] = ()

    @property
    def dual(self) -> bool:
        return self.mos2 is not None


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    root: Path
    rows: list[ManifestRow]
    schema_version: int = SCHEMA_VERSION
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.rows]

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def merged(self) -> "DatasetManifest":
        """Copy with every dual-MOS row averaged into a single score."""
        rows = [merge_dual_mos(r) if r.dual else r for r in self.rows]
        return replace(self, rows=rows)

    def row(self, image_id: str) -> ManifestRow:
        for r in self.rows:
            if r.id == image_id:
                return r
        raise KeyError(image_id)


def _err(path, line: int, msg: str) -> DataError:
    return DataError(f"{path}:{line}: {msg}")


def _float(text: str, what: str, path, line: int, optional: bool = False):
    text = text.strip()
    if text == "":
        if optional:
            return None
        raise _err(path, line, f"missing {what}")
    try:
        v = float(text)
    except ValueError:
        raise _err(path, line, f"{what} {text!r} is not a number") from None
    if not math.isfinite(v):
        raise _err(path, line, f"{what} must be finite, got {text!r}")
    return v


def _rel_path(text: str, what: str, path, line: int, optional: bool = False):
    text = text.strip()
    if text == "":
        if optional:
            return None
        raise _err(path, line, f"missing {what}")
    p = PurePosixPath(text)
    if p.is_absolute() or ".." in p.parts:
        raise _err(path, line, f"{what} {text!r} must be relative and stay under the manifest root")
    return text


def parse_manifest(text: str, root, source="<manifest>", check_files: bool = True) -> DatasetManifest:
    """Parse manifest text; every failure names the offending line."""
    root = Path(root)
    meta: dict[str, str] = {}
    header_seen = False
    rows: list[ManifestRow] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not header_seen:
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if not sep:
                    raise _err(source, lineno, f"metadata line must be '# key=value', got {line!r}")
                meta[key.strip()] = value.strip()
                continue
            if line.strip() == "":
                continue
            cells = next(csv.reader([line]))
            if tuple(c.strip() for c in cells) != HEADER:
                raise _err(source, lineno, f"expected header {','.join(HEADER)}, got {line!r}")
            header_seen = True
            continue
        if line.strip() == "":
            continue
        try:
            cells = next(csv.reader([line], strict=True))
        except csv.Error as exc:
            raise _err(source, lineno, f"malformed CSV: {exc}") from None
        if len(cells) != len(HEADER):
            raise _err(source, lineno, f"expected {len(HEADER)} fields, got {len(cells)}")
        rid = cells[0].strip()
        if not rid:
            raise _err(source, lineno, "empty id")
        if rid in seen:
            raise _err(source, lineno, f"duplicate id {rid!r} (first defined on line {seen[rid]})")
        seen[rid] = lineno
        split_text = cells[6].strip().lower()
        if split_text and split_text not in (s.value for s in Split):
            raise _err(source, lineno, f"split must be 'train', 'test' or empty, got {cells[6]!r}")
        row = ManifestRow(
            id=rid,
            path=_rel_path(cells[1], "path", source, lineno),
            mos=_float(cells[2], "mos", source, lineno),
            mos2=_float(cells[3], "mos2", source, lineno, optional=True),
            reference_path=_rel_path(cells[4], "reference_path", source, lineno, optional=True),
            distortion=cells[5].strip() or None,
            split=Split(split_text) if split_text else None,
        )
        if check_files:
            for what, rel in (("image", row.path), ("reference", row.reference_path)):
                if rel is not None and not (root / rel).is_file():
                    raise _err(source, lineno, f"{what} file {rel!r} not found under {root}")
        rows.append(row)
    if not header_seen:
        raise DataError(f"{source}: no header line found")
    try:
        version = int(meta.get("schema_version", SCHEMA_VERSION))
    except ValueError:
        raise DataError(f"{source}: schema_version {meta['schema_version']!r} is not an integer") from None
    if version != SCHEMA_VERSION:
        raise DataError(f"{source}: unsupported schema_version {version} (expected {SCHEMA_VERSION})")
    name = meta.get("name") or root.name or "dataset"
    extra = {k: v for k, v in meta.items() if k not in ("schema_version", "name")}
    return DatasetManifest(name, root, rows, version, extra)


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"manifest {path} not found") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    return parse_manifest(text, path.parent, source=str(path), check_files=check_files)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(getattr(v, "value", v))


def format_manifest(m: DatasetManifest, extra: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version={m.schema_version}\n")
    buf.write(f"# name={m.name}\n")
    for k, v in sorted({**m.meta, **(extra or {})}.items()):
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in m.rows:
        w.writerow([r.id, r.path, _fmt(float(r.mos)), _fmt(None if r.mos2 is None else float(r.mos2)),
                    _fmt(r.reference_path), _fmt(r.distortion), _fmt(r.split)])
    return buf.getvalue()


def write_manifest(m: DatasetManifest, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_manifest(m, extra))
    return path
