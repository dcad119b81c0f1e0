"""Synthetic distortions on ERP panoramas and self-contained benchmark databases.

Four distortion kinds are supported: Gaussian blur (GB), Gaussian noise (GN),
brightness shift (BD) and stitching seam (ST). Each can be applied
homogeneously or confined to a spherical cap around one of six axis-aligned
"lens" directions (heterogeneous scope).

The level ladders and the synthetic MOS formula are surrogates chosen for
testability. They do not model any human study.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .geometry import ErpImage, angular_distance, pixel_grid_lonlat, save_png

KINDS = ("GB", "GN", "BD", "ST")
KIND_NAMES = {"GB": "gaussian_blur", "GN": "gaussian_noise", "BD": "brightness_shift", "ST": "stitch_seam"}
LEVEL_LADDERS = {
    "GB": (1.0, 2.0, 4.0, 8.0, 16.0),      # sigma, pixels
    "GN": (5.0, 10.0, 20.0, 35.0, 50.0),   # sigma, intensity units
    "BD": (10.0, 20.0, 40.0, 60.0, 80.0),  # delta, intensity units
    "ST": (2.0, 4.0, 8.0, 16.0, 32.0),     # shear, pixels
}
HOMOGENEOUS = "homogeneous"
HETEROGENEOUS = "heterogeneous"
SCOPES = (HOMOGENEOUS, HETEROGENEOUS)
DEFAULT_CAP_RADIUS = math.radians(50.0)
CAP_RAMP = math.radians(5.0)
HETERO_MOS_FACTOR = 0.6

# +x, -x, +y, -y, +z, -z as (lon, lat); +y is the north pole, +z is lon 0
LENS_DIRECTIONS = (
    (math.pi / 2, 0.0),
    (-math.pi / 2, 0.0),
    (0.0, math.pi / 2),
    (0.0, -math.pi / 2),
    (0.0, 0.0),
    (-math.pi, 0.0),
)
LENS_LABELS = ("+x", "-x", "+y", "-y", "+z", "-z")


@dataclass(frozen=True)
class DistortionSpec:
    kind: str
    param: float
    level: int = 1
    scope: str = HOMOGENEOUS
    lens_index: int | None = None
    cap_radius: float = DEFAULT_CAP_RADIUS
    seam_lon: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown distortion kind {self.kind!r}; expected one of {KINDS}")
        if self.scope not in SCOPES:
            raise ConfigurationError(f"unknown scope {self.scope!r}")
        if not 1 <= self.level <= 5:
            raise ConfigurationError(f"level {self.level} outside 1..5")
        if self.kind in ("GB", "GN") and self.param < 0:
            raise ConfigurationError(f"{self.kind} sigma must be >= 0")
        if self.kind == "BD" and abs(self.param) > 128:
            raise ConfigurationError("brightness delta must satisfy |delta| <= 128")
        if self.scope == HETEROGENEOUS:
            if self.lens_index is None or not 0 <= self.lens_index < 6:
                raise ConfigurationError("heterogeneous scope needs lens_index in 0..5")
            if not 0 < self.cap_radius < math.pi:
                raise ConfigurationError("cap radius must lie in (0, pi)")

    @classmethod
    def at_level(cls, kind: str, level: int, scope: str = HOMOGENEOUS, lens_index: int | None = None,
                 **kw) -> "DistortionSpec":
        if kind not in LEVEL_LADDERS:
            raise ConfigurationError(f"unknown distortion kind {kind!r}")
        if not 1 <= level <= len(LEVEL_LADDERS[kind]):
            raise ConfigurationError(f"level {level} outside 1..{len(LEVEL_LADDERS[kind])}")
        return cls(kind, LEVEL_LADDERS[kind][level - 1], level, scope, lens_index, **kw)

    @property
    def tag(self) -> str:
        tag = f"{self.kind}:{self.scope}:L{self.level}"
        if self.scope == HETEROGENEOUS:
            tag += f":{LENS_LABELS[self.lens_index]}"
        return tag


# -- primitive effects (float HxWx3 in, float out) ----------------------------

def gaussian_blur(x: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return x.copy()
    # rows reflect at the poles, columns wrap around the seam
    out = ndimage.gaussian_filter1d(x, sigma, axis=0, mode="reflect", truncate=3.0)
    return ndimage.gaussian_filter1d(out, sigma, axis=1, mode="wrap", truncate=3.0)


def stitch_shear(x: np.ndarray, shift: float, seam_lon: float) -> np.ndarray:
    """Shear the hemisphere east of ``seam_lon`` horizontally by up to +/-shift pixels.

    Rows are displaced by ``shift * (1 - 2 (v + 0.5) / H)`` (top +shift,
    bottom -shift); the sheared and untouched sides meet through a 2-pixel
    linear blend at both boundaries.
    """
    h, w = x.shape[:2]
    rows = np.arange(h)
    disp = shift * (1.0 - 2.0 * (rows + 0.5) / h)
    cols = np.arange(w)
    src_u = cols[None, :] - disp[:, None]
    x0 = np.floor(src_u).astype(np.int64)
    f = (src_u - x0)[..., None]
    sheared = x[rows[:, None], np.mod(x0, w)] * (1 - f) + x[rows[:, None], np.mod(x0 + 1, w)] * f

    seam_u = (seam_lon / (2 * math.pi) + 0.5) * w
    rel = np.mod(cols + 0.5 - seam_u, w)  # distance east of the seam, in pixels
    half = w / 2.0
    weight = np.clip(np.minimum(rel, half - rel) / 2.0, 0.0, 1.0)
    weight = np.where(rel < half, weight, 0.0)[None, :, None]
    return x + weight * (sheared - x)


def cap_mask(w: int, h: int, lens_index: int, cap_radius: float = DEFAULT_CAP_RADIUS) -> np.ndarray:
    """Per-pixel weight in [0, 1]: 1 inside the cap, smooth 5-degree ramp, 0 outside."""
    lon, lat = pixel_grid_lonlat(w, h)
    clon, clat = LENS_DIRECTIONS[lens_index]
    d = angular_distance(lon, lat, clon, clat)
    t = np.clip((cap_radius + CAP_RAMP - d) / CAP_RAMP, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def record_rng(seed: int, key: str) -> np.random.Generator:
    """Independent generator per (seed, key), stable across runs and processes."""
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), int.from_bytes(digest[:8], "little")]))


def apply_distortion(img: ErpImage, spec: DistortionSpec, seed: int = 0, id: str | None = None) -> ErpImage:
    src = img.data
    x = src.astype(np.float64)
    if spec.kind == "GB":
        out = gaussian_blur(x, spec.param)
    elif spec.kind == "GN":
        rng = record_rng(seed, f"noise:{img.id}:{spec.tag}")
        out = x + rng.normal(0.0, spec.param, size=x.shape) if spec.param > 0 else x
    elif spec.kind == "BD":
        out = x + spec.param
    else:
        out = stitch_shear(x, spec.param, spec.seam_lon)

    if spec.scope == HETEROGENEOUS:
        mask = cap_mask(img.width, img.height, spec.lens_index, spec.cap_radius)[..., None]
        out = x + mask * (out - x)
        result = np.clip(np.rint(out), 0, 255).astype(np.uint8)
        result = np.where(mask > 0, result, src)
    else:
        result = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return img.with_data(result, id=id or f"{img.id}_{spec.kind}_L{spec.level}")


# -- procedural sources ------------------------------------------------------

def procedural_panorama(seed: int, width: int = 1024, id: str | None = None) -> ErpImage:
    """A textured, seam-periodic 2:1 test panorama.

    Content is 1/f coloured noise plus hard-edged discs and boxes, so both
    blur and noise have visible effects. Spectrum, contrast and edge
    strength are fixed; seeds vary phases, hue and shape placement only,
    which keeps image statistics comparable across sources.
    """
    h, w = width // 2, width
    rng = record_rng(seed, f"source:{width}")
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    radius = np.hypot(fx, fy * 2.0)
    # flat below ~1/48 cycles/px so local contrast is stable at viewport scale
    amp = 1.0 / np.maximum(radius, 1.0 / 48)
    amp[0, 0] = 0.0
    shape = (h, w // 2 + 1)
    # fixed magnitudes, random phases: every source has the same power spectrum
    phase = rng.uniform(0, 2 * np.pi, size=shape)
    channels = []
    for _ in range(3):
        jitter = rng.normal(0.0, 0.6, size=shape)
        layer = np.fft.irfft2(amp * np.exp(1j * (phase + jitter)), s=(h, w))
        channels.append((layer - layer.mean()) / (layer.std() + 1e-12))
    # tint in the plane of zero luminance change so mean luma stays at 128
    luma = np.array([0.299, 0.587, 0.114])
    tint = rng.uniform(-10, 10, size=3)
    mean_rgb = 128.0 + tint - luma * (tint @ luma) / (luma @ luma)
    img = np.stack(channels, axis=-1) * 32.0 + mean_rgb

    yy, xx = np.mgrid[0:h, 0:w]
    n_shapes = 16
    offset = rng.uniform(0, w / n_shapes)
    for k in range(n_shapes):
        # one shape per 22.5 degrees of longitude, near the equator
        cx = offset + k * w / n_shapes + rng.uniform(-0.2, 0.2) * w / n_shapes
        cy = h / 2 + rng.uniform(-0.12, 0.12) * h
        r = rng.uniform(0.025, 0.04) * w
        # fixed edge contrast, alternating sign, jittered hue
        color = mean_rgb + (1 if k % 4 < 2 else -1) * 80.0 + rng.uniform(-15, 15, size=3)
        dx = np.mod(xx - cx + w / 2, w) - w / 2
        if k % 2 == 0:
            inside = dx * dx + (yy - cy) ** 2 < r * r
        else:
            inside = (np.abs(dx) < r) & (np.abs(yy - cy) < 0.6 * r)
        img[inside] = 0.55 * img[inside] + 0.45 * color
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return ErpImage(data, id=id or f"src{seed:03d}")


# -- databases ---------------------------------------------------------------

def synthetic_mos(level: int, levels_max: int, scope: str) -> float:
    r = level / levels_max
    q = r if scope == HOMOGENEOUS else HETERO_MOS_FACTOR * r
    return float(min(max(5.0 - 4.0 * q, 1.0), 5.0))


@dataclass(frozen=True)
class SyntheticRecord:
    id: str
    source_id: str
    spec: DistortionSpec | None  # None for the pristine original
    mos: float
    path: str  # relative to the database root

    @property
    def distortion_tag(self) -> str:
        return "pristine" if self.spec is None else self.spec.tag


@dataclass
class SyntheticDatabase:
    name: str
    records: list[SyntheticRecord]
    seed: int
    sources: dict[str, ErpImage] = field(repr=False, default_factory=dict)

    def render(self, rec: SyntheticRecord) -> ErpImage:
        src = self.sources[rec.source_id]
        if rec.spec is None:
            return src
        return apply_distortion(src, rec.spec, self.seed, id=rec.id)

    def pristine_path(self, source_id: str) -> str:
        return f"pristine/{source_id}.png"


@dataclass(frozen=True)
class SynthesisPlan:
    types: Sequence[str] = ("GB", "GN")
    levels: int = 5
    scopes: Sequence[str] = (HOMOGENEOUS,)
    cap_radius: float = DEFAULT_CAP_RADIUS

    def __post_init__(self):
        for t in self.types:
            if t not in KINDS:
                raise ConfigurationError(f"unknown distortion type {t!r}")
        for s in self.scopes:
            if s not in SCOPES:
                raise ConfigurationError(f"unknown scope {s!r}")
        if not 1 <= self.levels <= 5:
            raise ConfigurationError("levels must be in 1..5")


def build_database(sources: Sequence[ErpImage], plan: SynthesisPlan, seed: int, name: str = "synthetic") -> SyntheticDatabase:
    """Enumerate sources x types x levels x scopes (plus one pristine record per source)."""
    if len(sources) < 3:
        raise ConfigurationError(f"need at least 3 source images, got {len(sources)}")
    ids = [s.id for s in sources]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("source image ids must be unique")
    records = []
    for src in sources:
        records.append(SyntheticRecord(src.id, src.id, None, 5.0, f"pristine/{src.id}.png"))
        for kind in plan.types:
            for scope in plan.scopes:
                for level in range(1, plan.levels + 1):
                    rid = f"{src.id}_{kind}_{scope[:3]}_L{level}"
                    lens = None
                    if scope == HETEROGENEOUS:
                        lens = int(record_rng(seed, f"lens:{rid}").integers(0, 6))
                    spec = DistortionSpec.at_level(kind, level, scope, lens, cap_radius=plan.cap_radius)
                    if kind == "ST":
                        seam = float(record_rng(seed, f"seam:{rid}").uniform(-math.pi, math.pi))
                        spec = replace(spec, seam_lon=seam)
                    records.append(SyntheticRecord(
                        rid, src.id, spec, synthetic_mos(level, plan.levels, scope),
                        f"{kind}/{scope}/{src.id}_L{level}.png",
                    ))
    return SyntheticDatabase(name, records, seed, {s.id: s for s in sources})


def write_database(db: SyntheticDatabase, root, threads: int = 1) -> Path:
    """Render every record to PNG under ``root`` and write ``manifest.csv``."""
    from .manifest import ManifestRow, DatasetManifest, write_manifest

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)

    def render_one(rec: SyntheticRecord):
        save_png(db.render(rec).data, root / rec.path)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(render_one, db.records))
    else:
        for rec in db.records:
            render_one(rec)

    rows = [
        ManifestRow(id=r.id, path=r.path, mos=r.mos, reference_path=db.pristine_path(r.source_id),
                    distortion=r.distortion_tag)
        for r in db.records
    ]
    path = root / "manifest.csv"
    write_manifest(DatasetManifest(db.name, root, rows), path, extra={"seed": db.seed})
    return path
