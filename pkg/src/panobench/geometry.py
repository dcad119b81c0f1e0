"""Spherical geometry and raster primitives for equirectangular panoramas.

Conventions
-----------
* Pixel ``(u, v)`` is (column, row); texel ``i`` covers ``[i, i + 1)`` and its
  centre sits at ``i + 0.5``.
* Longitude grows to the right, latitude grows upwards.
* World frame: ``+y`` up, ``lon = 0`` looks along ``+z`` and ``lon = pi/2``
  looks along ``+x``::

      x = cos(lat) sin(lon),  y = sin(lat),  z = cos(lat) cos(lon)

Scalar functions implement the contracts one point at a time; the ``*_grid``
helpers are the vectorised versions used for whole viewports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError, DataError, DomainError

TWO_PI = 2.0 * math.pi
MIN_WIDTH = 16
MIN_HEIGHT = 8


def wrap_lon(lon):
    """Wrap longitude (scalar or array) into ``[-pi, pi)``."""
    return np.mod(np.asarray(lon, dtype=float) + math.pi, TWO_PI) - math.pi


@dataclass(frozen=True)
class SphericalPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not (-math.pi / 2 - 1e-12 <= self.lat <= math.pi / 2 + 1e-12):
            raise DomainError(f"latitude {self.lat} outside [-pi/2, pi/2]")
        object.__setattr__(self, "lon", float(wrap_lon(self.lon)))
        object.__setattr__(self, "lat", float(min(max(self.lat, -math.pi / 2), math.pi / 2)))

    @classmethod
    def from_degrees(cls, lon_deg: float, lat_deg: float = 0.0) -> "SphericalPoint":
        return cls(math.radians(lon_deg), math.radians(lat_deg))

    def to_unit(self) -> np.ndarray:
        return lonlat_to_unit(self.lon, self.lat)

    @property
    def degrees(self) -> tuple[float, float]:
        return math.degrees(self.lon), math.degrees(self.lat)


@dataclass(frozen=True, eq=False)
class ErpImage:
    """An equirectangular RGB raster, ``data`` has shape ``(H, W, 3)`` uint8."""

    data: np.ndarray
    id: str = "erp"
    allow_any_aspect: bool = field(default=False, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise DataError(f"{self.id}: expected an HxWx3 raster, got shape {data.shape}")
        if data.dtype != np.uint8:
            raise DataError(f"{self.id}: expected 8-bit samples, got {data.dtype}")
        h, w = data.shape[:2]
        if w < MIN_WIDTH or h < MIN_HEIGHT:
            raise DataError(f"{self.id}: {w}x{h} is below the {MIN_WIDTH}x{MIN_HEIGHT} minimum")
        if w != 2 * h and not self.allow_any_aspect:
            raise DataError(f"{self.id}: width {w} != 2 * height {h} (equirectangular 2:1 required)")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def as_float(self) -> np.ndarray:
        return self.data.astype(np.float64)

    def with_data(self, data: np.ndarray, id: str | None = None) -> "ErpImage":
        return ErpImage(data, id=self.id if id is None else id, allow_any_aspect=self.allow_any_aspect)


def load_erp(path, id: str | None = None, allow_any_aspect: bool = False) -> ErpImage:
    """Decode a PNG/JPEG file into an 8-bit RGB ``ErpImage``."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            data = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    return ErpImage(data, id=id or path.stem, allow_any_aspect=allow_any_aspect)


def save_png(data: np.ndarray, path) -> None:
    """Write a float or uint8 HxWx3 raster as 8-bit PNG (round half to even, clamp)."""
    arr = np.asarray(data)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


# -- coordinate maps ---------------------------------------------------------

def erp_to_sphere(u: float, v: float, w: float, h: float) -> SphericalPoint:
    if not (0.0 <= u <= w and 0.0 <= v <= h):
        raise DomainError(f"pixel ({u}, {v}) outside [0, {w}] x [0, {h}]")
    lon = (u / w - 0.5) * TWO_PI
    lat = (0.5 - v / h) * math.pi
    # u == w is the seam; SphericalPoint wraps it back to -pi
    return SphericalPoint(lon, lat)


def sphere_to_erp(p: SphericalPoint, w: float, h: float) -> tuple[float, float]:
    u = (p.lon / TWO_PI + 0.5) * w
    v = (0.5 - p.lat / math.pi) * h
    return u, v


def lonlat_to_unit(lon, lat) -> np.ndarray:
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    c = np.cos(lat)
    return np.stack([c * np.sin(lon), np.sin(lat), c * np.cos(lon)], axis=-1)


def unit_to_lonlat(vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vec = np.asarray(vec, dtype=float)
    x, y, z = vec[..., 0], vec[..., 1], vec[..., 2]
    lon = np.arctan2(x, z)
    lat = np.arctan2(y, np.hypot(x, z))
    return wrap_lon(lon), lat


def _check_fov(fov: float) -> None:
    if not (0.0 < fov < math.pi):
        raise DomainError(f"fov {fov} must lie in (0, pi)")


def viewport_ray(i: float, j: float, vp_w: int, vp_h: int, fov: float, center: SphericalPoint) -> SphericalPoint:
    """Direction through viewport pixel ``(i, j)`` for a rectilinear camera at ``center``."""
    lon, lat = viewport_ray_grid(np.asarray([i], float), np.asarray([j], float), vp_w, vp_h, fov, center)
    return SphericalPoint(float(lon[0]), float(lat[0]))


def viewport_ray_grid(i, j, vp_w: int, vp_h: int, fov: float, center: SphericalPoint):
    """Vectorised ``viewport_ray``; ``i`` and ``j`` broadcast against each other."""
    _check_fov(fov)
    t = math.tan(fov / 2.0)
    x = (2.0 * (np.asarray(i, float) + 0.5) / vp_w - 1.0) * t
    y = (1.0 - 2.0 * (np.asarray(j, float) + 0.5) / vp_h) * t
    x, y = np.broadcast_arrays(x, y)
    n = np.sqrt(x * x + y * y + 1.0)
    dx, dy, dz = x / n, y / n, 1.0 / n

    # pitch up by lat about the camera x-axis, then yaw by lon about world +y
    cl, sl = math.cos(center.lat), math.sin(center.lat)
    y1 = dy * cl + dz * sl
    z1 = -dy * sl + dz * cl
    co, so = math.cos(center.lon), math.sin(center.lon)
    x2 = dx * co + z1 * so
    z2 = -dx * so + z1 * co
    return unit_to_lonlat(np.stack([x2, y1, z2], axis=-1))


def sphere_to_erp_grid(lon, lat, w: int, h: int):
    u = (np.asarray(lon) / TWO_PI + 0.5) * w
    v = (0.5 - np.asarray(lat) / math.pi) * h
    return u, v


# -- resampling --------------------------------------------------------------

def sample_bilinear(img: ErpImage, u: float, v: float) -> np.ndarray:
    """Bilinear RGB sample at fractional pixel ``(u, v)``; returns a float triple."""
    out = sample_bilinear_grid(img.data, np.asarray([u], float), np.asarray([v], float))
    return out[0]


def sample_bilinear_grid(data: np.ndarray, u, v) -> np.ndarray:
    """Bilinear sampling of an HxWxC raster at arrays of fractional coordinates.

    Columns wrap around (longitude is periodic); rows clamp at the poles.
    """
    if data.ndim != 3:
        raise ContractError("expected an HxWxC raster")
    h, w = data.shape[:2]
    # texel centres sit at index + 0.5
    x = np.asarray(u, float) - 0.5
    y = np.asarray(v, float) - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    xa = np.mod(x0, w)
    xb = np.mod(x0 + 1, w)
    ya = np.clip(y0, 0, h - 1)
    yb = np.clip(y0 + 1, 0, h - 1)
    src = data if data.dtype == np.float64 else data.astype(np.float64)
    top = src[ya, xa] * (1.0 - fx) + src[ya, xb] * fx
    bot = src[yb, xa] * (1.0 - fx) + src[yb, xb] * fx
    return top * (1.0 - fy) + bot * fy


def angular_distance(lon1, lat1, lon2, lat2):
    """Great-circle distance in radians (haversine form, stable near 0)."""
    dlon = np.asarray(lon2) - np.asarray(lon1)
    dlat = np.asarray(lat2) - np.asarray(lat1)
    a = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    return 2.0 * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def pixel_grid_lonlat(w: int, h: int):
    """Longitude/latitude of every texel centre of a ``w x h`` ERP raster."""
    lon = ((np.arange(w) + 0.5) / w - 0.5) * TWO_PI
    lat = (0.5 - (np.arange(h) + 0.5) / h) * math.pi
    return np.meshgrid(lon, lat)
