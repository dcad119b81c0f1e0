"""Equator-anchored viewport trajectories and batch viewport extraction."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractError
from .geometry import (
    TWO_PI,
    ErpImage,
    SphericalPoint,
    sample_bilinear_grid,
    save_png,
    sphere_to_erp_grid,
    viewport_ray_grid,
    wrap_lon,
)

DEFAULT_FOV = math.pi / 3
DEFAULT_SIZE = 224


class TrajectoryMode(str, Enum):
    IMAGE8 = "image8"
    VIDEO30 = "video30"


@dataclass(frozen=True)
class Trajectory:
    start_lon: float = 0.0
    offset_step: float = math.pi / 4
    count: int = 8
    fov: float = DEFAULT_FOV
    viewport_size: int = DEFAULT_SIZE

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ConfigurationError(f"viewport count must be a positive integer, got {self.count}")
        if self.count > 1 and self.offset_step * self.count > TWO_PI + 1e-9:
            raise ConfigurationError(
                f"{self.count} viewports spaced {math.degrees(self.offset_step):.3f} deg overlap past 360 deg"
            )
        if not (0.0 < self.fov < math.pi):
            raise ConfigurationError(f"fov {self.fov} must lie in (0, pi)")
        if self.viewport_size < 1:
            raise ConfigurationError("viewport size must be positive")

    @property
    def centers(self) -> list[SphericalPoint]:
        return [SphericalPoint(self.start_lon + m * self.offset_step, 0.0) for m in range(self.count)]

    def centers_degrees(self) -> list[float]:
        """Center longitudes in ``[0, 360)`` degrees.

        Accumulated in degrees so preset centers come out as exact
        multiples of the step (wrapping in radians would round 315 down).
        """
        start = math.degrees(self.start_lon)
        step = math.degrees(self.offset_step)
        return [(start + m * step) % 360.0 for m in range(self.count)]


def make_trajectory(mode="image8", **custom) -> Trajectory:
    """Build a trajectory from a preset name or custom parameters.

    ``make_trajectory("image8")`` gives eight 60-degree viewports every 45
    degrees; ``"video30"`` gives thirty every 12 degrees. ``mode="custom"``
    takes ``start_lon``, ``offset_step``, ``count``, ``fov``, ``viewport_size``.
    Preset modes also accept ``start_lon`` (radians) to move the start point.
    """
    if isinstance(mode, Trajectory):
        return mode
    mode = str(getattr(mode, "value", mode)).lower()
    start = float(custom.pop("start_lon", 0.0))
    if mode == TrajectoryMode.IMAGE8.value:
        params = dict(offset_step=math.pi / 4, count=8)
    elif mode == TrajectoryMode.VIDEO30.value:
        params = dict(offset_step=math.pi / 15, count=30)
    elif mode == "custom":
        params = {}
    else:
        raise ConfigurationError(f"unknown trajectory mode {mode!r}")
    if mode != "custom" and custom:
        raise ConfigurationError(f"preset {mode!r} takes only start_lon, got {sorted(custom)}")
    params.update(custom)
    return Trajectory(start_lon=start, **params)


@dataclass(frozen=True, eq=False)
class Viewport:
    data: np.ndarray  # (size, size, 3) float64 in [0, 255]
    center: SphericalPoint
    fov: float

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@lru_cache(maxsize=64)
def _sampling_map(w: int, h: int, size: int, fov: float, lon: float, lat: float):
    center = SphericalPoint(lon, lat)
    jj, ii = np.mgrid[0:size, 0:size]
    rlon, rlat = viewport_ray_grid(ii, jj, size, size, fov, center)
    u, v = sphere_to_erp_grid(rlon, rlat, w, h)
    u.setflags(write=False)
    v.setflags(write=False)
    return u, v


def extract_viewport(img: ErpImage, center: SphericalPoint, fov: float = DEFAULT_FOV,
                     size: int = DEFAULT_SIZE) -> Viewport:
    if size >= img.width or size >= img.height:
        raise ContractError(
            f"viewport {size}x{size} must be smaller than the {img.width}x{img.height} source"
        )
    u, v = _sampling_map(img.width, img.height, size, float(fov), center.lon, center.lat)
    return Viewport(sample_bilinear_grid(img.data, u, v), center, fov)


def extract_viewports(img: ErpImage, traj: Trajectory | str = "image8", threads: int = 1) -> list[Viewport]:
    """Extract the trajectory's viewports in order ``m = 0 .. M-1``."""
    traj = make_trajectory(traj)
    centers = traj.centers

    def one(c):
        return extract_viewport(img, c, traj.fov, traj.viewport_size)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, centers))
    return [one(c) for c in centers]


def ray_longitudes(traj: Trajectory, m: int) -> np.ndarray:
    """Longitudes (radians) of every pixel ray of viewport ``m``."""
    c = traj.centers[m]
    jj, ii = np.mgrid[0:traj.viewport_size, 0:traj.viewport_size]
    lon, _ = viewport_ray_grid(ii, jj, traj.viewport_size, traj.viewport_size, traj.fov, c)
    return lon


def write_viewports(img: ErpImage, traj: Trajectory, out_dir, threads: int = 1) -> dict:
    """Write ``<id>_vp<m>.png`` files plus a ``<id>_viewports.json`` sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vps = extract_viewports(img, traj, threads=threads)
    files = []
    for m, vp in enumerate(vps):
        name = f"{img.id}_vp{m}.png"
        save_png(vp.data, out_dir / name)
        files.append(name)
    sidecar = {
        "id": img.id,
        "source_size": [img.width, img.height],
        "fov_deg": math.degrees(traj.fov),
        "viewport_size": traj.viewport_size,
        "start_lon_deg": math.degrees(float(wrap_lon(traj.start_lon))),
        "step_deg": math.degrees(traj.offset_step),
        "viewports": [
            {"index": m, "file": f, "center_lon_deg": lon_deg,
             "center_lat_deg": round(vp.center.degrees[1], 9)}
            for m, (f, vp, lon_deg) in enumerate(zip(files, vps, traj.centers_degrees()))
        ],
    }
    (out_dir / f"{img.id}_viewports.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return sidecar
