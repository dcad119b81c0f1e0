"""Per-viewport features, viewport aggregation and quality regression heads.

The pipeline is: viewport -> 5-d handcrafted feature vector -> either
(a) linear per-viewport score + average pooling ("partial mapping"), or
(b) recurrent fusion over the viewport sequence + linear head
("integrated mapping").
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, special

from .errors import ConfigurationError, ContractError, DataError, NumericalError
from .geometry import ErpImage
from .viewports import Trajectory, Viewport, extract_viewports

FEATURE_NAMES = (
    "mean_luminance",
    "luminance_std",
    "laplacian_variance",
    "mean_gradient_magnitude",
    "hf_energy_ratio",
)
N_FEATURES = len(FEATURE_NAMES)
RIDGE_LAMBDA = 1e-3
SCORER_JSON_VERSION = 1
PSNR_REPORT_CAP = 100.0

_LUMA = np.array([0.299, 0.587, 0.114])


# -- features ----------------------------------------------------------------

def luminance(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma, written relative to green so grey pixels map to themselves exactly."""
    x = np.asarray(rgb, dtype=np.float64)
    r, g, b = x[..., 0], x[..., 1], x[..., 2]
    return g + _LUMA[0] * (r - g) + _LUMA[2] * (b - g)


def laplacian_valid(y: np.ndarray) -> np.ndarray:
    """4-neighbour Laplacian on the interior (no padding)."""
    return y[:-2, 1:-1] + y[2:, 1:-1] + y[1:-1, :-2] + y[1:-1, 2:] - 4.0 * y[1:-1, 1:-1]


def laplacian_circular(y: np.ndarray) -> np.ndarray:
    return (np.roll(y, 1, 0) + np.roll(y, -1, 0) + np.roll(y, 1, 1) + np.roll(y, -1, 1)) - 4.0 * y


def _features_from_luma(y: np.ndarray) -> np.ndarray:
    mean = float(y.mean())
    std = float(y.std())
    lap = laplacian_valid(y)
    lap_var = float(lap.var())
    gx = 0.5 * (y[1:-1, 2:] - y[1:-1, :-2])
    gy = 0.5 * (y[2:, 1:-1] - y[:-2, 1:-1])
    grad = float(np.hypot(gx, gy).mean())
    ac = float(((y - mean) ** 2).sum())
    if ac <= 0.0:
        ratio = 0.0
    else:
        # the circular Laplacian has gain <= 8 and zero DC gain, so by
        # Parseval the scaled energy never exceeds the AC energy
        ratio = float(((laplacian_circular(y) / 8.0) ** 2).sum() / ac)
        ratio = min(max(ratio, 0.0), 1.0)
    return np.array([mean, std, lap_var, grad, ratio])


def extract_features(vp: Viewport | np.ndarray) -> np.ndarray:
    """Return the 5-d feature vector (see ``FEATURE_NAMES``) of one viewport."""
    data = vp.data if isinstance(vp, Viewport) else np.asarray(vp, dtype=np.float64)
    if data.ndim != 3 or data.shape[0] < 3 or data.shape[1] < 3:
        raise ContractError(f"viewport raster must be HxWx3 with H, W >= 3, got {data.shape}")
    return _features_from_luma(luminance(data))


def laplacian_mad(data: np.ndarray) -> float:
    """Median absolute deviation of the Laplacian residual of the luminance."""
    lap = laplacian_valid(luminance(data))
    return float(np.median(np.abs(lap - np.median(lap))))


# -- image-level analysis ----------------------------------------------------

@dataclass
class ImageAnalysis:
    """Everything the scorers need from one panorama, computed once.

    ``features`` is (M, D); ``lap_mad`` is (M,); ``vp_mse`` is (M,) and
    ``ws_psnr`` a float when a reference image was supplied.
    """

    image_id: str
    features: np.ndarray
    lap_mad: np.ndarray
    vp_mse: np.ndarray | None = None
    ws_psnr: float | None = None


def analyze_image(img: ErpImage, traj: Trajectory, reference: ErpImage | None = None) -> ImageAnalysis:
    vps = extract_viewports(img, traj)
    feats = np.stack([extract_features(v) for v in vps])
    mad = np.array([laplacian_mad(v.data) for v in vps])
    vp_mse = ws = None
    if reference is not None:
        if reference.data.shape != img.data.shape:
            raise DataError(f"{img.id}: reference shape {reference.data.shape} != {img.data.shape}")
        ref_vps = extract_viewports(reference, traj)
        vp_mse = np.array([float(np.mean((a.data - b.data) ** 2)) for a, b in zip(vps, ref_vps)])
        ws = ws_psnr(reference, img)
    return ImageAnalysis(img.id, feats, mad, vp_mse, ws)


# -- partial mapping ---------------------------------------------------------

@dataclass(frozen=True)
class FeatureNormalizer:
    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def identity(cls, dim: int = N_FEATURES) -> "FeatureNormalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.means.shape[0]:
            raise ContractError(f"feature dimension {x.shape[-1]} != normalizer dimension {self.means.shape[0]}")
        return (x - self.means) / self.stds


@dataclass(frozen=True)
class LinearScorer:
    """``s = P . normalize(x) + b`` per viewport, average-pooled per image."""

    weights: np.ndarray
    bias: float
    normalizer: FeatureNormalizer
    feature_names: tuple = FEATURE_NAMES

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] != self.normalizer.means.shape[0]:
            raise ContractError("projection and normalizer dimensions differ")
        if np.any(self.normalizer.stds <= 0):
            raise ContractError("normalizer standard deviations must be positive")
        object.__setattr__(self, "weights", w)

    def score_viewport(self, f: np.ndarray) -> float:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != self.weights.shape:
            raise ContractError(f"feature shape {f.shape} != projection shape {self.weights.shape}")
        return float(self.weights @ self.normalizer(f) + self.bias)

    def score_image(self, features: np.ndarray) -> float:
        return pool_scores([self.score_viewport(f) for f in np.atleast_2d(features)])

    def to_dict(self) -> dict:
        return {
            "version": SCORER_JSON_VERSION,
            "feature_names": list(self.feature_names),
            "normalizer": {"means": self.normalizer.means.tolist(), "stds": self.normalizer.stds.tolist()},
            "weights": self.weights.tolist(),
            "bias": self.bias,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearScorer":
        if doc.get("version") != SCORER_JSON_VERSION:
            raise DataError(f"unsupported scorer document version {doc.get('version')!r}")
        try:
            norm = FeatureNormalizer(np.asarray(doc["normalizer"]["means"], float),
                                     np.asarray(doc["normalizer"]["stds"], float))
            return cls(np.asarray(doc["weights"], float), float(doc["bias"]), norm,
                       tuple(doc["feature_names"]))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed scorer document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "LinearScorer":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"scorer JSON does not parse: {exc}") from exc
        return cls.from_dict(doc)


def score_viewport(s: LinearScorer, f: np.ndarray) -> float:
    return s.score_viewport(f)


def pool_scores(scores: Sequence[float]) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ContractError("cannot pool an empty score list")
    return float(math.fsum(scores) / scores.size)


def _fit_normalizer(x: np.ndarray) -> tuple[FeatureNormalizer, np.ndarray]:
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    # scale-aware zero-variance test; dropped dims get weight 0 and std 1
    scale = np.maximum(np.abs(means), 1.0)
    active = stds > 1e-12 * scale
    stds = np.where(active, stds, 1.0)
    return FeatureNormalizer(means, stds), active


def ridge_solve(z: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """Ridge regression with an unpenalised intercept, via an augmented least-squares system."""
    n, d = z.shape
    design = np.hstack([z, np.ones((n, 1))])
    if lam > 0:
        penalty = np.hstack([math.sqrt(lam) * np.eye(d), np.zeros((d, 1))])
        design = np.vstack([design, penalty])
        y = np.concatenate([y, np.zeros(d)])
    coef, *_ = linalg.lstsq(design, y, lapack_driver="gelsd")
    return coef[:d], float(coef[d])


def train_linear_scorer(records: Sequence[tuple[np.ndarray, float]], ridge: float = RIDGE_LAMBDA) -> LinearScorer:
    """Fit a ``LinearScorer`` from ``(per-viewport features, mos)`` pairs.

    Each image contributes its viewport-mean feature vector; because the
    head is linear, scoring each viewport and average pooling reproduces the
    image-level fit exactly.
    """
    if not records:
        raise NumericalError("no training records")
    x = np.stack([np.atleast_2d(np.asarray(f, float)).mean(axis=0) for f, _ in records])
    y = np.asarray([m for _, m in records], dtype=np.float64)
    n, d = x.shape
    if n < d + 1:
        raise NumericalError(f"need at least {d + 1} training images, got {n}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
        raise NumericalError("non-finite features or MOS in training data")
    norm, active = _fit_normalizer(x)
    weights = np.zeros(d)
    z = norm(x)[:, active]
    if z.shape[1]:
        w_active, bias = ridge_solve(z, y, ridge)
        weights[active] = w_active
    else:
        bias = float(y.mean())
    return LinearScorer(weights, bias, norm)


# -- integrated mapping ------------------------------------------------------

def _sigmoid(x):
    return special.expit(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class RecurrentAggregator:
    """``h_t = sigmoid(W_h h_{t-1} + W_x x_t + b)``.

    ``w_h``/``w_x`` are scalars (applied elementwise) or DxD matrices;
    defaults give a fixed recency profile.
    """

    w_h: float | np.ndarray = 0.5
    w_x: float | np.ndarray = 1.0
    bias: float | np.ndarray = 0.0
    initial_state: np.ndarray | None = None

    @staticmethod
    def _apply(w, v):
        w = np.asarray(w, dtype=np.float64)
        if w.ndim == 0:
            return w * v
        if w.ndim != 2 or w.shape[1] != v.shape[0]:
            raise ContractError(f"weight shape {w.shape} incompatible with vector of length {v.shape[0]}")
        return w @ v

    def state_dim(self, input_dim: int) -> int:
        for w in (self.w_h, self.w_x):
            w = np.asarray(w)
            if w.ndim == 2:
                return w.shape[0]
        return input_dim

    def run(self, xs) -> np.ndarray:
        xs = [np.atleast_1d(np.asarray(x, dtype=np.float64)) for x in xs]
        if not xs:
            raise ContractError("recurrent aggregation needs at least one viewport")
        dim = self.state_dim(xs[0].shape[0])
        h = np.zeros(dim) if self.initial_state is None else np.asarray(self.initial_state, float)
        if h.shape != (dim,):
            raise ContractError(f"initial state shape {h.shape} != ({dim},)")
        for x in xs:
            try:
                pre = self._apply(self.w_h, h) + self._apply(self.w_x, x) + self.bias
            except ValueError as exc:
                raise ContractError(f"recurrent update shapes do not agree: {exc}") from None
            if pre.shape != (dim,):
                raise ContractError(f"recurrent update produced shape {pre.shape}, expected ({dim},)")
            h = _sigmoid(pre)
        return h


def aggregate_recurrent(agg: RecurrentAggregator, xs) -> np.ndarray:
    return agg.run(xs)


def score_integrated(head_weights, agg: RecurrentAggregator, xs, head_bias: float = 0.0) -> float:
    h = agg.run(xs)
    w = np.atleast_1d(np.asarray(head_weights, dtype=np.float64))
    if w.shape != h.shape:
        raise ContractError(f"head weights {w.shape} do not match state {h.shape}")
    return float(w @ h + head_bias)


@dataclass(frozen=True)
class IntegratedScorer:
    """Recurrent fusion of normalised viewport features followed by a linear head."""

    head_weights: np.ndarray
    head_bias: float
    normalizer: FeatureNormalizer
    aggregator: RecurrentAggregator = field(default_factory=RecurrentAggregator)

    def score_image(self, features: np.ndarray) -> float:
        z = self.normalizer(np.atleast_2d(features))
        return score_integrated(self.head_weights, self.aggregator, list(z), self.head_bias)

    def to_dict(self) -> dict:
        agg = self.aggregator
        return {
            "version": SCORER_JSON_VERSION,
            "feature_names": list(FEATURE_NAMES),
            "normalizer": {"means": self.normalizer.means.tolist(), "stds": self.normalizer.stds.tolist()},
            "head_weights": np.asarray(self.head_weights, float).tolist(),
            "head_bias": float(self.head_bias),
            "aggregator": {k: np.asarray(getattr(agg, k), float).tolist()
                           for k in ("w_h", "w_x", "bias")},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "IntegratedScorer":
        if doc.get("version") != SCORER_JSON_VERSION:
            raise DataError(f"unsupported scorer document version {doc.get('version')!r}")
        try:
            norm = FeatureNormalizer(np.asarray(doc["normalizer"]["means"], float),
                                     np.asarray(doc["normalizer"]["stds"], float))
            a = doc["aggregator"]
            agg = RecurrentAggregator(*(np.asarray(a[k], float) if np.ndim(a[k]) else float(a[k])
                                        for k in ("w_h", "w_x", "bias")))
            return cls(np.asarray(doc["head_weights"], float), float(doc["head_bias"]), norm, agg)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed scorer document: {exc}") from exc


def load_scorer(text: str):
    """Parse a trained-scorer JSON document (linear or integrated head)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"scorer JSON does not parse: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError("scorer JSON must be an object")
    if "head_weights" in doc:
        return IntegratedScorer.from_dict(doc)
    return LinearScorer.from_dict(doc)


def train_integrated_scorer(records, ridge: float = RIDGE_LAMBDA,
                            aggregator: RecurrentAggregator | None = None) -> IntegratedScorer:
    aggregator = aggregator or RecurrentAggregator()
    if len(records) < N_FEATURES + 1:
        raise NumericalError(f"need at least {N_FEATURES + 1} training images, got {len(records)}")
    allx = np.concatenate([np.atleast_2d(f) for f, _ in records])
    norm, _ = _fit_normalizer(allx)
    states = np.stack([aggregator.run(list(norm(np.atleast_2d(f)))) for f, _ in records])
    y = np.asarray([m for _, m in records], float)
    snorm, active = _fit_normalizer(states)
    w = np.zeros(states.shape[1])
    if active.any():
        wa, b = ridge_solve(snorm(states)[:, active], y, ridge)
        w[active] = wa / snorm.stds[active]
        b -= float(w @ snorm.means)
    else:
        b = float(y.mean())
    return IntegratedScorer(w, b, norm, aggregator)


# -- fixed reference scorers -------------------------------------------------

def psnr_from_mse(mse: float, peak: float = 255.0) -> float:
    if mse <= 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ws_psnr_weights(h: int) -> np.ndarray:
    j = np.arange(h)
    return np.cos((j + 0.5 - h / 2.0) * math.pi / h)


def ws_psnr(reference: ErpImage | np.ndarray, distorted: ErpImage | np.ndarray) -> float:
    """Weighted-to-spherically-uniform PSNR between two ERP rasters (inf if identical)."""
    a = reference.as_float() if isinstance(reference, ErpImage) else np.asarray(reference, float)
    b = distorted.as_float() if isinstance(distorted, ErpImage) else np.asarray(distorted, float)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch {a.shape} vs {b.shape}")
    h, w = a.shape[:2]
    c = a.shape[2] if a.ndim == 3 else 1
    wts = ws_psnr_weights(h)
    err = ((a - b) ** 2).reshape(h, -1).sum(axis=1)
    mse = float(wts @ err) / (c * w * float(wts.sum()))
    return psnr_from_mse(mse)


def vp_psnr(reference: ErpImage, distorted: ErpImage, traj: Trajectory | str = "image8") -> float:
    """Mean over viewports of per-viewport PSNR."""
    ref = extract_viewports(reference, traj)
    dist = extract_viewports(distorted, traj)
    return pool_scores([psnr_from_mse(float(np.mean((r.data - d.data) ** 2))) for r, d in zip(ref, dist)])


def cap_psnr(value: float) -> float:
    return min(value, PSNR_REPORT_CAP)


def sharpness_score(features: np.ndarray) -> float:
    lapvar = np.atleast_2d(features)[:, FEATURE_NAMES.index("laplacian_variance")]
    return pool_scores(np.log1p(lapvar))


def noise_mad_score(lap_mad: np.ndarray) -> float:
    return -pool_scores(np.atleast_1d(lap_mad))


@dataclass(frozen=True)
class FixedScorer:
    name: str
    description: str
    full_reference: bool
    fn: Callable[[ImageAnalysis], float]

    def score(self, analysis: ImageAnalysis) -> float:
        if self.full_reference and analysis.vp_mse is None:
            raise ConfigurationError(f"scorer {self.name} needs a reference image for {analysis.image_id}")
        return float(self.fn(analysis))


def _vp_psnr_from_analysis(a: ImageAnalysis) -> float:
    return pool_scores([cap_psnr(psnr_from_mse(m)) for m in a.vp_mse])


def fixed_scorers() -> dict[str, FixedScorer]:
    return {
        "sharpness": FixedScorer("sharpness", "mean log(1 + Laplacian variance) over viewports", False,
                                 lambda a: sharpness_score(a.features)),
        "noise-mad": FixedScorer("noise-mad", "negated mean MAD of the Laplacian residual", False,
                                 lambda a: noise_mad_score(a.lap_mad)),
        "vp-psnr": FixedScorer("vp-psnr", "mean per-viewport PSNR (full reference)", True,
                               _vp_psnr_from_analysis),
        "ws-psnr": FixedScorer("ws-psnr", "WS-PSNR on the ERP raster (full reference)", True,
                               lambda a: cap_psnr(a.ws_psnr)),
    }


TRAINABLE_SCORERS = ("composite", "composite-integrated")


def available_scorers() -> list[str]:
    return list(TRAINABLE_SCORERS) + list(fixed_scorers())
