"""Independent reference implementations used as test oracles.

Nothing here imports from ``panobench``.
"""

import math

import numpy as np


def camera_basis_ray(i, j, w, h, fov, lon, lat):
    """Independent oracle: build the camera frame from forward/right/up vectors."""
    f = np.array([math.cos(lat) * math.sin(lon), math.sin(lat), math.cos(lat) * math.cos(lon)])
    r = np.array([math.cos(lon), 0.0, -math.sin(lon)])
    u = np.cross(f, r)
    t = math.tan(fov / 2)
    x = (2 * (i + 0.5) / w - 1) * t
    y = (1 - 2 * (j + 0.5) / h) * t
    d = x * r + y * u + f
    d /= np.linalg.norm(d)
    return math.atan2(d[0], d[2]), math.asin(max(-1.0, min(1.0, d[1])))


def brute_ranks(x):
    """Average ranks by explicit counting (1-based)."""
    x = list(x)
    out = []
    for v in x:
        below = sum(1 for w in x if w < v)
        equal = sum(1 for w in x if w == v)
        out.append(below + (equal + 1) / 2.0)
    return out


def brute_pearson(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return math.nan
    return sxy / math.sqrt(sxx * syy)


def brute_spearman(x, y):
    return brute_pearson(brute_ranks(x), brute_ranks(y))


def logistic5(x, b1, b2, b3, b4, b5):
    x = np.asarray(x, float)
    z = np.clip(b2 * (x - b3), -700, 700)
    return b1 * (0.5 - 1.0 / (1.0 + np.exp(z))) + b4 * x + b5


def grid_logistic_ssr(x, y, n_grid=240, b2_range=None):
    """Dense grid over (b2, b3); (b1, b4, b5) enter linearly and are solved exactly.

    Returns the best residual sum of squares found, an upper bound on the
    optimum over the searched region. ``b2_range=(lo, hi)`` restricts the
    slope grid (same sign as ``lo``/``hi``); by default both signs are
    searched over four decades around ``1/std(x)``.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    sd = x.std() or 1.0
    if b2_range is None:
        pos = np.geomspace(0.01, 100, n_grid // 2) / sd
        b2s = np.concatenate([-pos[::-1], pos])
    else:
        lo, hi = b2_range
        b2s = np.sign(lo) * np.geomspace(abs(lo), abs(hi), n_grid)
    b3s = np.linspace(x.min() - sd, x.max() + sd, n_grid)
    best = float(np.sum((y - np.polyval(np.polyfit(x, y, 1), x)) ** 2))
    ones = np.ones_like(x)
    for b2 in b2s:
        z = np.clip(b2 * (x[None, :] - b3s[:, None]), -700, 700)
        s = 0.5 - 1.0 / (1.0 + np.exp(z))  # (n_grid, n)
        for k in range(len(b3s)):
            a = np.column_stack([s[k], x, ones])
            coef, *_ = np.linalg.lstsq(a, y, rcond=None)
            r = a @ coef - y
            best = min(best, float(r @ r))
    return best


def linear_ssr(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    r = y - np.polyval(np.polyfit(x, y, 1), x)
    return float(r @ r)
