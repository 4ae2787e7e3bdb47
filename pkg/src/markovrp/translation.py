"""Translation T_h of group paths by piecewise-linear R^d paths, and W^{1,2} norms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nilpotent_group import DimensionMismatchError, _exp, _exp_level_one, _inv, _log, _mul
from .path_tools import GroupPath, LinearPath, cumulative_product

DEFAULT_SUBSTEPS = 64
MAX_REFINED_POINTS = 1_000_000


class GridRefinementError(ValueError):
    pass


def w12_norm(h: LinearPath, s: float | None = None, t: float | None = None) -> float:
    """(sum_i |dh_i|^2 / dt_i)^(1/2) over the segments of h intersected with [s, t]."""
    s = h.times[0] if s is None else s
    t = h.T if t is None else t
    if t <= s:
        return 0.0
    inner = h.times[(h.times > s) & (h.times < t)]
    grid = np.concatenate([[s], inner, [t]])
    vals = h(grid)
    dt = np.diff(grid)
    dh = np.diff(vals, axis=0)
    # beyond h's last time the path is constant, so slopes vanish there
    return float(np.sqrt(np.sum(np.sum(dh**2, axis=1) / dt)))


@dataclass(frozen=True, eq=False)
class SobolevPath:
    path: LinearPath
    w12_norm_cache: float | None = field(default=None)

    def __post_init__(self):
        if self.w12_norm_cache is None:
            object.__setattr__(self, "w12_norm_cache", w12_norm(self.path))

    @property
    def norm(self) -> float:
        return self.w12_norm_cache


def _power(x, K: int, N: int):
    result = None
    base = x
    while K:
        if K & 1:
            result = base if result is None else _mul(result, base, N)
        K >>= 1
        if K:
            base = _mul(base, base, N)
    return result


def translate_increments(logs, dh: np.ndarray, N: int, substeps: int | None = DEFAULT_SUBSTEPS):
    """Translated increments for geodesic pieces exp(L) paired with linear h-pieces dh.

    With ``substeps = K`` each piece is the K-fold product of the symmetric
    splitting exp(dh/2K) exp(L/K) exp(dh/2K); ``substeps=None`` gives the
    refinement limit exp(L + dh) directly.
    """
    if substeps is None:
        summed = list(logs)
        summed[1] = summed[1] + dh
        return _exp(summed, N)
    if substeps < 1:
        raise ValueError("substeps must be positive")
    K = int(substeps)
    a = _exp([lev / K for lev in logs], N)
    half = _exp_level_one(dh / (2 * K), N)
    step = _mul(_mul(half, a, N), half, N)
    return _power(step, K, N)


def _refine_pair(x: GroupPath, h: LinearPath, max_points: int) -> tuple[GroupPath, np.ndarray]:
    if h.d != x.d:
        raise DimensionMismatchError(f"path dimension {x.d} but translator dimension {h.d}")
    inside = h.times[(h.times > x.times[0]) & (h.times < x.T)]
    grid = np.union1d(x.times, inside)
    if grid.size > max_points:
        raise GridRefinementError(f"common refinement has {grid.size} points, limit is {max_points}")
    xr = x if grid.size == len(x) else x.resample(grid)
    return xr, h(grid)


def translate(x: GroupPath, h: LinearPath, substeps: int | None = DEFAULT_SUBSTEPS,
              max_points: int = MAX_REFINED_POINTS) -> GroupPath:
    """T_h(x) on the common refinement of x's grid and h's breakpoints.

    Level one of the result is pi_1(x_t) + h_t - h_0 at every grid time, and the
    path starts at x_0.
    """
    xr, hv = _refine_pair(x, h, max_points)
    return GroupPath(xr.times, translate_levels(xr.levels, hv, x.N, substeps))


def translate_levels(levels, h_values: np.ndarray, N: int, substeps: int | None = DEFAULT_SUBSTEPS):
    """Batched T_h on level arrays (..., n, d**k) with h sampled on the same grid (n, d)."""
    a = [lev[..., :-1] if k == 0 else lev[..., :-1, :] for k, lev in enumerate(levels)]
    b = [lev[..., 1:] if k == 0 else lev[..., 1:, :] for k, lev in enumerate(levels)]
    incs = _mul(_inv(a, N), b, N)
    logs = _log(incs, N)
    dh = np.diff(np.asarray(h_values, dtype=float), axis=0)
    dh = np.broadcast_to(dh, logs[1].shape)
    moved = translate_increments(logs, dh, N, substeps)
    start = [lev[..., 0] if k == 0 else lev[..., 0, :] for k, lev in enumerate(levels)]
    return cumulative_product(moved, N, start=start)


def translation_error(x: GroupPath, h: LinearPath, substeps: int = DEFAULT_SUBSTEPS) -> float:
    """Measured sub-sampling error: max coefficient gap between K and 2K sub-steps."""
    coarse = translate(x, h, substeps)
    fine = translate(x, h, 2 * substeps)
    return coarse.max_abs_diff(fine)
