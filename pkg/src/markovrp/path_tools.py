"""Discrete paths in R^d and in G^N(R^d), signature lifts and Hoelder-type norms.

All suprema are taken over grid times.  Between grid points a group path is
read as the geodesic segment x_{t_i} exp(theta log(x_{t_i}^{-1} x_{t_{i+1}})),
which is what :meth:`GroupPath.refine` inserts.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .nilpotent_group import (
    DimensionMismatchError,
    GroupElement,
    _exp,
    _exp_level_one,
    _identity,
    _inv,
    _level_norms,
    _log,
    _mul,
)

PVAR_EXACT_MAX_POINTS = 2000
_REL_TIME_TOL = 1e-9


class PathFormatError(ValueError):
    pass


def _validate_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float).reshape(-1)
    if t.size == 0:
        raise PathFormatError("a path needs at least one time")
    if not np.all(np.isfinite(t)):
        raise PathFormatError("times must be finite")
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if bad.size:
        i = int(bad[0])
        raise PathFormatError(
            f"times must be strictly increasing: t[{i}]={t[i]!r} is followed by t[{i + 1}]={t[i + 1]!r}"
        )
    t.setflags(write=False)
    return t


# ---------------------------------------------------------------------------
# containers


@dataclass(frozen=True, eq=False)
class LinearPath:
    """Piecewise-linear path in R^d, constant after its last time."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _validate_times(self.times)
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != t.size:
            raise PathFormatError(f"{t.size} times but {v.shape[0]} values")
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.stack([np.interp(t, self.times, self.values[:, j]) for j in range(self.d)], axis=-1)
        return out

    def resample(self, times) -> "LinearPath":
        return LinearPath(times, self(times))

    def __neg__(self) -> "LinearPath":
        return LinearPath(self.times, -self.values)

    def __add__(self, other: "LinearPath") -> "LinearPath":
        grid = np.union1d(self.times, other.times)
        return LinearPath(grid, self(grid) + other(grid))

    @classmethod
    def linear(cls, velocity, T: float = 1.0, n: int = 1) -> "LinearPath":
        v = np.asarray(velocity, dtype=float).reshape(-1)
        t = np.linspace(0.0, T, n + 1)
        return cls(t, t[:, None] * v[None, :])

    @classmethod
    def zero(cls, d: int, times) -> "LinearPath":
        t = np.asarray(times, dtype=float)
        return cls(t, np.zeros((t.size, d)))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + [f"v{j + 1}" for j in range(self.d)])
        for t, row in zip(self.times, self.values):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "LinearPath":
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][0].strip() != "t" or len(rows[0]) < 2:
            raise PathFormatError("expected a header 't,v1,...,vd'")
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        if data.ndim != 2 or data.shape[1] != len(rows[0]):
            raise PathFormatError("ragged CSV rows")
        return cls(data[:, 0], data[:, 1:])


class GroupPath:
    """Path in G^N(R^d) sampled on a grid, levels stored as (n_times, d**k) arrays."""

    def __init__(self, times, levels: Sequence[np.ndarray]):
        self.times = _validate_times(times)
        n = self.times.size
        levels = [np.array(lev, dtype=float) for lev in levels]
        if levels[0].shape != (n,):
            raise PathFormatError(f"level 0 must have shape ({n},), got {levels[0].shape}")
        if np.max(np.abs(levels[0] - 1.0)) > 1e-10:
            raise PathFormatError("group path values need unit scalar level")
        d = levels[1].shape[-1]
        for k, lev in enumerate(levels[1:], start=1):
            if lev.shape != (n, d**k):
                raise PathFormatError(f"level {k} must have shape ({n}, {d**k}), got {lev.shape}")
        for lev in levels:
            lev.setflags(write=False)
        self.levels = tuple(levels)

    @property
    def d(self) -> int:
        return self.levels[1].shape[-1]

    @property
    def N(self) -> int:
        return len(self.levels) - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return self.times.size

    def __getitem__(self, i: int) -> GroupElement:
        return GroupElement(self.d, self.N, tuple(lev[i] for lev in self.levels))

    @property
    def values(self) -> list[GroupElement]:
        return [self[i] for i in range(len(self))]

    @classmethod
    def from_elements(cls, times, values: Sequence[GroupElement]) -> "GroupPath":
        if not values:
            raise PathFormatError("empty path")
        d, N = values[0].d, values[0].N
        for g in values:
            if (g.d, g.N) != (d, N):
                raise DimensionMismatchError("all path values must share (d, N)")
        levels = [np.stack([g.levels[k] for g in values]) for k in range(N + 1)]
        return cls(times, levels)

    @classmethod
    def constant(cls, g: GroupElement, times) -> "GroupPath":
        n = np.asarray(times).size
        return cls(times, [np.broadcast_to(lev, (n,) + lev.shape).copy() for lev in g.levels])

    @classmethod
    def identity(cls, d: int, N: int, times) -> "GroupPath":
        return cls.constant(GroupElement.identity(d, N), times)

    def level_one(self) -> np.ndarray:
        return self.levels[1]

    def increments(self) -> list[np.ndarray]:
        """X_{t_i, t_{i+1}} for consecutive grid points, shape (n-1, d**k) per level."""
        a = [lev[:-1] for lev in self.levels]
        b = [lev[1:] for lev in self.levels]
        return _mul(_inv(a, self.N), b, self.N)

    def at(self, t: float) -> GroupElement:
        """Value at time t (geodesic between grid points, constant after T)."""
        refined = self.refine([t])
        return refined[int(np.searchsorted(refined.times, min(max(t, self.times[0]), self.T)))]

    def refine(self, new_times) -> "GroupPath":
        """Path on the union of its grid with ``new_times`` (geodesic interpolation)."""
        extra = np.asarray(new_times, dtype=float).reshape(-1)
        grid = np.union1d(self.times, extra)
        return self.resample(grid)

    def resample(self, grid) -> "GroupPath":
        grid = _validate_times(grid)
        idx = np.clip(np.searchsorted(self.times, grid, side="right") - 1, 0, len(self) - 1)
        nxt = np.minimum(idx + 1, len(self) - 1)
        span = self.times[nxt] - self.times[idx]
        theta = np.where(span > 0, (grid - self.times[idx]) / np.where(span > 0, span, 1.0), 0.0)
        theta = np.clip(theta, 0.0, 1.0)
        base = [lev[idx] for lev in self.levels]
        step = _mul(_inv(base, self.N), [lev[nxt] for lev in self.levels], self.N)
        logs = _log(step, self.N)
        scaled = [logs[0]] + [lev * theta[:, None] for lev in logs[1:]]
        return GroupPath(grid, _mul(base, _exp(scaled, self.N), self.N))

    def restrict(self, s: float, t: float) -> "GroupPath":
        """Grid points within [s, t], with s and t inserted if needed."""
        refined = self.refine([s, t])
        mask = (refined.times >= s) & (refined.times <= t)
        return GroupPath(refined.times[mask], [lev[mask] for lev in refined.levels])

    def allclose(self, other: "GroupPath", atol: float = 1e-10) -> bool:
        return (
            np.array_equal(self.times, other.times)
            and (self.d, self.N) == (other.d, other.N)
            and all(np.allclose(a, b, rtol=0, atol=atol) for a, b in zip(self.levels, other.levels))
        )

    def max_abs_diff(self, other: "GroupPath") -> float:
        if not np.array_equal(self.times, other.times):
            raise ValueError("paths live on different grids")
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.levels, other.levels))

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "N": self.N,
            "times": self.times.tolist(),
            "values": [self[i].to_dict() for i in range(len(self))],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "GroupPath":
        times = _validate_times(data["times"])
        values = [GroupElement.from_dict(v) for v in data["values"]]
        if len(values) != times.size:
            raise PathFormatError(f"{times.size} times but {len(values)} values")
        return cls.from_elements(times, values)

    @classmethod
    def from_json(cls, source) -> "GroupPath":
        text = source if isinstance(source, str) and source.lstrip().startswith("{") else Path(source).read_text()
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        return f"GroupPath(d={self.d}, N={self.N}, n={len(self)}, T={self.T})"


# ---------------------------------------------------------------------------
# lifts


def cumulative_product(increments: Sequence[np.ndarray], N: int, start: Sequence[np.ndarray] | None = None):
    """Running Chen products of increments along axis -2.

    ``increments`` levels have shape (..., n, d**k); the result has n + 1 points
    and starts at ``start`` (identity by default).
    """
    d = increments[1].shape[-1]
    batch = increments[1].shape[:-2]
    n = increments[1].shape[-2]
    cur = list(start) if start is not None else _identity(d, N, batch)
    out = [np.empty(batch + (n + 1,) + ((d**k,) if k else ())) for k in range(N + 1)]
    for k in range(N + 1):
        if k:
            out[k][..., 0, :] = cur[k]
        else:
            out[k][..., 0] = cur[k]
    for i in range(n):
        inc = [lev[..., i] if k == 0 else lev[..., i, :] for k, lev in enumerate(increments)]
        cur = _mul(cur, inc, N)
        for k in range(N + 1):
            if k:
                out[k][..., i + 1, :] = cur[k]
            else:
                out[k][..., i + 1] = cur[k]
    return out


def lift_signature(h: LinearPath, N: int) -> GroupPath:
    """Level-N lift S_N(h) of a piecewise-linear path, started at the identity."""
    dh = np.diff(h.values, axis=0)
    incs = _exp_level_one(dh, N)
    incs[0] = np.ones(dh.shape[0])
    return GroupPath(h.times, cumulative_product(incs, N))


def concatenate(x: GroupPath, y: GroupPath) -> GroupPath:
    """Path x followed by y, with y's increments appended after x's end time."""
    if (x.d, x.N) != (y.d, y.N):
        raise DimensionMismatchError("cannot concatenate paths with different (d, N)")
    incs = y.increments()
    tail = cumulative_product(incs, x.N, start=[lev[-1] for lev in x.levels])
    times = np.concatenate([x.times, x.T + (y.times[1:] - y.times[0])])
    levels = [np.concatenate([a, b[1:]]) for a, b in zip(x.levels, tail)]
    return GroupPath(times, levels)


# ---------------------------------------------------------------------------
# pairwise distances


def pairwise_increments(levels: Sequence[np.ndarray], N: int) -> list[np.ndarray]:
    """X_{u,v} = x_u^{-1} x_v for all grid pairs; levels (..., n, n, d**k)."""
    inv = _inv(list(levels), N)
    a = [lev[..., :, None] if k == 0 else lev[..., :, None, :] for k, lev in enumerate(inv)]
    b = [lev[..., None, :] if k == 0 else lev[..., None, :, :] for k, lev in enumerate(levels)]
    return _mul(a, b, N)


def _swap(levels: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [np.swapaxes(lev, -1, -2) if k == 0 else np.swapaxes(lev, -2, -3) for k, lev in enumerate(levels)]


def _norm_pair_matrix(pair: Sequence[np.ndarray], pair_inv: Sequence[np.ndarray]) -> np.ndarray:
    norms = _level_norms(pair)
    norms_inv = _level_norms(pair_inv)
    powers = 1.0 / np.arange(1, norms.shape[-1] + 1)
    return np.max(np.maximum(norms, norms_inv) ** powers, axis=-1)


def pairwise_distances(levels: Sequence[np.ndarray], N: int) -> np.ndarray:
    """Matrix dist(x_u, x_v) over grid points; uses X_{u,v}^{-1} = X_{v,u}."""
    pair = pairwise_increments(levels, N)
    return _norm_pair_matrix(pair, _swap(pair))


def _time_lags(times: np.ndarray) -> np.ndarray:
    return np.abs(times[None, :] - times[:, None])


class Relation(enum.Enum):
    LT = "<"
    LE = "<="
    EQ = "="
    GE = ">="
    GT = ">"

    @classmethod
    def parse(cls, rel) -> "Relation":
        if isinstance(rel, cls):
            return rel
        aliases = {"≤": "<=", "≥": ">=", "==": "=", "lt": "<", "le": "<=", "eq": "=", "ge": ">=", "gt": ">"}
        key = aliases.get(str(rel).strip(), str(rel).strip())
        return cls(key)

    def mask(self, lags: np.ndarray, eps: float) -> np.ndarray:
        tol = _REL_TIME_TOL * max(eps, 1e-300)
        if self is Relation.LT:
            return lags < eps - tol
        if self is Relation.LE:
            return lags <= eps + tol
        if self is Relation.EQ:
            return np.abs(lags - eps) <= tol
        if self is Relation.GE:
            return lags >= eps - tol
        return lags > eps + tol


def _ratio_matrix(dists: np.ndarray, times: np.ndarray, alpha: float) -> np.ndarray:
    lags = _time_lags(times)
    upper = np.triu(np.ones(lags.shape, dtype=bool), k=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(upper, dists / np.where(upper, lags, 1.0) ** alpha, 0.0)
    return ratio


def _masked_max(ratio: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.max(np.where(mask, ratio, 0.0), axis=(-1, -2)) if ratio.size else np.zeros(ratio.shape[:-2])


def restricted_holder(x: GroupPath, alpha: float, rel, eps: float, s: float | None = None,
                      t: float | None = None) -> float:
    """sup of dist(x_u, x_v)/|u - v|^alpha over grid pairs in [s, t] with |u - v| rel eps.

    Returns 0 when no admissible pair exists.  Equality comparisons on times use
    a relative tolerance of 1e-9 * eps.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    relation = Relation.parse(rel)
    s = x.times[0] if s is None else s
    t = x.T if t is None else t
    sub = x.restrict(s, t) if (s > x.times[0] or t < x.T) else x
    dists = pairwise_distances(sub.levels, sub.N)
    ratio = _ratio_matrix(dists, sub.times, alpha)
    upper = np.triu(np.ones(ratio.shape, dtype=bool), k=1)
    return float(_masked_max(ratio, upper & relation.mask(_time_lags(sub.times), eps)))


def holder_norm(x: GroupPath, alpha: float) -> float:
    """Homogeneous alpha-Hoelder norm over all grid pairs."""
    return restricted_holder(x, alpha, Relation.LE, max(x.T - x.times[0], 1e-300) * 2)


def holder_stopping_times(x: GroupPath, alpha: float, eps: float, gamma: float, s: float = 0.0) -> list[float]:
    """Hoelder stopping times tau_0 = s < tau_1 < ... on the grid.

    tau_n is the first grid time t > tau_{n-1} at which the (>= eps)-restricted
    norm over [tau_{n-1}, t] reaches gamma.
    """
    if eps <= 0 or gamma <= 0:
        raise ValueError("eps and gamma must be positive")
    if s > x.times[0]:
        x = x.restrict(s, x.T)
    dists = pairwise_distances(x.levels, x.N)
    ratio = _ratio_matrix(dists, x.times, alpha)
    ratio = np.where(Relation.GE.mask(_time_lags(x.times), eps), ratio, 0.0)
    return [float(x.times[i]) for i in _stopping_indices(ratio, gamma)]


def _stopping_indices(ratio: np.ndarray, gamma: float) -> list[int]:
    n = ratio.shape[0]
    out = [0]
    a = 0
    while a < n - 1:
        colmax = np.max(ratio[a:, a + 1:], axis=0)
        running = np.maximum.accumulate(colmax)
        hit = np.nonzero(running >= gamma)[0]
        if hit.size == 0:
            break
        a = a + 1 + int(hit[0])
        out.append(a)
    return out


# ---------------------------------------------------------------------------
# closed-form bounds


def bound_unifHol(c: float, gamma: float, eps: float, alpha: float) -> float:
    """(3 c eps^-alpha) v (4 gamma + c eps^-alpha)."""
    return max(3 * c * eps**-alpha, 4 * gamma + c * eps**-alpha)


def bound_dyadic(gamma: float, alpha: float) -> float:
    return gamma / (1 - 2.0**-alpha)


def bound_global(gamma: float, r: float, eps: float, alpha: float) -> float:
    return 2 * gamma + 2 * r * eps**-alpha


# ---------------------------------------------------------------------------
# path metrics


def _common_grid(x: GroupPath, y: GroupPath) -> tuple[GroupPath, GroupPath]:
    if (x.d, x.N) != (y.d, y.N):
        raise DimensionMismatchError(f"(d, N) mismatch: {(x.d, x.N)} vs {(y.d, y.N)}")
    if np.array_equal(x.times, y.times):
        return x, y
    grid = np.union1d(x.times, y.times)
    return x.resample(grid), y.resample(grid)


def holder_distance_levels(xl: Sequence[np.ndarray], yl: Sequence[np.ndarray], times: np.ndarray,
                           alpha: float, N: int) -> np.ndarray:
    """Batched alpha-Hoelder distance; ``xl``/``yl`` levels (..., n, d**k), broadcastable."""
    X = pairwise_increments(xl, N)
    Y = pairwise_increments(yl, N)
    # X_{st}^{-1} Y_{st} = X_{ts} Y_{st}; its inverse is Y_{ts} X_{st}
    Z = _mul(_swap(X), Y, N)
    Zi = _mul(_swap(Y), X, N)
    dists = _norm_pair_matrix(Z, Zi)
    ratio = _ratio_matrix(dists, times, alpha)
    start = [xl[0][..., 0], *[lev[..., 0, :] for lev in xl[1:]]]
    start_y = [yl[0][..., 0], *[lev[..., 0, :] for lev in yl[1:]]]
    d0 = _norm_pair_matrix(_mul(_inv(start, N), start_y, N), _mul(_inv(start_y, N), start, N))
    return np.max(ratio, axis=(-1, -2)) + d0


def dist_alpha_holder(x: GroupPath, y: GroupPath, alpha: float) -> float:
    """sup_{s<t} dist(x_{s,t}, y_{s,t}) / |t - s|^alpha + dist(x_0, y_0) on a common grid."""
    x, y = _common_grid(x, y)
    return float(holder_distance_levels(x.levels, y.levels, x.times, alpha, x.N))


class PVariation(NamedTuple):
    value: float
    approximate: bool


def pvar_norm(x: GroupPath, p: float, max_exact: int = PVAR_EXACT_MAX_POINTS) -> PVariation:
    """p-variation (sup over partitions of sum dist^p)^(1/p) by dynamic programming.

    Exact on grids of at most ``max_exact`` points.  Larger grids run the same DP
    over an evenly strided subset of ``max_exact`` points, which gives a lower
    bound and is flagged ``approximate``.
    """
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    n = len(x)
    approximate = n > max_exact
    if approximate:
        idx = np.unique(np.linspace(0, n - 1, max_exact).round().astype(int))
        levels = [lev[idx] for lev in x.levels]
    else:
        levels = x.levels
    m = levels[0].shape[0]
    if m < 2:
        return PVariation(0.0, approximate)
    best = np.zeros(m)
    inv = _inv(list(levels), x.N)
    for j in range(1, m):
        a = [lev[:j] for lev in inv]
        b = [np.broadcast_to(lev[j], (j,) + lev.shape[1:]) for lev in levels]
        fwd = _mul(a, b, x.N)
        bwd = _mul(_inv([lev[j:j + 1] for lev in levels], x.N), [lev[:j] for lev in levels], x.N)
        dj = _norm_pair_matrix(fwd, bwd)
        best[j] = np.max(best[:j] + dj**p)
    return PVariation(float(best[-1] ** (1.0 / p)), approximate)


def pvar_brute_force(values: np.ndarray, p: float) -> float:
    """Scalar p-variation by enumerating every partition; exponential, for oracles."""
    n = len(values)
    best = 0.0
    for mask in range(1 << max(n - 2, 0)):
        pts = [0] + [i + 1 for i in range(n - 2) if mask >> i & 1] + [n - 1]
        total = sum(abs(values[b] - values[a]) ** p for a, b in zip(pts, pts[1:]))
        best = max(best, total)
    return best ** (1.0 / p)


def time_grid(T: float, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one step")
    return np.linspace(0.0, T, n + 1)


def uniform_steps(T: float, steps_per_unit: int) -> int:
    return max(1, int(math.ceil(steps_per_unit * T - 1e-9)))
