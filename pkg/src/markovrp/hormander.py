"""Lie brackets of polynomial vector fields and the bracket-rank constancy check.

The check asks whether dim span{V_[I](y) : |I| > N} is constant over the orbit
of y0, with V_[I] the left-nested bracket [[...[V_{i1}, V_{i2}], ...], V_{ik}].
The orbit is explored by composing flows of the fields from y0; ranks are
numerical with a declared singular-value policy.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .nilpotent_group import witt_dim
from .vector_fields import PolyVectorField, VectorFieldSystem, lie_bracket

MAX_TABLE_ENTRIES = 10**6
DEFAULT_TOL = 1e-8
ABS_TOL_FLOOR = 1e-12
ORBIT_TIME_RANGE = 0.3
ORBIT_FLOWS = (4, 8)
ORBIT_STEP = 1e-3
ORBIT_BLOWUP = 1e6


class BracketTable(dict):
    """Mapping from multi-index (0-based tuple) to the bracket field V_[I]."""

    def __init__(self, entries: Mapping[tuple, PolyVectorField], depth: int | None = None):
        super().__init__(entries)
        self.depth = depth if depth is not None else max((len(k) for k in entries), default=0)

    @property
    def e(self) -> int:
        return next(iter(self.values())).e

    def select(self, min_len: int, max_len: int | None = None) -> list[tuple]:
        hi = self.depth if max_len is None else max_len
        return [k for k in self if min_len <= len(k) <= hi]


def build_bracket_table(V: VectorFieldSystem, depth: int) -> BracketTable:
    """All left-nested brackets V_[I] with |I| <= depth."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    count = sum(V.d**k for k in range(1, depth + 1))
    if V.d**depth > MAX_TABLE_ENTRIES:
        raise ValueError(f"d**depth = {V.d}**{depth} exceeds the table limit {MAX_TABLE_ENTRIES}")
    table: dict[tuple, PolyVectorField] = {(i,): V.fields[i] for i in range(V.d)}
    for k in range(2, depth + 1):
        for prefix in itertools.product(range(V.d), repeat=k - 1):
            left = table[prefix]
            for j in range(V.d):
                table[prefix + (j,)] = (
                    PolyVectorField.zero(V.e) if left.is_zero else lie_bracket(left, V.fields[j])
                )
    assert len(table) == count
    return BracketTable(table, depth)


@dataclass
class RankResult:
    rank: int
    singular_values: np.ndarray
    threshold: float


def _rank(matrix: np.ndarray, tol: float, tol_abs: float = ABS_TOL_FLOOR) -> RankResult:
    if matrix.size == 0:
        return RankResult(0, np.zeros(0), tol_abs)
    sv = np.linalg.svd(matrix, compute_uv=False)
    thr = max(tol * (sv[0] if sv.size else 0.0), tol_abs)
    return RankResult(int(np.sum(sv > thr)), sv, thr)


def bracket_matrix(table: BracketTable, y, min_len: int, max_len: int | None = None) -> np.ndarray:
    keys = table.select(min_len, max_len)
    if not keys:
        return np.zeros((0, table.e))
    y = np.asarray(y, dtype=float)
    return np.stack([table[k](y) for k in keys])


def span_dim_at(table: BracketTable, y, min_len: int, tol: float = DEFAULT_TOL,
                tol_abs: float = ABS_TOL_FLOOR, max_len: int | None = None) -> int:
    """Numerical rank of {V_[I](y) : min_len <= |I| <= max_len}."""
    if min_len < 1:
        raise ValueError("min_len must be at least 1")
    return _rank(bracket_matrix(table, y, min_len, max_len), tol, tol_abs).rank


def dim_lie_W(V: VectorFieldSystem, N: int, y, depth: int, tol: float = DEFAULT_TOL) -> int:
    """dim G^N(R^d) + dim span{V_[I](y) : N < |I| <= depth}."""
    table = build_bracket_table(V, depth)
    return witt_dim(V.d, N).dimG + span_dim_at(table, y, N + 1, tol)


# ---------------------------------------------------------------------------
# orbit sampling


def _rk4_flows(V: VectorFieldSystem, y: np.ndarray, which: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Flow each point y[p] along field which[p] for time t[p] (fixed-step RK4)."""
    n_steps = max(1, int(np.ceil(np.max(np.abs(t), initial=0.0) / ORBIT_STEP)))
    h = (t / n_steps)[:, None]
    onehot = np.eye(V.d)[which]

    def rhs(z):
        vals = np.stack([f(z) for f in V.fields], axis=1)  # (P, d, e)
        return np.einsum("pd,pde->pe", onehot, vals)

    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_steps):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            y = np.where(np.isfinite(y), y, np.inf)
    return y


@dataclass
class OrbitSample:
    points: np.ndarray
    discarded: int = 0
    warnings: list = field(default_factory=list)


def sample_orbit(V: VectorFieldSystem, y0, n_points: int, seed: int) -> OrbitSample:
    """y0 followed by n_points - 1 images of y0 under random flow compositions.

    Each point composes 4-8 flows e^{t_j V_{i_j}} with t_j ~ U[-0.3, 0.3].  Points
    whose trajectories leave the box |y| < 1e6 or become non-finite are dropped.
    """
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if y0.size != V.e:
        raise ValueError(f"start point has dimension {y0.size}, system lives on R^{V.e}")
    rng = np.random.default_rng(seed)
    P = max(n_points - 1, 0)
    if P == 0:
        return OrbitSample(y0[None, :].copy())
    k = rng.integers(ORBIT_FLOWS[0], ORBIT_FLOWS[1] + 1, size=P)
    which = rng.integers(0, V.d, size=(P, ORBIT_FLOWS[1]))
    times = rng.uniform(-ORBIT_TIME_RANGE, ORBIT_TIME_RANGE, size=(P, ORBIT_FLOWS[1]))
    times[np.arange(ORBIT_FLOWS[1])[None, :] >= k[:, None]] = 0.0
    y = np.broadcast_to(y0, (P, V.e)).copy()
    for j in range(ORBIT_FLOWS[1]):
        y = _rk4_flows(V, y, which[:, j], times[:, j])
    ok = np.all(np.isfinite(y), axis=1) & (np.max(np.abs(y), axis=1) < ORBIT_BLOWUP)
    discarded = int(np.sum(~ok))
    warnings = [f"{discarded} orbit points discarded after flow blowup"] if discarded else []
    return OrbitSample(np.vstack([y0[None, :], y[ok]]), discarded, warnings)


def orbit_dimension(points: np.ndarray, tol: float = 1e-6) -> int:
    """Empirical rank of the centred point cloud."""
    if len(points) < 2:
        return 0
    centred = points - points.mean(axis=0)
    return _rank(centred, tol, 1e-9).rank


# ---------------------------------------------------------------------------
# verdict


@dataclass
class Verdict:
    verdict: str
    depth: int
    N: int
    ranks_per_point: list
    singular_value_gaps: list
    warnings: list = field(default_factory=list)
    span_dims: list = field(default_factory=list)

    @property
    def span_dim(self) -> int | None:
        return self.ranks_per_point[0] if self.verdict == "holds" else None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "depth": self.depth,
            "N": self.N,
            "ranks_per_point": list(self.ranks_per_point),
            "singular_value_gaps": list(self.singular_value_gaps),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _gap(res: RankResult) -> float:
    """How far the singular values sit from the threshold, as a ratio >= 1 (inf when clean)."""
    sv, thr = res.singular_values, res.threshold
    above = sv[res.rank - 1] / thr if res.rank > 0 else np.inf
    below = thr / sv[res.rank] if res.rank < sv.size and sv[res.rank] > 0 else np.inf
    return float(min(above, below))


def verdict_from_table(table: BracketTable, points, N: int, tol: float = DEFAULT_TOL,
                       warnings: list | None = None) -> Verdict:
    """Rank-constancy verdict for brackets with |I| > N at the given points.

    ``fails`` needs two points whose ranks differ at tol/10, tol and 10 tol;
    ``holds`` needs equal ranks at all three and no rank change between depth-1
    and depth.  Anything else is ``inconclusive``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    warnings = list(warnings or [])
    depth = table.depth
    if depth <= N:
        warnings.append(f"depth {depth} <= N {N}: no brackets of length > N, check is vacuous")
    ranks = {}
    gaps = []
    for scale in (0.1, 1.0, 10.0):
        rs = []
        for y in points:
            res = _rank(bracket_matrix(table, y, N + 1), tol * scale)
            rs.append(res.rank)
            if scale == 1.0:
                gaps.append(_gap(res))
        ranks[scale] = rs
    base = ranks[1.0]
    stable = ranks[0.1] == base == ranks[10.0]
    if len(set(base)) == 1 and stable:
        shallower = [span_dim_at(table, y, N + 1, tol, max_len=depth - 1) for y in points] if depth - 1 > N else None
        if shallower is not None and shallower != base:
            warnings.append("depth saturation: adding the last bracket length changed some rank")
            verdict = "inconclusive"
        else:
            verdict = "holds"
    else:
        differ = any(
            all(ranks[s][p] != ranks[s][q] for s in ranks)
            for p in range(len(points))
            for q in range(p + 1, len(points))
        )
        verdict = "fails" if differ else "inconclusive"
        if verdict == "inconclusive":
            warnings.append("ranks unstable under a tenfold change of tolerance")
    gaps = [g if np.isfinite(g) else None for g in gaps]
    return Verdict(verdict, depth, N, base, gaps, warnings)


def check_condition_34(V: VectorFieldSystem, N: int, y0, depth: int, n_points: int = 64, seed: int = 0,
                       tol: float = DEFAULT_TOL) -> Verdict:
    """Is dim span{V_[I](y) : |I| > N} constant on sampled orbit points of y0?"""
    table = build_bracket_table(V, depth)
    orbit = sample_orbit(V, y0, n_points, seed)
    return verdict_from_table(table, orbit.points, N, tol, orbit.warnings)
