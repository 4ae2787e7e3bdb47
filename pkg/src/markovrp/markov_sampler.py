"""Euler simulation of the subelliptic diffusion on G^N(R^d) driven by a field a(x).

One step multiplies on the right by exp(sigma(X_k) dB_k + b(X_k) dt) with
sigma sigma^T = 2a (the Dirichlet form carries no 1/2) and, in divergence form,
b^j = sum_i U_i a^{ij} by central differences along the left-invariant
directions U_i.  Every path index owns a Philox substream derived from
(seed, stage, index), so results do not depend on chunking or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binomtest

from .nilpotent_group import (
    GroupElement,
    _exp_level_one,
    _hom_norm,
    _inv,
    _mul,
    random_group_element,
)
from .path_tools import GroupPath, uniform_steps

CHUNK = 2048
MIN_SURVIVORS = 50
MIN_MOMENT_SAMPLES = 1000
_ELLIPTIC_SLACK = 1e-12
_SEED_MASK = (1 << 64) - 1


class EllipticityError(ValueError):
    pass


class InsufficientConditioningMass(RuntimeError):
    def __init__(self, survivors: int, M: int):
        super().__init__(f"insufficient conditioning mass: {survivors} of {M} paths in the ball, need {MIN_SURVIVORS}")
        self.survivors = survivors
        self.M = M


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class SubellipticField:
    """Symmetric matrix field a on G with Lambda^{-1} <= a <= Lambda.

    ``func`` is batched: it receives level-one arrays (..., d) when
    ``depends_on_level_one`` is set, else the full level list, and returns
    (..., d, d).  Constant fields store the matrix and skip evaluation.
    """

    d: int
    lambda_const: float
    func: Callable | None = None
    depends_on_level_one: bool = False
    constant_matrix: np.ndarray | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lambda_const < 1:
            raise ValueError(f"ellipticity constant must be >= 1, got {self.lambda_const}")
        if self.func is None and self.constant_matrix is None:
            raise ValueError("need either a function or a constant matrix")

    @property
    def is_constant(self) -> bool:
        return self.constant_matrix is not None

    @classmethod
    def constant(cls, A, lambda_const: float | None = None, name: str = "constant") -> "SubellipticField":
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("constant field needs a square matrix")
        if not np.allclose(A, A.T, atol=1e-14):
            raise EllipticityError("matrix is not symmetric")
        eig = np.linalg.eigvalsh(A)
        if eig[0] <= 0:
            raise EllipticityError(f"matrix is not positive definite (min eigenvalue {eig[0]:.3g})")
        lam = max(eig[-1], 1.0 / eig[0], 1.0) if lambda_const is None else lambda_const
        A.setflags(write=False)
        f = cls(A.shape[0], float(lam), None, True, A, name, {"matrix": A.tolist()})
        f.spot_check()
        return f

    @classmethod
    def identity(cls, d: int, scale: float = 1.0) -> "SubellipticField":
        return cls.constant(scale * np.eye(d), name="identity")

    @classmethod
    def level_one(cls, func: Callable, d: int, lambda_const: float, name: str = "level_one",
                  params: dict | None = None) -> "SubellipticField":
        f = cls(d, float(lambda_const), func, True, None, name, dict(params or {}))
        f.spot_check()
        return f

    @classmethod
    def general(cls, func: Callable, d: int, lambda_const: float, name: str = "general") -> "SubellipticField":
        f = cls(d, float(lambda_const), func, False, None, name)
        f.spot_check()
        return f

    @classmethod
    def sinusoidal(cls, d: int, amplitude: float = 0.5, frequency: float = 1.0) -> "SubellipticField":
        """a(x) = diag(1 + amplitude * sin(frequency * x^j)) in the level-one coordinates."""
        if not 0 <= amplitude < 1:
            raise ValueError("amplitude must lie in [0, 1)")

        def func(x1):
            diag = 1.0 + amplitude * np.sin(frequency * x1)
            return diag[..., :, None] * np.eye(d)

        lam = max(1 + amplitude, 1 / (1 - amplitude))
        return cls.level_one(func, d, lam, "sinusoidal", {"amplitude": amplitude, "frequency": frequency})

    def matrix(self, levels: Sequence[np.ndarray]) -> np.ndarray:
        """a at a batch of group elements given as level arrays."""
        batch = levels[1].shape[:-1]
        if self.is_constant:
            return np.broadcast_to(self.constant_matrix, batch + (self.d, self.d))
        out = self.func(levels[1]) if self.depends_on_level_one else self.func(list(levels))
        return np.asarray(out, dtype=float)

    def eval(self, x: GroupElement) -> np.ndarray:
        return self.matrix(list(x.levels))

    def check_bounds(self, A: np.ndarray, where: str = "") -> None:
        if not np.allclose(A, np.swapaxes(A, -1, -2), atol=1e-12):
            raise EllipticityError(f"field is not symmetric {where}".strip())
        eig = np.linalg.eigvalsh(A)
        lo, hi = 1.0 / self.lambda_const, self.lambda_const
        bad = (eig[..., 0] < lo * (1 - _ELLIPTIC_SLACK)) | (eig[..., -1] > hi * (1 + _ELLIPTIC_SLACK))
        if np.any(bad):
            i = np.unravel_index(int(np.argmax(bad)), bad.shape)
            raise EllipticityError(
                f"eigenvalues {eig[i].tolist()} outside [{lo:.6g}, {hi:.6g}] {where} (batch index {list(map(int, i))})".strip()
            )

    def spot_check(self, N: int = 2, n_samples: int = 64, seed: int = 0) -> None:
        """Check symmetry and the Lambda bounds at random group elements (and random xi via eigenvalues)."""
        if self.is_constant:
            self.check_bounds(self.constant_matrix, "for the constant matrix")
            return
        rng = np.random.default_rng(seed)
        for scale in (0.1, 1.0, 5.0):
            pts = [random_group_element(rng, self.d, N, scale) for _ in range(n_samples // 3 + 1)]
            levels = [np.stack([g.levels[k] for g in pts]) for k in range(N + 1)]
            self.check_bounds(self.matrix(levels), f"at spot-check scale {scale}")

    def describe(self) -> dict:
        return {"name": self.name, "d": self.d, "lambda": self.lambda_const, "params": self.params}


@dataclass(frozen=True)
class SamplerConfig:
    steps_per_unit: int = 256
    seed: int = 0
    drift_mode: str = "divergence-form"
    fd_step: float = 1e-4
    min_steps: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.steps_per_unit < 1:
            raise ValueError("steps per unit time must be at least 1")
        if self.fd_step <= 0:
            raise ValueError("finite-difference step must be positive")
        if self.drift_mode not in ("none", "divergence-form"):
            raise ValueError(f"drift_mode must be 'none' or 'divergence-form', got {self.drift_mode!r}")
        if self.min_steps < 1 or self.workers < 1:
            raise ValueError("min_steps and workers must be positive")

    def n_steps(self, T: float) -> int:
        return max(uniform_steps(T, self.steps_per_unit), self.min_steps)

    def to_dict(self) -> dict:
        # worker count is excluded: results do not depend on it
        d = asdict(self)
        d.pop("workers")
        return d


# ---------------------------------------------------------------------------
# core simulation


def _normals(seed: int, stage: int, indices: np.ndarray, n: int, d: int) -> np.ndarray:
    out = np.empty((len(indices), n, d))
    root = int(seed) & _SEED_MASK
    for row, idx in enumerate(indices):
        ss = np.random.SeedSequence(root, spawn_key=(int(stage), int(idx)))
        out[row] = np.random.Generator(np.random.Philox(ss)).standard_normal((n, d))
    return out


def divergence_drift(a: SubellipticField, levels: Sequence[np.ndarray], N: int, h: float) -> np.ndarray:
    """b^j = sum_i U_i a^{ij} by central differences along x -> x exp(+-h e_i)."""
    d = a.d
    batch = levels[1].shape[:-1]
    b = np.zeros(batch + (d,))
    if a.is_constant:
        return b
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        if a.depends_on_level_one:
            plus = [None, levels[1] + e]
            minus = [None, levels[1] - e]
        else:
            step_p = _exp_level_one(np.broadcast_to(e, batch + (d,)), N)
            step_m = _exp_level_one(np.broadcast_to(-e, batch + (d,)), N)
            plus = _mul(levels, step_p, N)
            minus = _mul(levels, step_m, N)
        b += (a.matrix(plus)[..., i, :] - a.matrix(minus)[..., i, :]) / (2 * h)
    return b


def _run_chunk(a, start, T, n, N, cfg, stage, indices, keep_path):
    d = a.d
    P = len(indices)
    dt = T / n
    Z = _normals(cfg.seed, stage, indices, n, d)
    cur = [np.broadcast_to(lev, (P,) + lev.shape[1:]).copy() for lev in start]
    if keep_path:
        path = [np.empty((P, n + 1) + lev.shape[1:]) for lev in cur]
        for k, lev in enumerate(cur):
            path[k][:, 0] = lev
    sqdt = math.sqrt(dt)
    chol_const = np.linalg.cholesky(2.0 * a.constant_matrix) if a.is_constant else None
    drift = cfg.drift_mode == "divergence-form" and not a.is_constant
    for i in range(n):
        if a.is_constant:
            dx = Z[:, i] @ chol_const.T * sqdt
        else:
            A = a.matrix(cur)
            a.check_bounds(A, f"during simulation at t={i * dt:.6g} (step {i}, path {int(indices[0])}+)")
            dx = np.einsum("pij,pj->pi", np.linalg.cholesky(2.0 * A), Z[:, i]) * sqdt
            if drift:
                dx = dx + divergence_drift(a, cur, N, cfg.fd_step) * dt
        cur = _mul(cur, _exp_level_one(dx, N), N)
        if keep_path:
            for k, lev in enumerate(cur):
                path[k][:, i + 1] = lev
    return path if keep_path else cur


def simulate(a: SubellipticField, x0: GroupElement | Sequence[np.ndarray], T: float, cfg: SamplerConfig, M: int,
             *, stage: int = 0, indices: np.ndarray | None = None, keep_path: bool = True,
             reduce: Callable | None = None):
    """Simulate paths ``indices`` (default 0..M-1) from x0 on [0, T].

    Returns ``(times, out)``.  With ``keep_path`` the levels have shape
    (M, n+1, d**k); otherwise only the end points (M, d**k).  ``reduce`` maps
    each chunk's output to per-path arrays, which are then concatenated.
    ``x0`` may be a single element or per-path start levels.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if isinstance(x0, GroupElement):
        d, N = x0.d, x0.N
        start = [np.asarray(lev)[None] for lev in x0.levels]
        per_path = False
    else:
        start = [np.asarray(lev) for lev in x0]
        d, N = start[1].shape[-1], len(start) - 1
        per_path = True
    if d != a.d:
        raise ValueError(f"field has d={a.d} but start point has d={d}")
    indices = np.arange(M) if indices is None else np.asarray(indices)
    n = cfg.n_steps(T) if T > 0 else 0
    times = np.linspace(0.0, T, n + 1)
    bounds = [(lo, min(lo + CHUNK, len(indices))) for lo in range(0, len(indices), CHUNK)]

    def work(bound):
        lo, hi = bound
        s = [lev[lo:hi] for lev in start] if per_path else start
        if n == 0:
            s = [np.broadcast_to(lev, (hi - lo,) + lev.shape[1:]).copy() for lev in s]
            out = [lev[:, None] for lev in s] if keep_path else s
        else:
            out = _run_chunk(a, s, T, n, N, cfg, stage, indices[lo:hi], keep_path)
        return reduce(out) if reduce is not None else out

    if cfg.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    if not parts:
        return times, []
    if reduce is not None:
        return times, np.concatenate(parts) if isinstance(parts[0], np.ndarray) else parts
    return times, [np.concatenate([p[k] for p in parts]) for k in range(N + 1)]


def sample_path(a: SubellipticField, x0: GroupElement, T: float, cfg: SamplerConfig, index: int = 0) -> GroupPath:
    """One Euler path (substream ``index``); T = 0 gives the single point x0."""
    if T < 0:
        raise ValueError("T must be non-negative")
    times, levels = simulate(a, x0, T, cfg, 1, indices=np.array([index]))
    return GroupPath(times, [lev[0] for lev in levels])


def sample_paths(a: SubellipticField, x0: GroupElement, T: float, cfg: SamplerConfig, M: int) -> list[GroupPath]:
    times, levels = simulate(a, x0, T, cfg, M)
    return [GroupPath(times, [lev[m] for lev in levels]) for m in range(M)]


# ---------------------------------------------------------------------------
# estimators


def wilson_interval(successes: int, M: int, confidence: float = 0.95) -> tuple[float, float]:
    if M <= 0:
        return 0.0, 1.0
    ci = binomtest(int(successes), int(M)).proportion_ci(confidence, method="wilson")
    return float(max(ci.low, 0.0)), float(min(ci.high, 1.0))


@dataclass(frozen=True)
class ProbabilityEstimate:
    successes: int
    M: int
    lo95: float
    hi95: float
    param: dict = field(default_factory=dict)

    @property
    def estimate(self) -> float:
        return self.successes / self.M if self.M else 0.0

    @classmethod
    def from_counts(cls, successes: int, M: int, **param) -> "ProbabilityEstimate":
        lo, hi = wilson_interval(successes, M)
        return cls(int(successes), int(M), lo, hi, param)

    def to_dict(self) -> dict:
        return {"param": self.param, "estimate": self.estimate, "lo95": self.lo95, "hi95": self.hi95,
                "successes": self.successes, "M": self.M}


@dataclass(frozen=True)
class MomentEstimate:
    t: float
    M: int
    first: np.ndarray
    first_se: np.ndarray
    second: np.ndarray
    second_se: np.ndarray
    area: np.ndarray
    area_se: np.ndarray

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def _increments_from_start(start: Sequence[np.ndarray], end: Sequence[np.ndarray], N: int) -> list[np.ndarray]:
    return _mul(_inv([np.broadcast_to(lev, end[k].shape) for k, lev in enumerate(start)], N), end, N)


def generator_moments(a: SubellipticField, x0: GroupElement, t: float, M: int, seed: int,
                      cfg: SamplerConfig | None = None) -> MomentEstimate:
    """t^{-1} E[X^k_{0,t}], t^{-1} E[X^k X^l], t^{-1} E[area^{kl}_{0,t}] with standard errors."""
    if M < MIN_MOMENT_SAMPLES:
        raise ValueError(f"need at least {MIN_MOMENT_SAMPLES} samples for moment estimates, got {M}")
    if t <= 0:
        raise ValueError("t must be positive")
    if x0.N < 2:
        raise ValueError("moment estimates need N >= 2 for the area")
    cfg = _with_seed(cfg, seed)
    d, N = x0.d, x0.N
    start = [np.asarray(lev)[None] for lev in x0.levels]
    _, end = simulate(a, x0, t, cfg, M, keep_path=False)
    inc = _increments_from_start(start, end, N)
    x1 = inc[1]
    x2 = inc[2].reshape(M, d, d)
    outer = x1[:, :, None] * x1[:, None, :]
    area = 0.5 * (x2 - np.swapaxes(x2, 1, 2))

    def mean_se(v):
        return v.mean(axis=0) / t, v.std(axis=0, ddof=1) / math.sqrt(M) / t

    f, fse = mean_se(x1)
    s, sse = mean_se(outer)
    ar, arse = mean_se(area)
    return MomentEstimate(t, M, f, fse, s, sse, ar, arse)


def _sup_dist_reducer(start: Sequence[np.ndarray], N: int) -> Callable:
    def reduce(path):
        inc = _increments_from_start([lev[:, None] for lev in start], path, N)
        return np.max(_hom_norm(inc, N), axis=-1)

    return reduce


def sup_distances(a: SubellipticField, x0: GroupElement, eps: float, M: int, cfg: SamplerConfig) -> np.ndarray:
    """sup over the grid on [0, eps] of dist(X_0, X_t), one value per path."""
    start = [np.asarray(lev)[None] for lev in x0.levels]
    _, sups = simulate(a, x0, eps, cfg, M, reduce=_sup_dist_reducer(start, x0.N))
    return sups


def estimate_tail_sup(a: SubellipticField, x0: GroupElement, c, eps: float, M: int, seed: int,
                      cfg: SamplerConfig | None = None):
    """P[sup_{t <= eps} dist(X_0, X_t) > c]; an array of c shares one sample set."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    cs = np.atleast_1d(np.asarray(c, dtype=float))
    if np.any(cs < 0):
        raise ValueError("c must be non-negative")
    cfg = _with_seed(cfg, seed, min_steps=16)
    sups = sup_distances(a, x0, eps, M, cfg)
    out = [ProbabilityEstimate.from_counts(int(np.sum(sups > ci)), M, c=float(ci), eps=float(eps)) for ci in cs]
    return out[0] if np.ndim(c) == 0 else out


def _with_seed(cfg: SamplerConfig | None, seed: int, **defaults) -> SamplerConfig:
    if cfg is None:
        return SamplerConfig(seed=seed, **defaults)
    return SamplerConfig(**{**cfg.to_dict(), "seed": seed, "workers": cfg.workers})


@dataclass(frozen=True)
class BallReturnEstimate(ProbabilityEstimate):
    survivors_at_s: int = 0
    total: int = 0

    def to_dict(self) -> dict:
        out = super().to_dict()
        out.update(survivors_at_s=self.survivors_at_s, total=self.total)
        return out


def estimate_ball_return(a: SubellipticField, x0: GroupElement, center: GroupElement, C2: float, s: float,
                         eps: float, M: int, seed: int, cfg: SamplerConfig | None = None) -> BallReturnEstimate:
    """P[X_{s+eps} in B(center, C2 sqrt(eps)) | X_s in the same ball], by rejection at time s."""
    if C2 <= 0 or s < 0 or eps <= 0 or M <= 0:
        raise ValueError("C2, eps and M must be positive and s non-negative")
    cfg = _with_seed(cfg, seed, min_steps=8)
    N = x0.N
    radius = C2 * math.sqrt(eps)
    cinv = [np.asarray(lev)[None] for lev in _inv([np.asarray(l) for l in center.levels], N)]

    def in_ball(levels):
        rel = _mul([np.broadcast_to(lev, levels[k].shape) for k, lev in enumerate(cinv)], levels, N)
        return _hom_norm(rel, N) <= radius

    _, at_s = simulate(a, x0, s, cfg, M, keep_path=False)
    keep = np.flatnonzero(in_ball(at_s))
    if keep.size < MIN_SURVIVORS:
        raise InsufficientConditioningMass(int(keep.size), M)
    restart = [lev[keep] for lev in at_s]
    _, at_end = simulate(a, restart, eps, cfg, keep.size, stage=1, indices=keep, keep_path=False)
    hits = int(np.sum(in_ball(at_end)))
    lo, hi = wilson_interval(hits, keep.size)
    return BallReturnEstimate(hits, int(keep.size), lo, hi, {"C2": C2, "s": s, "eps": eps}, int(keep.size), M)


def sampler_report(cfg: SamplerConfig, a: SubellipticField, estimates: dict) -> dict:
    """JSON-ready report {config, seed, estimates, standard_errors, wilson_intervals}."""
    est, ses, wil = {}, {}, {}
    for key, val in estimates.items():
        if isinstance(val, MomentEstimate):
            est[key] = {"first": val.first.tolist(), "second": val.second.tolist(), "area": val.area.tolist()}
            ses[key] = {"first": val.first_se.tolist(), "second": val.second_se.tolist(), "area": val.area_se.tolist()}
        else:
            vals = val if isinstance(val, list) else [val]
            est[key] = [v.to_dict() for v in vals]
            ses[key] = [math.sqrt(v.estimate * (1 - v.estimate) / v.M) if v.M else None for v in vals]
            wil[key] = [[v.lo95, v.hi95] for v in vals]
    return {"config": {**cfg.to_dict(), "field": a.describe()}, "seed": cfg.seed, "estimates": est,
            "standard_errors": ses, "wilson_intervals": wil}
