"""Randomized property checks for the deterministic restricted-Hoelder lemmas.

Each case draws a random path in G^N(R^d), detects the tightest constants for
which a lemma's premise holds, and checks the conclusion.  Three statements
are exercised:

* uniform bound: if sup_{t in [tau_n, tau_n + eps]} dist(x_{tau_n}, x_t) < c
  along the Hoelder stopping times, the (= eps) norm is < bound_unifHol;
* dyadic bound: (= 2^-n eps) norms <= gamma for all n > n0 imply the
  (< 2^-n0 eps) norm is <= gamma / (1 - 2^-alpha);
* global bound: eps-grid points in B(x, r) plus (<= eps) norms <= gamma on
  every eps-block give a full Hoelder norm <= 2 gamma + 2 r eps^-alpha.

Paths are coarse random increments refined along geodesics, so grid suprema
approximate those of a continuous path.  Adversarial cases put large jumps on
dyadic coarse intervals.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .nilpotent_group import _exp, _log, random_group_element
from .path_tools import (
    GroupPath,
    Relation,
    _ratio_matrix,
    _stopping_indices,
    _time_lags,
    bound_dyadic,
    bound_global,
    bound_unifHol,
    cumulative_product,
    pairwise_distances,
)

REL_SLACK = 1e-9
SHAPES = ((1, 2), (2, 2), (2, 3), (3, 2))


@dataclass
class LemmaCheck:
    premise_constant: float
    observed: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.observed <= self.bound * (1 + REL_SLACK) + 1e-300


@dataclass
class LemmaTally:
    cases: int = 0
    violations: int = 0
    worst_ratio: float = 0.0
    examples: list = field(default_factory=list)

    def add(self, check: LemmaCheck, info: dict) -> None:
        self.cases += 1
        if check.bound > 0:
            self.worst_ratio = max(self.worst_ratio, check.observed / check.bound)
        if not check.holds:
            self.violations += 1
            if len(self.examples) < 5:
                self.examples.append({**info, "observed": check.observed, "bound": check.bound})

    def to_dict(self) -> dict:
        return {"cases": self.cases, "violations": self.violations, "worst_ratio": self.worst_ratio,
                "examples": self.examples}


# ---------------------------------------------------------------------------
# random paths


def random_path(rng: np.random.Generator, d: int, N: int, coarse: int, refine: int, T: float = 1.0,
                adversarial: bool = False) -> GroupPath:
    """Geodesic refinement of a path with ``coarse`` random increments."""
    scales = np.exp(rng.uniform(np.log(1e-3), np.log(2.0), size=coarse))
    if adversarial:
        # big jumps on intervals starting at dyadic times
        k = int(rng.integers(0, int(np.log2(coarse)) + 1))
        starts = np.arange(0, coarse, max(coarse >> k, 1))
        hit = rng.choice(starts, size=min(len(starts), int(rng.integers(1, 4))), replace=False)
        scales[hit] *= rng.uniform(10, 100, size=hit.size)
        if rng.random() < 0.5:
            scales[rng.random(coarse) < 0.5] = 0.0
    logs = []
    for s in scales:
        g = random_group_element(rng, d, N, s) if s > 0 else None
        logs.append(_log(list(g.levels), N) if g is not None else [np.zeros(())] + [np.zeros(d**j) for j in range(1, N + 1)])
    fine = [np.zeros(coarse * refine)]
    fine += [np.repeat(np.stack([L[j] for L in logs]), refine, axis=0) / refine for j in range(1, N + 1)]
    incs = _exp(fine, N)
    return GroupPath(np.linspace(0.0, T, coarse * refine + 1), cumulative_product(incs, N))


# ---------------------------------------------------------------------------
# checks on a precomputed distance matrix


def _restricted(ratio: np.ndarray, lags: np.ndarray, rel: Relation, eps: float,
                lo: int = 0, hi: int | None = None) -> float:
    hi = ratio.shape[0] if hi is None else hi
    sub = ratio[lo:hi, lo:hi]
    mask = rel.mask(lags[lo:hi, lo:hi], eps)
    return float(np.max(np.where(mask, sub, 0.0), initial=0.0))


def check_unif_hol(dists: np.ndarray, times: np.ndarray, alpha: float, eps: float, gamma: float) -> LemmaCheck:
    lags = _time_lags(times)
    ratio = _ratio_matrix(dists, times, alpha)
    ge = np.where(Relation.GE.mask(lags, eps), ratio, 0.0)
    taus = _stopping_indices(ge, gamma)
    c = 0.0
    for i in taus:
        window = np.flatnonzero((times >= times[i]) & (times <= times[i] + eps * (1 + REL_SLACK)))
        c = max(c, float(np.max(dists[i, window])))
    c = c * (1 + 1e-6) + 1e-12  # strict premise
    observed = _restricted(ratio, lags, Relation.EQ, eps)
    return LemmaCheck(c, observed, bound_unifHol(c, gamma, eps, alpha))


def check_dyadic(dists: np.ndarray, times: np.ndarray, alpha: float, eps: float, n0: int) -> LemmaCheck:
    lags = _time_lags(times)
    ratio = _ratio_matrix(dists, times, alpha)
    mesh = times[1] - times[0]
    gamma = 0.0
    n = n0 + 1
    while eps * 2.0**-n >= mesh * (1 - REL_SLACK):
        gamma = max(gamma, _restricted(ratio, lags, Relation.EQ, eps * 2.0**-n))
        n += 1
    observed = _restricted(ratio, lags, Relation.LT, eps * 2.0**-n0)
    return LemmaCheck(gamma, observed, bound_dyadic(gamma, alpha))


def check_global(dists: np.ndarray, times: np.ndarray, alpha: float, block: int, center: int) -> LemmaCheck:
    """``block`` grid steps per eps; the ball is centred at grid point ``center``."""
    lags = _time_lags(times)
    ratio = _ratio_matrix(dists, times, alpha)
    eps = times[block] - times[0]
    anchors = np.arange(0, len(times), block)
    r = float(np.max(dists[center, anchors])) * (1 + 1e-6) + 1e-12
    gamma = max(_restricted(ratio, lags, Relation.LE, eps, k, k + block + 1) for k in anchors)
    observed = float(np.max(ratio))
    return LemmaCheck(r, observed, bound_global(gamma, r, eps, alpha))


# ---------------------------------------------------------------------------
# driver


@dataclass
class LemmaSuiteReport:
    seed: int
    n_cases: int
    tallies: dict
    seconds: float = 0.0

    @property
    def violations(self) -> int:
        return sum(t.violations for t in self.tallies.values())

    def to_dict(self) -> dict:
        return {"seed": self.seed, "n_cases": self.n_cases, "violations": self.violations,
                "lemmas": {k: v.to_dict() for k, v in self.tallies.items()}}


def _case(rng: np.random.Generator, adversarial: bool):
    d, N = SHAPES[int(rng.integers(len(SHAPES)))]
    coarse = int(rng.choice([8, 16, 32]))
    refine = int(rng.choice([4, 8]))
    path = random_path(rng, d, N, coarse, refine, 1.0, adversarial)
    return path, pairwise_distances(path.levels, path.N), coarse * refine


def run_lemma_suite(n_cases: int = 1000, seed: int = 0, adversarial_fraction: float = 0.3) -> LemmaSuiteReport:
    """Run every lemma check on ``n_cases`` fresh random paths each."""
    rng = np.random.default_rng(seed)
    tallies = {"uniform": LemmaTally(), "dyadic": LemmaTally(), "global": LemmaTally()}
    start = time.perf_counter()
    for case in range(n_cases):
        adv = rng.random() < adversarial_fraction
        path, dists, steps = _case(rng, adv)
        times = path.times
        mesh = times[1] - times[0]
        alpha = float(rng.uniform(0.05, 1.0))
        info = {"case": case, "adversarial": adv, "d": path.d, "N": path.N, "alpha": alpha}

        # uniform bound: eps on the grid, gamma around typical ratios
        eps = mesh * int(rng.integers(1, steps // 2 + 1))
        scale = float(np.max(_ratio_matrix(dists, times, alpha)))
        gamma = scale * float(np.exp(rng.uniform(np.log(0.02), np.log(1.5))))
        tallies["uniform"].add(check_unif_hol(dists, times, alpha, eps, gamma), {**info, "eps": eps, "gamma": gamma})

        # dyadic bound: eps = mesh * 2^L
        L = int(rng.integers(0, int(np.log2(steps)) + 1))
        n0 = int(rng.integers(-2, L))
        eps_d = mesh * 2.0**L
        tallies["dyadic"].add(check_dyadic(dists, times, alpha, eps_d, n0), {**info, "eps": eps_d, "n0": n0})

        # global bound: eps a divisor of T on the grid
        divisors = [q for q in range(1, steps + 1) if steps % q == 0]
        block = int(rng.choice(divisors))
        center = int(rng.integers(0, len(times)))
        tallies["global"].add(check_global(dists, times, alpha, block, center), {**info, "block": block})
    return LemmaSuiteReport(seed, n_cases, tallies, time.perf_counter() - start)
