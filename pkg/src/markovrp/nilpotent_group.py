"""Truncated tensor algebra and the step-N free nilpotent group G^N(R^d).

Every level k of a series is stored as a flat row-major array of length d**k,
so the word (i_1, ..., i_k) lives at index i_1*d**(k-1) + ... + i_k.  The
private ``_mul``/``_exp``/``_log``/``_inv`` kernels accept arbitrary leading
batch dimensions and are shared by the path, translation and sampler modules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

DEFAULT_TOL = 1e-10
MAX_LEVEL = 6
_INT64_MAX = 2**63 - 1


class NotGrouplikeError(ValueError):
    """Raised when a tensor series fails the grouplike check."""


class DimensionMismatchError(ValueError):
    pass


# ---------------------------------------------------------------------------
# dimensions


def mobius(n: int) -> int:
    if n < 1:
        raise ValueError("mobius is defined for n >= 1")
    result, m, p = 1, n, 2
    while p * p <= m:
        if m % p == 0:
            m //= p
            if m % p == 0:
                return 0
            result = -result
        p += 1
    if m > 1:
        result = -result
    return result


@dataclass(frozen=True)
class Dimensions:
    d: int
    N: int
    witt: tuple[int, ...]
    dimG: int
    Q: int


def witt_dim(d: int, N: int) -> Dimensions:
    """Graded dimensions of the free step-N nilpotent Lie algebra over R^d.

    ``witt[k-1]`` is the necklace count (1/k) sum_{m | k} mu(m) d^(k/m); ``Q`` is
    the homogeneous dimension sum_k k * witt[k-1].
    """
    if int(d) != d or int(N) != N or d < 1 or N < 1:
        raise ValueError(f"d and N must be positive integers, got d={d}, N={N}")
    d, N = int(d), int(N)
    if d**N > _INT64_MAX:
        raise OverflowError(f"d**N = {d}**{N} exceeds the int64 range")
    witt = []
    for k in range(1, N + 1):
        total = sum(mobius(m) * d ** (k // m) for m in range(1, k + 1) if k % m == 0)
        witt.append(total // k)
    dimG = sum(witt)
    Q = sum(k * w for k, w in enumerate(witt, start=1))
    return Dimensions(d, N, tuple(witt), dimG, Q)


# ---------------------------------------------------------------------------
# Lyndon basis


def lyndon_words(d: int, N: int) -> list[tuple[int, ...]]:
    """Lyndon words over {0..d-1} of length <= N in lexicographic order (Duval)."""
    words = []
    w = [-1]
    while w:
        w[-1] += 1
        words.append(tuple(w))
        m = len(w)
        while len(w) < N:
            w.append(w[len(w) - m])
        while w and w[-1] == d - 1:
            w.pop()
    return words


def _standard_factorization(word: tuple[int, ...], lyndon: set) -> tuple[tuple, tuple]:
    for i in range(1, len(word)):
        if word[i:] in lyndon:
            return word[:i], word[i:]
    raise ValueError(f"{word} has no standard factorization")


def _word_index(word: Sequence[int], d: int) -> int:
    idx = 0
    for letter in word:
        idx = idx * d + letter
    return idx


@lru_cache(maxsize=None)
def _lyndon_tables(d: int, N: int):
    """Bracket expansions of the Lyndon basis: per level (words, B_k, pinv(B_k))."""
    words = lyndon_words(d, N)
    lookup = set(words)
    expansion: dict[tuple, np.ndarray] = {}
    for w in sorted(words, key=len):
        if len(w) == 1:
            vec = np.zeros(d)
            vec[w[0]] = 1.0
        else:
            u, v = _standard_factorization(w, lookup)
            pu, pv = expansion[u], expansion[v]
            vec = np.outer(pu, pv).ravel() - np.outer(pv, pu).ravel()
        expansion[w] = vec
    tables = []
    for k in range(1, N + 1):
        level_words = [w for w in words if len(w) == k]
        if level_words:
            B = np.stack([expansion[w] for w in level_words], axis=1)
        else:
            B = np.zeros((d**k, 0))
        tables.append((tuple(level_words), B, np.linalg.pinv(B)))
    return tuple(tables)


# ---------------------------------------------------------------------------
# batched kernels on level lists


def _tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = a[..., :, None] * b[..., None, :]
    return out.reshape(out.shape[:-2] + (-1,))


def _mul(x: Sequence[np.ndarray], y: Sequence[np.ndarray], N: int) -> list[np.ndarray]:
    out = []
    for k in range(N + 1):
        acc = x[0][..., None] * y[k] if k else x[0] * y[0]
        for i in range(1, k + 1):
            acc = acc + (_tensor(x[i], y[k - i]) if i < k else x[k] * y[0][..., None])
        out.append(acc)
    return out


def _mul_nilpotent(x: Sequence[np.ndarray], y: Sequence[np.ndarray], N: int) -> list[np.ndarray]:
    # both factors have zero scalar part
    zero = np.zeros(np.broadcast_shapes(x[0].shape, y[0].shape))
    out = [zero, np.zeros(zero.shape + (x[1].shape[-1],))]
    for k in range(2, N + 1):
        acc = _tensor(x[1], y[k - 1])
        for i in range(2, k):
            acc = acc + _tensor(x[i], y[k - i])
        out.append(acc)
    return out


def _identity(d: int, N: int, batch: tuple = ()) -> list[np.ndarray]:
    return [np.ones(batch)] + [np.zeros(batch + (d**k,)) for k in range(1, N + 1)]


def _exp(z: Sequence[np.ndarray], N: int) -> list[np.ndarray]:
    """exp of a series with zero scalar part, truncated at level N."""
    d = z[1].shape[-1]
    batch = z[1].shape[:-1]
    result = _identity(d, N, batch)
    term = list(z)
    term[0] = np.zeros(batch)
    for n in range(1, N + 1):
        if n > 1:
            term = [t / n for t in _mul_nilpotent(term, z, N)]
        for k in range(1, N + 1):
            result[k] = result[k] + term[k]
    return result


def _log(g: Sequence[np.ndarray], N: int) -> list[np.ndarray]:
    y = list(g)
    y[0] = np.zeros_like(g[0])
    result = [np.zeros_like(t) for t in y]
    power = y
    for n in range(1, N + 1):
        if n > 1:
            power = _mul_nilpotent(power, y, N)
        sign = 1.0 if n % 2 else -1.0
        for k in range(1, N + 1):
            result[k] = result[k] + (sign / n) * power[k]
    return result


def _inv(g: Sequence[np.ndarray], N: int) -> list[np.ndarray]:
    """Inverse of a series with unit scalar part: sum_n (1 - g)^n."""
    neg = [-t for t in g]
    neg[0] = np.zeros_like(g[0])
    result = _identity(g[1].shape[-1], N, g[1].shape[:-1])
    power = neg
    for n in range(1, N + 1):
        if n > 1:
            power = _mul_nilpotent(power, neg, N)
        for k in range(1, N + 1):
            result[k] = result[k] + power[k]
    return result


def _exp_level_one(v: np.ndarray, N: int) -> list[np.ndarray]:
    """exp of a pure level-1 element: level k is v^{(x)k} / k!."""
    out = [np.ones(v.shape[:-1]), v]
    for k in range(2, N + 1):
        out.append(_tensor(out[-1], v) / k)
    return out


def _dilate(g: Sequence[np.ndarray], lam) -> list[np.ndarray]:
    lam = np.asarray(lam, dtype=float)
    return [g[0]] + [g[k] * (lam[..., None] ** k) for k in range(1, len(g))]


def _level_norms(g: Sequence[np.ndarray]) -> np.ndarray:
    """Frobenius norm of levels 1..N, stacked on a trailing axis."""
    return np.stack([np.sqrt(np.einsum("...i,...i->...", t, t)) for t in g[1:]], axis=-1)


def _box_norm_from_level_norms(norms: np.ndarray, norms_inv: np.ndarray) -> np.ndarray:
    N = norms.shape[-1]
    powers = 1.0 / np.arange(1, N + 1)
    return np.max(np.maximum(norms, norms_inv) ** powers, axis=-1)


def _hom_norm(g: Sequence[np.ndarray], N: int) -> np.ndarray:
    return _box_norm_from_level_norms(_level_norms(g), _level_norms(_inv(g, N)))


def _lie_residual(log_levels: Sequence[np.ndarray], d: int, N: int) -> np.ndarray:
    """Max abs distance of each log level from the free Lie subspace."""
    tables = _lyndon_tables(d, N)
    worst = np.zeros(log_levels[1].shape[:-1])
    for k in range(1, N + 1):
        _, B, P = tables[k - 1]
        coeffs = log_levels[k] @ P.T
        resid = np.abs(coeffs @ B.T - log_levels[k]).max(axis=-1)
        worst = np.maximum(worst, resid)
    return worst


# ---------------------------------------------------------------------------
# value types


def _freeze(levels, d: int, N: int) -> tuple[np.ndarray, ...]:
    if len(levels) != N + 1:
        raise ValueError(f"expected {N + 1} levels, got {len(levels)}")
    frozen = []
    for k, lev in enumerate(levels):
        arr = np.array(lev, dtype=float).reshape(-1) if k else np.array(float(np.asarray(lev).reshape(-1)[0]))
        if k and arr.size != d**k:
            raise ValueError(f"level {k} must have {d**k} entries, got {arr.size}")
        arr.setflags(write=False)
        frozen.append(arr)
    return tuple(frozen)


def _check_dims(d: int, N: int) -> None:
    if d < 1 or N < 1:
        raise ValueError("d and N must be positive")
    if N > MAX_LEVEL:
        raise ValueError(f"truncation level N={N} exceeds supported maximum {MAX_LEVEL}")


@dataclass(frozen=True, eq=False)
class TensorSeries:
    """Element of the truncated tensor algebra T^N(R^d)."""

    d: int
    N: int
    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        _check_dims(self.d, self.N)
        object.__setattr__(self, "levels", _freeze(self.levels, self.d, self.N))

    def level(self, k: int) -> np.ndarray:
        """Level k reshaped as a k-tensor."""
        return self.levels[k].reshape((self.d,) * k)

    def allclose(self, other: "TensorSeries", atol: float = DEFAULT_TOL) -> bool:
        return (self.d, self.N) == (other.d, other.N) and all(
            np.allclose(a, b, rtol=0.0, atol=atol) for a, b in zip(self.levels, other.levels)
        )

    def max_abs_diff(self, other: "TensorSeries") -> float:
        _same_shape(self, other)
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.levels, other.levels))

    def to_dict(self) -> dict:
        return {"d": self.d, "N": self.N, "levels": [np.atleast_1d(lev).tolist() for lev in self.levels]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict):
        return cls(int(data["d"]), int(data["N"]), tuple(data["levels"]))

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))


def _same_shape(a, b) -> None:
    if (a.d, a.N) != (b.d, b.N):
        raise DimensionMismatchError(f"(d, N) mismatch: {(a.d, a.N)} vs {(b.d, b.N)}")


class GroupElement(TensorSeries):
    """Grouplike element of T^N(R^d), i.e. a point of G^N(R^d).

    Construction checks the scalar level only; use :func:`is_grouplike` for the
    full Lie-subspace test.
    """

    def __post_init__(self):
        super().__post_init__()
        if abs(float(self.levels[0]) - 1.0) > DEFAULT_TOL:
            raise NotGrouplikeError(f"level-0 coefficient must be 1, got {float(self.levels[0])}")

    @classmethod
    def identity(cls, d: int, N: int) -> "GroupElement":
        return cls(d, N, tuple(_identity(d, N)))

    @classmethod
    def from_levels(cls, levels: Sequence[np.ndarray]) -> "GroupElement":
        d = np.asarray(levels[1]).shape[-1]
        return cls(d, len(levels) - 1, tuple(levels))

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return chen_mul(self, other)

    def __repr__(self) -> str:
        return f"GroupElement(d={self.d}, N={self.N}, level1={self.levels[1].tolist()})"


@dataclass(frozen=True, eq=False)
class LieElement:
    """Element of the free nilpotent Lie algebra in Lyndon-basis coordinates."""

    d: int
    N: int
    coeffs: tuple[np.ndarray, ...]

    def __post_init__(self):
        _check_dims(self.d, self.N)
        witt = witt_dim(self.d, self.N).witt
        if len(self.coeffs) != self.N:
            raise ValueError(f"expected {self.N} coefficient levels, got {len(self.coeffs)}")
        frozen = []
        for k, c in enumerate(self.coeffs, start=1):
            arr = np.array(c, dtype=float).reshape(-1)
            if arr.size != witt[k - 1]:
                raise ValueError(f"level {k} needs {witt[k - 1]} Lyndon coefficients, got {arr.size}")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "coeffs", tuple(frozen))

    @property
    def basis(self) -> list[tuple[int, ...]]:
        return [w for words, _, _ in _lyndon_tables(self.d, self.N) for w in words]

    def to_tensor(self) -> TensorSeries:
        tables = _lyndon_tables(self.d, self.N)
        levels = [0.0] + [tables[k - 1][1] @ self.coeffs[k - 1] for k in range(1, self.N + 1)]
        return TensorSeries(self.d, self.N, tuple(levels))

    @classmethod
    def zero(cls, d: int, N: int) -> "LieElement":
        return cls(d, N, tuple(np.zeros(w) for w in witt_dim(d, N).witt))

    @classmethod
    def from_level_one(cls, v, N: int) -> "LieElement":
        v = np.asarray(v, dtype=float).reshape(-1)
        z = cls.zero(v.size, N)
        return cls(v.size, N, (v,) + z.coeffs[1:])

    def __add__(self, other: "LieElement") -> "LieElement":
        _same_shape(self, other)
        return LieElement(self.d, self.N, tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __neg__(self) -> "LieElement":
        return LieElement(self.d, self.N, tuple(-c for c in self.coeffs))

    def __mul__(self, scalar: float) -> "LieElement":
        return LieElement(self.d, self.N, tuple(scalar * c for c in self.coeffs))

    __rmul__ = __mul__

    def max_abs_diff(self, other: "LieElement") -> float:
        _same_shape(self, other)
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.coeffs, other.coeffs))

    def to_dict(self) -> dict:
        return {"d": self.d, "N": self.N, "basis": "lyndon", "levels": [c.tolist() for c in self.coeffs]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "LieElement":
        if data.get("basis", "lyndon") != "lyndon":
            raise ValueError(f"unsupported Lie basis {data['basis']!r}")
        return cls(int(data["d"]), int(data["N"]), tuple(data["levels"]))

    @classmethod
    def from_json(cls, text: str) -> "LieElement":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# public operations


def chen_mul(g: GroupElement, h: GroupElement) -> GroupElement:
    _same_shape(g, h)
    return GroupElement(g.d, g.N, tuple(_mul(g.levels, h.levels, g.N)))


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(g.d, g.N, tuple(_inv(g.levels, g.N)))


def exp_lie(L: LieElement) -> GroupElement:
    return GroupElement(L.d, L.N, tuple(_exp(L.to_tensor().levels, L.N)))


def exp_tensor(z: TensorSeries) -> GroupElement:
    """Truncated exponential of a series with zero scalar part."""
    if abs(float(z.levels[0])) > DEFAULT_TOL:
        raise ValueError("exp_tensor needs a series with zero scalar part")
    return GroupElement(z.d, z.N, tuple(_exp(z.levels, z.N)))


def exp_level_one(v, N: int) -> GroupElement:
    v = np.asarray(v, dtype=float).reshape(-1)
    return GroupElement(v.size, N, tuple(_exp_level_one(v, N)))


def log_tensor(g: TensorSeries) -> TensorSeries:
    return TensorSeries(g.d, g.N, tuple(_log(g.levels, g.N)))


def log_group(g: TensorSeries, tol: float = DEFAULT_TOL) -> LieElement:
    """Logarithm in Lyndon coordinates; raises if ``g`` is not grouplike."""
    if abs(float(g.levels[0]) - 1.0) > tol:
        raise NotGrouplikeError(f"level-0 coefficient is {float(g.levels[0])}, expected 1")
    logs = _log(g.levels, g.N)
    resid = float(_lie_residual(logs, g.d, g.N))
    if resid > tol:
        raise NotGrouplikeError(f"log has a component of size {resid:.3e} outside the free Lie algebra")
    tables = _lyndon_tables(g.d, g.N)
    coeffs = tuple(tables[k - 1][2] @ logs[k] for k in range(1, g.N + 1))
    return LieElement(g.d, g.N, coeffs)


def is_grouplike(g: TensorSeries, tol: float = DEFAULT_TOL) -> bool:
    if abs(float(g.levels[0]) - 1.0) > tol:
        return False
    return float(_lie_residual(_log(g.levels, g.N), g.d, g.N)) <= tol


def dilate(lam: float, g: GroupElement) -> GroupElement:
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    return GroupElement(g.d, g.N, tuple(_dilate(g.levels, lam)))


def hom_norm(g: GroupElement) -> float:
    """Symmetrised box norm max_k max(|g_k|, |g^-1_k|)^(1/k).

    Equivalent to the Carnot-Caratheodory norm up to constants, exactly
    1-homogeneous under :func:`dilate` and invariant under inversion.
    """
    return float(_hom_norm(g.levels, g.N))


def dist(g: GroupElement, h: GroupElement) -> float:
    _same_shape(g, h)
    return float(_hom_norm(_mul(_inv(g.levels, g.N), h.levels, g.N), g.N))


def random_group_element(rng: np.random.Generator, d: int, N: int, scale: float = 1.0) -> GroupElement:
    """exp of a Lie element with standard normal Lyndon coefficients, level k scaled by scale**k."""
    witt = witt_dim(d, N).witt
    coeffs = tuple(rng.standard_normal(w) * scale**k for k, w in enumerate(witt, start=1))
    return exp_lie(LieElement(d, N, coeffs))
