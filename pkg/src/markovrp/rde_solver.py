"""Step-N Euler scheme for dY = V(Y) dX driven by a path in G^N(R^d).

One step maps y to

    y + sum_{k=1..N} sum_{|I| = k} (V_{i_1} ... V_{i_k} Id)(y) g^{i_1 ... i_k}

where the differential operators are composed exactly on polynomials and the
coefficients g^I are read from the flat level arrays of the increment g.
"""

from __future__ import annotations

import csv
import io
import itertools
from pathlib import Path

import numpy as np
import sympy

from .nilpotent_group import DimensionMismatchError, GroupElement
from .path_tools import GroupPath
from .vector_fields import CompiledPolynomials, VectorFieldSystem, coordinates


class RDEOverflowError(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"non-finite state after step {step}")
        self.step = step


class EulerTable:
    """Compiled operator compositions V_{i_1}...V_{i_k} Id for all words |I| <= N."""

    def __init__(self, V: VectorFieldSystem, N: int):
        if N < 1:
            raise ValueError("N must be at least 1")
        self.V, self.N, self.d, self.e = V, N, V.d, V.e
        gens = coordinates(V.e)
        identity = tuple(sympy.Poly(g, *gens, domain="QQ") for g in gens)
        cache: dict[tuple, tuple] = {(): identity}

        def compose(word: tuple) -> tuple:
            if word not in cache:
                inner = compose(word[1:])
                field = V.fields[word[0]]
                cache[word] = tuple(field.apply(p) for p in inner)
            return cache[word]

        polys = []
        self.words: list[tuple] = []
        for k in range(1, N + 1):
            for word in itertools.product(range(self.d), repeat=k):
                self.words.append(word)
                polys.extend(compose(word))
        self.compositions = {w: cache[w] for w in self.words}
        self._compiled = CompiledPolynomials(polys, V.e)

    def increment(self, y: np.ndarray, g_flat: np.ndarray) -> np.ndarray:
        """Euler increment for states y (..., e) and stacked levels 1..N of g (..., W)."""
        vals = self._compiled(y).reshape(y.shape[:-1] + (len(self.words), self.e))
        return np.einsum("...we,...w->...e", vals, g_flat)


_TABLES: dict[tuple[str, int], EulerTable] = {}


def euler_table(V: VectorFieldSystem, N: int) -> EulerTable:
    key = (V.to_json(), N)
    if key not in _TABLES:
        _TABLES[key] = EulerTable(V, N)
    return _TABLES[key]


def _flat_levels(levels, N: int) -> np.ndarray:
    return np.concatenate([levels[k] for k in range(1, N + 1)], axis=-1)


def _check(V: VectorFieldSystem, d: int, y) -> np.ndarray:
    if d != V.d:
        raise DimensionMismatchError(f"driver has d={d} but the system has {V.d} fields")
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != V.e:
        raise DimensionMismatchError(f"state has dimension {y.shape[-1]}, system lives on R^{V.e}")
    return y


def step_euler(V: VectorFieldSystem, y, g: GroupElement) -> np.ndarray:
    y = _check(V, g.d, y)
    table = euler_table(V, g.N)
    return y + table.increment(y, _flat_levels(g.levels, g.N))


def solve_increments(V: VectorFieldSystem, y0, increments, N: int) -> np.ndarray:
    """Iterate Euler steps over increments with levels (..., n, d**k); returns (..., n+1, e)."""
    d = increments[1].shape[-1]
    y = _check(V, d, y0)
    table = euler_table(V, N)
    flat = _flat_levels(increments, N)
    n = flat.shape[-2]
    batch = np.broadcast_shapes(y.shape[:-1], flat.shape[:-2])
    out = np.empty(batch + (n + 1, V.e))
    y = np.broadcast_to(y, batch + (V.e,)).copy()
    out[..., 0, :] = y
    for i in range(n):
        y = y + table.increment(y, flat[..., i, :])
        if not np.all(np.isfinite(y)):
            raise RDEOverflowError(i + 1)
        out[..., i + 1, :] = y
    return out


def solve(V: VectorFieldSystem, y0, X: GroupPath) -> np.ndarray:
    """States on X's grid, shape (len(X), e)."""
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if len(X) == 1:
        return _check(V, X.d, y0)[None, :].copy()
    return solve_increments(V, y0, X.increments(), X.N)


def solution_to_csv(times, states, path=None) -> str:
    states = np.asarray(states)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"y{m + 1}" for m in range(states.shape[1])])
    for t, row in zip(times, states):
        writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
