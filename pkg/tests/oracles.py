"""Independent reference implementations used as test oracles.

Tensors are dicts from words (tuples of letters) to coefficients; nothing here
shares code with the package's flat-array kernels.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def words(d, k):
    return list(itertools.product(range(d), repeat=k))


def to_dict(levels, d, N):
    out = {(): float(np.asarray(levels[0]))}
    for k in range(1, N + 1):
        flat = np.asarray(levels[k]).reshape(-1)
        for w in words(d, k):
            idx = 0
            for letter in w:
                idx = idx * d + letter
            out[w] = float(flat[idx])
    return out


def to_levels(t, d, N):
    levels = [np.array(t.get((), 0.0))]
    for k in range(1, N + 1):
        levels.append(np.array([t.get(w, 0.0) for w in words(d, k)]))
    return levels


def mul(a, b, N):
    out = {}
    for u, x in a.items():
        for v, y in b.items():
            if len(u) + len(v) <= N:
                out[u + v] = out.get(u + v, 0.0) + x * y
    return out


def exp(z, N):
    z = {w: c for w, c in z.items() if w}
    result = {(): 1.0}
    term = {(): 1.0}
    for n in range(1, N + 1):
        term = {w: c / n for w, c in mul(term, z, N).items()}
        for w, c in term.items():
            result[w] = result.get(w, 0.0) + c
    return result


def log(g, N):
    y = {w: c for w, c in g.items() if w}
    result = {}
    power = {(): 1.0}
    for n in range(1, N + 1):
        power = mul(power, y, N)
        for w, c in power.items():
            result[w] = result.get(w, 0.0) + (-1) ** (n + 1) * c / n
    return result


def signature_polyline(points, N):
    """Signature of a polyline by Chen products of segment exponentials."""
    points = np.asarray(points, dtype=float)
    sig = {(): 1.0}
    for p, q in zip(points[:-1], points[1:]):
        seg = {(i,): float(q[i] - p[i]) for i in range(points.shape[1])}
        sig = mul(sig, exp(seg, N), N)
    return sig


def is_lyndon(w):
    return all(w < w[i:] + w[:i] for i in range(1, len(w)))


def lyndon_count(d, k):
    return sum(1 for w in words(d, k) if is_lyndon(w))


def hom_norm(t, d, N):
    """Symmetrised box norm from the dict representation."""
    inv = exp({w: -c for w, c in log(t, N).items()}, N)
    best = 0.0
    for k in range(1, N + 1):
        a = math.sqrt(sum(t.get(w, 0.0) ** 2 for w in words(d, k)))
        b = math.sqrt(sum(inv.get(w, 0.0) ** 2 for w in words(d, k)))
        best = max(best, max(a, b) ** (1.0 / k))
    return best


def pvar_scalar(values, p):
    """Brute force over all partitions."""
    n = len(values)
    best = 0.0
    for r in range(0, n - 1):
        for inner in itertools.combinations(range(1, n - 1), r):
            pts = (0,) + inner + (n - 1,)
            best = max(best, sum(abs(values[b] - values[a]) ** p for a, b in zip(pts, pts[1:])))
    return best ** (1.0 / p)
