"""Polynomial vector fields on R^e with exact rational coefficients.

Fields are stored as sympy ``Poly`` objects over QQ so that derivatives and
brackets are exact; float coefficients are converted to the exact binary
rational they represent.  Numerical evaluation goes through a compiled
monomial/coefficient matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import sympy


class VectorFieldFormatError(ValueError):
    pass


def coordinates(e: int) -> tuple[sympy.Symbol, ...]:
    return sympy.symbols(f"y1:{e + 1}") if e > 1 else (sympy.Symbol("y1"),)


def _rational(c) -> sympy.Rational:
    if isinstance(c, str):
        return sympy.Rational(Fraction(c))
    if isinstance(c, float):
        if not np.isfinite(c):
            raise VectorFieldFormatError(f"non-finite coefficient {c}")
        return sympy.Rational(Fraction(c))
    return sympy.Rational(c)


def _coeff_to_json(c: sympy.Rational):
    c = sympy.Rational(c)
    if c.q == 1:
        return int(c.p)
    if float(c) == Fraction(int(c.p), int(c.q)):
        return float(c)
    return f"{c.p}/{c.q}"


def polynomial(terms, e: int) -> sympy.Poly:
    """Poly from an iterable of (coeff, exponents) pairs."""
    gens = coordinates(e)
    data = {}
    for coeff, exps in terms:
        exps = tuple(int(k) for k in exps)
        if len(exps) != e or min(exps, default=0) < 0:
            raise VectorFieldFormatError(f"exponent vector {exps} does not match dimension {e}")
        data[exps] = data.get(exps, 0) + _rational(coeff)
    if not data:
        data[(0,) * e] = sympy.Integer(0)
    return sympy.Poly.from_dict(data, *gens, domain="QQ")


def parse_polynomial(expr: str | int | float, e: int) -> sympy.Poly:
    """Poly from an expression in y1..ye (x, y, z are accepted for e <= 3)."""
    gens = coordinates(e)
    local = {str(g): g for g in gens}
    for alias, g in zip("xyz", gens):
        local.setdefault(alias, g)
    expr = sympy.sympify(expr, locals=local, rational=True)
    return sympy.Poly(expr, *gens, domain="QQ")


@dataclass(frozen=True, eq=False)
class PolyVectorField:
    """V = sum_m V^m(y) d/dy_m with polynomial components."""

    e: int
    components: tuple[sympy.Poly, ...]

    def __post_init__(self):
        if len(self.components) != self.e:
            raise VectorFieldFormatError(f"{len(self.components)} components for dimension {self.e}")
        gens = coordinates(self.e)
        comps = tuple(
            p if isinstance(p, sympy.Poly) and p.gens == gens else sympy.Poly(p, *gens, domain="QQ")
            for p in self.components
        )
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_exprs(cls, exprs: Sequence, e: int | None = None) -> "PolyVectorField":
        e = len(exprs) if e is None else e
        return cls(e, tuple(parse_polynomial(x, e) for x in exprs))

    @classmethod
    def zero(cls, e: int) -> "PolyVectorField":
        return cls.from_exprs([0] * e)

    def apply(self, f: sympy.Poly) -> sympy.Poly:
        """Directional derivative (V f)(y) = sum_m V^m(y) df/dy_m."""
        gens = coordinates(self.e)
        out = sympy.Poly(0, *gens, domain="QQ")
        for m, comp in enumerate(self.components):
            if not comp.is_zero:
                out = out + comp * f.diff(gens[m])
        return out

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        _check_e(self, other)
        return PolyVectorField(self.e, tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "PolyVectorField") -> "PolyVectorField":
        _check_e(self, other)
        return PolyVectorField(self.e, tuple(a - b for a, b in zip(self.components, other.components)))

    def __neg__(self) -> "PolyVectorField":
        return PolyVectorField(self.e, tuple(-a for a in self.components))

    def scale(self, c) -> "PolyVectorField":
        c = _rational(c)
        return PolyVectorField(self.e, tuple(a * c for a in self.components))

    @property
    def is_zero(self) -> bool:
        return all(p.is_zero for p in self.components)

    @property
    def degree(self) -> int:
        return max((p.total_degree() for p in self.components if not p.is_zero), default=0)

    def equals(self, other: "PolyVectorField") -> bool:
        return self.e == other.e and (self - other).is_zero

    @cached_property
    def _compiled(self) -> "CompiledPolynomials":
        return CompiledPolynomials(self.components, self.e)

    def __call__(self, y) -> np.ndarray:
        """Evaluate at points y of shape (..., e)."""
        return self._compiled(y)

    def to_json_obj(self) -> list:
        return [_poly_to_json(p) for p in self.components]

    def __repr__(self) -> str:
        gens = coordinates(self.e)
        terms = [f"({p.as_expr()})*d/d{g}" for p, g in zip(self.components, gens) if not p.is_zero]
        return "PolyVectorField(" + (" + ".join(terms) or "0") + ")"


def _check_e(a, b) -> None:
    if a.e != b.e:
        raise ValueError(f"dimension mismatch: {a.e} vs {b.e}")


def _poly_to_json(p: sympy.Poly) -> list:
    return [{"coeff": _coeff_to_json(c), "exponents": list(m)} for m, c in sorted(p.terms()) if c != 0]


class CompiledPolynomials:
    """A list of polynomials evaluated together: monomials(y) @ coefficient matrix."""

    def __init__(self, polys: Sequence[sympy.Poly], e: int):
        monos = sorted({m for p in polys for m, c in p.terms() if c != 0})
        if not monos:
            monos = [(0,) * e]
        index = {m: i for i, m in enumerate(monos)}
        C = np.zeros((len(monos), len(polys)))
        for j, p in enumerate(polys):
            for m, c in p.terms():
                if c != 0:
                    C[index[m], j] = float(c)
        self.exponents = np.array(monos, dtype=int).reshape(len(monos), e)
        self.coeffs = C
        self.e = e
        self._max_deg = int(self.exponents.max(initial=0))

    def monomials(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self._max_deg == 0:
            return np.ones(y.shape[:-1] + (self.exponents.shape[0],))
        powers = [np.ones(y.shape)]
        for _ in range(self._max_deg):
            powers.append(powers[-1] * y)
        table = np.stack(powers, axis=-1)  # (..., e, deg+1)
        out = np.ones(y.shape[:-1] + (self.exponents.shape[0],))
        for m in range(self.e):
            out = out * table[..., m, :][..., self.exponents[:, m]]
        return out

    def __call__(self, y) -> np.ndarray:
        return self.monomials(y) @ self.coeffs


def lie_bracket(V: PolyVectorField, W: PolyVectorField) -> PolyVectorField:
    """[V, W] = (DW) V - (DV) W, componentwise W^m' = V(W^m) - W(V^m)."""
    _check_e(V, W)
    return PolyVectorField(V.e, tuple(V.apply(wm) - W.apply(vm) for vm, wm in zip(V.components, W.components)))


@dataclass(frozen=True, eq=False)
class VectorFieldSystem:
    """d polynomial vector fields V_1..V_d on R^e."""

    e: int
    fields: tuple[PolyVectorField, ...]

    def __post_init__(self):
        if not self.fields:
            raise VectorFieldFormatError("need at least one vector field")
        for f in self.fields:
            if f.e != self.e:
                raise VectorFieldFormatError(f"field of dimension {f.e} in a system on R^{self.e}")
        object.__setattr__(self, "fields", tuple(self.fields))

    @property
    def d(self) -> int:
        return len(self.fields)

    @property
    def max_degree(self) -> int:
        return max(f.degree for f in self.fields)

    @classmethod
    def from_exprs(cls, rows: Sequence[Sequence]) -> "VectorFieldSystem":
        e = len(rows[0])
        return cls(e, tuple(PolyVectorField.from_exprs(r, e) for r in rows))

    def to_json_obj(self) -> list:
        return [f.to_json_obj() for f in self.fields]

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_json_obj())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json_obj(cls, data) -> "VectorFieldSystem":
        if isinstance(data, dict):
            data = data.get("fields")
        if not isinstance(data, list) or not data:
            raise VectorFieldFormatError("expected a non-empty list of fields")
        e = None
        fields = []
        for i, f in enumerate(data):
            if not isinstance(f, list):
                raise VectorFieldFormatError(f"field {i} must be a list of component polynomials")
            e = len(f) if e is None else e
            if len(f) != e:
                raise VectorFieldFormatError(f"field {i} has {len(f)} components, expected {e}")
            comps = []
            for j, poly in enumerate(f):
                try:
                    comps.append(polynomial(((m["coeff"], m["exponents"]) for m in poly), e))
                except (KeyError, TypeError) as exc:
                    raise VectorFieldFormatError(f"field {i}, component {j}: malformed monomial ({exc})") from exc
            fields.append(PolyVectorField(e, tuple(comps)))
        return cls(e, tuple(fields))

    @classmethod
    def from_json(cls, source) -> "VectorFieldSystem":
        text = source if isinstance(source, str) and source.lstrip()[:1] in "[{" else Path(source).read_text()
        return cls.from_json_obj(json.loads(text))


def heisenberg() -> VectorFieldSystem:
    """V_1 = d/dx, V_2 = d/dy + x d/dz on R^3."""
    return VectorFieldSystem.from_exprs([[1, 0, 0], [0, 1, "x"]])


def grushin() -> VectorFieldSystem:
    """V_1 = d/dx, V_2 = x d/dy on R^2."""
    return VectorFieldSystem.from_exprs([[1, 0], [0, "x"]])


def parallel() -> VectorFieldSystem:
    """V_1 = V_2 = d/dx on R^2; the orbit of any point is a horizontal line."""
    return VectorFieldSystem.from_exprs([[1, 0], [1, 0]])


def linear_system(matrices: Sequence[np.ndarray]) -> VectorFieldSystem:
    """V_i(y) = A_i y."""
    mats = [np.asarray(A) for A in matrices]
    e = mats[0].shape[0]
    gens = coordinates(e)
    fields = []
    for A in mats:
        comps = [sum(_rational(A[m, j].item()) * gens[j] for j in range(e)) for m in range(e)]
        fields.append(PolyVectorField.from_exprs([str(c) for c in comps], e))
    return VectorFieldSystem(e, tuple(fields))


BUILTIN_SYSTEMS = {"heisenberg": heisenberg, "grushin": grushin, "parallel": parallel}
