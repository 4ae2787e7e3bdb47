import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from markovrp.nilpotent_group import GroupElement, exp_level_one, hom_norm, random_group_element
from markovrp.path_tools import (
    GroupPath,
    LinearPath,
    PathFormatError,
    Relation,
    bound_dyadic,
    bound_global,
    bound_unifHol,
    concatenate,
    dist_alpha_holder,
    holder_norm,
    holder_stopping_times,
    lift_signature,
    pairwise_distances,
    pvar_brute_force,
    pvar_norm,
    restricted_holder,
    time_grid,
    uniform_steps,
)


def _random_polyline(seed, d, n, T=1.0):
    rng = np.random.default_rng(seed)
    pts = np.vstack([np.zeros(d), np.cumsum(rng.normal(size=(n, d)), axis=0)])
    return LinearPath(np.linspace(0, T, n + 1), pts)


def _line_path(v, T=1.0, n=10, N=2):
    return lift_signature(LinearPath.linear(v, T, n), N)


def test_lift_of_l_path_has_area_one_half():
    h = LinearPath([0.0, 1.0, 2.0], [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    x = lift_signature(h, 2)
    lev2 = x[-1].level(2)
    assert lev2[0, 1] == pytest.approx(1.0)
    assert lev2[1, 0] == pytest.approx(0.0)
    assert 0.5 * (lev2[0, 1] - lev2[1, 0]) == pytest.approx(0.5)


@pytest.mark.parametrize("d,N", [(2, 3), (3, 2), (2, 4)])
def test_lift_matches_word_oracle(d, N):
    h = _random_polyline(4, d, 6)
    x = lift_signature(h, N)
    ref = oracles.signature_polyline(h.values, N)
    got = oracles.to_dict(x[-1].levels, d, N)
    assert max(abs(got[w] - ref.get(w, 0.0)) for w in got) < 1e-11


def test_chen_identity_under_concatenation():
    h1, h2 = _random_polyline(1, 2, 4), _random_polyline(2, 2, 5)
    x1, x2 = lift_signature(h1, 3), lift_signature(h2, 3)
    joined = concatenate(x1, x2)
    assert joined[-1].max_abs_diff(x1[-1] * x2[-1]) < 1e-12
    assert joined.T == pytest.approx(2.0)


def test_increments_recover_path():
    x = lift_signature(_random_polyline(3, 2, 5), 3)
    incs = x.increments()
    g = GroupElement.identity(2, 3)
    for i in range(len(x) - 1):
        g = g * GroupElement(2, 3, tuple(lev[i] for lev in incs))
    assert g.max_abs_diff(x[-1]) < 1e-12


def test_refine_keeps_grid_values_and_is_geodesic():
    x = lift_signature(LinearPath.linear([1.0, 2.0], 1.0, 2), 3)
    r = x.refine([0.25, 0.75])
    for t in (0.0, 0.5, 1.0):
        assert r[int(np.searchsorted(r.times, t))].max_abs_diff(x[int(np.searchsorted(x.times, t))]) < 1e-14
    # straight line: the geodesic midpoint is the lift at that time
    assert r.at(0.25).max_abs_diff(exp_level_one([0.25, 0.5], 3)) < 1e-14


def test_restrict_inserts_endpoints():
    x = _line_path([1.0, 0.0], n=4)
    sub = x.restrict(0.1, 0.6)
    assert sub.times[0] == pytest.approx(0.1) and sub.times[-1] == pytest.approx(0.6)


def test_json_and_csv_round_trip(tmp_path):
    x = lift_signature(_random_polyline(5, 2, 3), 2)
    assert GroupPath.from_json(x.to_json()).allclose(x, atol=0)
    x.to_json(tmp_path / "x.json")
    assert GroupPath.from_json(tmp_path / "x.json").allclose(x, atol=0)
    h = _random_polyline(6, 3, 4)
    back = LinearPath.from_csv(h.to_csv())
    assert np.array_equal(back.values, h.values)


def test_format_errors():
    with pytest.raises(PathFormatError, match="strictly increasing"):
        LinearPath([0.0, 1.0, 1.0], np.zeros((3, 2)))
    with pytest.raises(PathFormatError, match="header"):
        LinearPath.from_csv("x,y\n0,1\n")
    with pytest.raises(PathFormatError):
        GroupPath([0.0, 1.0], [np.array([1.0, 2.0]), np.zeros((2, 2))])


# --- Hoelder quantities -----------------------------------------------------


def test_holder_norm_of_line():
    # dist of a line segment is |v| dt, so the ratio is |v| dt^(1 - alpha), max at the full span
    x = _line_path([3.0, 4.0], T=2.0, n=8)
    assert holder_norm(x, 0.3) == pytest.approx(5.0 * 2.0**0.7, rel=1e-12)


def test_restricted_holder_relations_on_line():
    x = _line_path([1.0, 0.0], T=1.0, n=8)
    alpha = 0.5
    assert restricted_holder(x, alpha, "<", 0.25) == pytest.approx(0.125**0.5)
    assert restricted_holder(x, alpha, "<=", 0.25) == pytest.approx(0.25**0.5)
    assert restricted_holder(x, alpha, "=", 0.25) == pytest.approx(0.25**0.5)
    assert restricted_holder(x, alpha, ">=", 0.25) == pytest.approx(1.0)
    assert restricted_holder(x, alpha, ">", 1.0) == 0.0
    assert restricted_holder(x, alpha, "≥", 0.25, s=0.5, t=1.0) == pytest.approx(0.5**0.5)


def test_relation_parse():
    assert Relation.parse("≤") is Relation.LE
    assert Relation.parse("==") is Relation.EQ
    with pytest.raises(ValueError):
        Relation.parse("<>")


def test_stopping_times_on_line():
    # ratio over [a, b] with lag >= eps is (b - a)^(1/2) for speed 1, alpha = 1/2
    x = _line_path([1.0, 0.0], T=1.0, n=16)
    taus = holder_stopping_times(x, 0.5, eps=0.0625, gamma=0.5)
    assert taus == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert holder_stopping_times(x, 0.5, eps=0.0625, gamma=10.0) == [0.0]


def test_closed_form_bounds():
    assert bound_dyadic(1.0, 0.5) == pytest.approx(3.414214, abs=1e-6)
    assert bound_unifHol(1.0, 1.0, 1.0, 0.5) == pytest.approx(5.0)
    assert bound_unifHol(10.0, 0.1, 1.0, 0.5) == pytest.approx(30.0)
    assert bound_global(1.0, 1.0, 0.25, 0.5) == pytest.approx(6.0)


def test_dist_alpha_holder_between_lines():
    v, w = np.array([1.0, 0.0]), np.array([0.0, 2.0])
    x, y = _line_path(v, T=2.0, n=4), _line_path(w, T=2.0, n=4)
    # x_{s,t}^{-1} y_{s,t} = exp(-dt v) exp(dt w), a dilation of exp(-v) exp(w) by dt
    got = dist_alpha_holder(x, y, 0.3)
    increments_norm = hom_norm(exp_level_one(-v, 2) * exp_level_one(w, 2))
    assert got == pytest.approx(increments_norm * 2.0**0.7, rel=1e-12)
    assert dist_alpha_holder(x, x, 0.3) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 0.49))
def test_dist_alpha_holder_symmetric_and_triangle(seed, alpha):
    xs = [lift_signature(_random_polyline(seed + i, 2, 5), 2) for i in range(3)]
    d01 = dist_alpha_holder(xs[0], xs[1], alpha)
    assert d01 == pytest.approx(dist_alpha_holder(xs[1], xs[0], alpha), rel=1e-10)
    d12 = dist_alpha_holder(xs[1], xs[2], alpha)
    d02 = dist_alpha_holder(xs[0], xs[2], alpha)
    assert d01 >= 0
    # the increment distance is only quasi-additive in general, so allow the level-two constant
    assert d02 <= 2 * (d01 + d12) + 1e-9


def test_dist_alpha_holder_aligns_grids():
    x = _line_path([1.0, 1.0], n=3)
    y = _line_path([1.0, 1.0], n=5)
    # level-two roundoff enters through a square root
    assert dist_alpha_holder(x, y, 0.3) < 1e-6


def test_pairwise_distances_symmetric():
    rng = np.random.default_rng(0)
    elems = [random_group_element(rng, 2, 3) for _ in range(5)]
    x = GroupPath.from_elements(np.arange(5.0), elems)
    D = pairwise_distances(x.levels, 3)
    assert np.allclose(D, D.T, atol=1e-12)
    assert np.allclose(np.diag(D), 0.0, atol=1e-4)


# --- p-variation ----------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_pvar_one_dimensional_matches_brute_force(seed, p):
    vals = np.random.default_rng(seed).normal(size=9).cumsum()
    h = LinearPath(np.arange(9.0), vals)
    x = lift_signature(h, 1)
    got = pvar_norm(x, p)
    assert not got.approximate
    assert got.value == pytest.approx(oracles.pvar_scalar(vals, p), rel=1e-12)
    assert pvar_brute_force(vals, p) == pytest.approx(oracles.pvar_scalar(vals, p), rel=1e-12)


def test_pvar_large_grid_is_flagged_lower_bound():
    vals = np.random.default_rng(1).normal(size=60).cumsum()
    x = lift_signature(LinearPath(np.arange(60.0), vals), 1)
    exact = pvar_norm(x, 2.0)
    approx = pvar_norm(x, 2.0, max_exact=20)
    assert approx.approximate and approx.value <= exact.value + 1e-12


def test_pvar_rejects_p_at_most_one():
    with pytest.raises(ValueError):
        pvar_norm(_line_path([1.0, 0.0]), 1.0)


def test_grid_helpers():
    assert time_grid(1.0, 4).tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert uniform_steps(0.01, 256) == 3
    assert uniform_steps(1.0, 64) == 64
