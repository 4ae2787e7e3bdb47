import numpy as np
import pytest
import scipy.linalg

from markovrp.nilpotent_group import DimensionMismatchError, GroupElement, exp_level_one
from markovrp.path_tools import GroupPath, LinearPath, lift_signature
from markovrp.rde_solver import RDEOverflowError, euler_table, solution_to_csv, solve, step_euler
from markovrp.vector_fields import heisenberg, linear_system


def _smooth_driver(n, N, T=1.0):
    t = np.linspace(0.0, T, n + 1)
    return lift_signature(LinearPath(t, np.sin(3 * t)), N)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_geometric_equation_converges_with_order_at_least_one(N):
    V = linear_system([np.array([[1.0]])])
    y0 = 1.5
    exact = y0 * np.exp(np.sin(3.0))
    errs = []
    # at N = 2 the error changes sign near n = 16, so the fit starts in the asymptotic range
    meshes = [32, 64, 128, 256]
    for n in meshes:
        y = solve(V, [y0], _smooth_driver(n, N))
        errs.append(abs(y[-1, 0] - exact))
    order = -np.polyfit(np.log(meshes), np.log(errs), 1)[0]
    assert order >= 0.95
    if N >= 2:
        assert order >= 1.5


def test_heisenberg_area_within_mesh():
    V = heisenberg()
    for n in (32, 64, 128):
        t = np.linspace(0.0, 1.0, n + 1)
        pts = np.stack([np.cos(2 * np.pi * t) - 1, np.sin(2 * np.pi * t)], axis=1)
        y = solve(V, np.zeros(3), lift_signature(LinearPath(t, pts), 2))
        # z_T = int x dy around the unit circle shifted by -1: int (cos - 1) cos * 2 pi = pi
        assert abs(y[-1, 2] - np.pi) <= 1.0 / n
        assert np.allclose(y[-1, :2], 0.0, atol=1e-12)


def test_heisenberg_step_matches_closed_form():
    g = exp_level_one([0.3, -0.2], 2) * exp_level_one([0.1, 0.5], 2)
    y = step_euler(heisenberg(), [1.0, 2.0, 3.0], g)
    lev = g.level(2)
    assert y[0] == pytest.approx(1.0 + g.level(1)[0])
    assert y[1] == pytest.approx(2.0 + g.level(1)[1])
    assert y[2] == pytest.approx(3.0 + 1.0 * g.level(1)[1] + lev[0, 1])


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_linear_single_step_matches_exponential_remainder(N):
    rng = np.random.default_rng(N)
    mats = [rng.normal(size=(3, 3)) * 0.5 for _ in range(2)]
    V = linear_system(mats)
    v = rng.normal(size=2) * 0.3
    y0 = rng.normal(size=3)
    B = v[0] * mats[0] + v[1] * mats[1]
    # the geodesic increment pairs with (v . V)^k Id / k!, and for linear fields that is B^k y / k!
    y = step_euler(V, y0, exp_level_one(v, N))
    remainder = np.zeros(3)
    term = y0.copy()
    for k in range(1, 40):
        term = B @ term / k
        if k > N:
            remainder += term
    assert np.max(np.abs(scipy.linalg.expm(B) @ y0 - y - remainder)) < 1e-9


def test_euler_table_caches_and_counts_words():
    V = heisenberg()
    tab = euler_table(V, 3)
    assert tab is euler_table(V, 3)
    assert len(tab.words) == 2 + 4 + 8


def test_batched_states_and_single_point_path():
    V = heisenberg()
    X = GroupPath.identity(2, 2, [0.0])
    assert solve(V, [1.0, 2.0, 3.0], X).tolist() == [[1.0, 2.0, 3.0]]


def test_dimension_checks():
    with pytest.raises(DimensionMismatchError):
        step_euler(heisenberg(), [0.0, 0.0], exp_level_one([1.0, 0.0], 2))
    with pytest.raises(DimensionMismatchError):
        step_euler(heisenberg(), [0.0, 0.0, 0.0], exp_level_one([1.0, 0.0, 0.0], 2))


def test_overflow_raises():
    V = linear_system([np.array([[1.0]])])
    t = np.arange(6.0)
    X = lift_signature(LinearPath(t, 1e80 * t), 2)
    with pytest.raises(RDEOverflowError):
        solve(V, [1e80], X)


def test_csv_output():
    text = solution_to_csv([0.0, 1.0], np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert text.splitlines()[0] == "t,y1,y2"
    assert text.splitlines()[2] == "1.0,3.0,4.0"
