"""Grids, grid functions, reflections, regions and the CSV layout."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclap.errors import ContractError, DomainError, ParameterError
from fraclap.geometry import (
    AnalyticFunction,
    Grid,
    GridFunction,
    Params,
    RegionSpec,
    antisymmetrize,
    critical_exponent,
    dist_boundary,
    read_csv,
    reflect,
    region_membership,
    write_csv,
)

coord = st.floats(min_value=-5, max_value=5, allow_nan=False)


def test_params_rejects_supercritical_exponent():
    assert critical_exponent(1, 0.5) == pytest.approx(3.0)
    assert critical_exponent(1, 1.5) == np.inf
    with pytest.raises(ParameterError):
        Params(2, 1.0, 3.0)
    with pytest.raises(ParameterError):
        Params(2, 2.0)
    assert Params(1, 1.0, 2.0).with_p(2.5).p == 2.5


@given(st.lists(coord, min_size=2, max_size=3))
def test_reflections_are_involutions(x):
    x = np.array(x)
    for axis in (1, 2, "n"):
        assert np.array_equal(reflect(reflect(x, axis), axis), x)


@given(st.floats(0.01, 3), st.floats(0.01, 0.99), st.floats(-2, 2))
def test_strip_regions_partition_the_right_half_plane(x1, frac, xp):
    H = 1.0
    below = np.array([x1, frac * H, xp])
    above = np.array([x1, H + 1 + frac, xp])
    A, B = RegionSpec("strip-A", height=H), RegionSpec("strip-B", height=H)
    assert region_membership(A, below) and not region_membership(B, below)
    assert region_membership(B, above) and not region_membership(A, above)
    assert dist_boundary(A, below) == pytest.approx(min(x1, frac * H, H - frac * H))


def test_dist_boundary_rejects_outside_points():
    with pytest.raises(DomainError):
        dist_boundary(RegionSpec("quarter-space"), [-1.0, 1.0])


def test_sigma_plus_uses_plane_position():
    r = RegionSpec("sigma-plus", lam=0.5)
    assert region_membership(r, [1.0, 0.25])
    assert not region_membership(r, [1.0, 0.75])
    with pytest.raises(ParameterError):
        RegionSpec("sigma-plus")


def test_grid_function_enforces_declared_oddness():
    g = Grid.box((-1.0,), (1.0,), 11)
    x = g.mesh()[0]
    GridFunction(g, x**3, "antisym-xn")
    with pytest.raises(ContractError):
        GridFunction(g, x**2 + 1, "antisym-xn")


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_odd_extension_off_the_hull(x1, x2):
    g = Grid.box((-1.0, -1.0), (1.0, 1.0), 21)
    X1, X2 = g.mesh()
    u = GridFunction(g, X1 * np.exp(-X2**2), "antisym-x1")
    p = np.array([[x1, x2]])
    q = np.array([[-x1, x2]])
    assert u.evaluate(p)[0] == pytest.approx(-u.evaluate(q)[0], abs=1e-14)


def test_interpolation_reproduces_linear_data():
    g = Grid.box((0.0, 0.0), (1.0, 2.0), (5, 9))
    X1, X2 = g.mesh()
    u = GridFunction(g, 2 * X1 - 3 * X2 + 1)
    pts = np.array([[0.13, 0.71], [0.5, 1.99], [0.999, 0.001]])
    assert np.allclose(u.evaluate(pts), 2 * pts[:, 0] - 3 * pts[:, 1] + 1)


@given(st.integers(1, 3), st.integers(0, 2**32))
@settings(max_examples=15, deadline=None)
def test_antisymmetrize_is_a_projection(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((5,) * n)
    axes = tuple(range(n))
    once = antisymmetrize(v, axes)
    assert np.allclose(antisymmetrize(once, axes), once)
    for k in axes:
        assert np.allclose(once, -np.flip(once, axis=k))


def test_csv_round_trip_is_exact():
    g = Grid.box((-1.0, 0.0), (1.0, 1.0), (9, 5))
    X1, X2 = g.mesh()
    u = GridFunction(g, np.sin(X1) * X2 / 3.0, "antisym-x1")
    text = write_csv(u, alpha=0.7)
    back, alpha = read_csv(text)
    assert alpha == 0.7
    assert back.extension == "antisym-x1"
    assert np.array_equal(back.values, u.values)
    assert write_csv(back, alpha=alpha) == text


def test_analytic_function_wraps_a_callable():
    f = AnalyticFunction(lambda p: np.sum(p**2, axis=1), 2, far_value=0.0)
    assert np.allclose(f.evaluate(np.array([[1.0, 2.0]])), [5.0])
