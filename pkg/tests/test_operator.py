"""Principal-value quadrature, the Fourier oracle, stencils and dense assembly."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gamma

from fraclap.errors import DomainError, ParameterError, ResourceError
from fraclap.geometry import AnalyticFunction, Grid, GridFunction, Params
from fraclap.operator import (
    QuadratureConfig,
    apply_operator,
    assemble_discrete_operator,
    build_stencil,
    frac_lap_pv,
    frac_lap_pv_many,
    frac_lap_spectral,
    lalpha_membership,
    normalization_constant,
)

CFG = QuadratureConfig()


def getoor_constant(n, alpha):
    """Closed form of the operator applied to (1 - |x|^2)_+^{α/2} inside the unit ball."""
    return 2**alpha * gamma(1 + alpha / 2) * gamma((n + alpha) / 2) / gamma(n / 2)


def getoor(n, alpha):
    return AnalyticFunction(lambda p: np.clip(1 - np.sum(p * p, axis=1), 0, None) ** (alpha / 2),
                            n, support=((0.0,) * n, 1.0))


def test_normalization_constant_known_values():
    assert normalization_constant(1, 1.0) == pytest.approx(1 / math.pi)
    # n = 3, α = 1: Γ(2) / (π^{3/2} Γ(1/2)) = 1/π²
    assert normalization_constant(3, 1.0) == pytest.approx(1 / math.pi**2)
    with pytest.raises(ParameterError):
        normalization_constant(2, 2.0)


@pytest.mark.parametrize("n,alpha", [(1, 0.5), (1, 1.0), (1, 1.5), (2, 0.5), (2, 1.0), (2, 1.5)])
def test_getoor_profile_has_constant_image(n, alpha):
    P = Params(n, alpha)
    f = getoor(n, alpha)
    pts = np.zeros((3, n))
    pts[:, 0] = [0.0, 0.4, -0.7]
    vals = frac_lap_pv_many(f, pts, CFG, P)
    assert np.allclose(vals, getoor_constant(n, alpha), rtol=1e-2)


def test_pv_matches_scipy_quadrature_oracle():
    """Independent oracle: the one-dimensional integral for n = 1, α = 1 by adaptive quadrature."""
    P = Params(1, 1.0)
    f = lambda y: np.sqrt(max(1 - y * y, 0.0))  # noqa: E731
    for x in (0.0, 0.3):
        def second_difference(r):
            return (2 * f(x) - f(x + r) - f(x - r)) / r**2

        pieces = [integrate.quad(second_difference, a, b, limit=200)[0]
                  for a, b in ((0, 1 - x), (1 - x, 1 + x), (1 + x, 50))]
        oracle = P.C_norm * (sum(pieces) + 2 * f(x) / 50)
        assert frac_lap_pv(getoor(1, 1.0), [x], CFG, P) == pytest.approx(oracle, rel=1e-3)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_periodic_stencil_matches_symbol_for_plane_waves(alpha):
    P = Params(1, alpha)
    g = Grid.periodic_box((0.0,), 2 * np.pi, 512)
    u = GridFunction(g, np.sin(3 * g.mesh()[0]), "periodic")
    pv = apply_operator(u, CFG, P).values
    assert np.allclose(pv, 3**alpha * u.values, atol=1e-2 * 3**alpha)
    assert np.allclose(frac_lap_spectral(u, P).values, 3**alpha * u.values, atol=1e-10)


def test_stencil_agrees_with_pointwise_quadrature():
    """Exact agreement for data vanishing on the hull faces."""
    P = Params(2, 1.0)
    g = Grid.box((-1.0, -1.0), (1.0, 1.0), 17)
    X1, X2 = g.mesh()
    u = GridFunction(g, np.exp(-4 * (X1**2 + X2**2)) * (1 - X1**2) * (1 - X2**2))
    full = apply_operator(u, CFG, P).values
    for idx in [(8, 8), (5, 11), (3, 3)]:
        assert full[idx] == pytest.approx(frac_lap_pv(u, g.point(idx), CFG, P), rel=1e-9, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.25, 4.0), st.sampled_from([0.5, 1.0, 1.5]))
def test_grid_quadrature_is_homogeneous_under_dilation(s, alpha):
    """Stretching the grid by s multiplies the operator by s^{-α}."""
    P = Params(1, alpha)
    base = Grid.box((-1.0,), (1.0,), 33)
    vals = np.cos(np.pi * base.mesh()[0] / 2) ** 2
    wide = Grid.box((-s,), (s,), 33)
    a = apply_operator(GridFunction(base, vals), CFG, P).values
    b = apply_operator(GridFunction(wide, vals), CFG, P).values
    assert np.allclose(b, a * s**-alpha, rtol=1e-10, atol=1e-12)


def test_linear_in_the_data():
    P = Params(1, 0.8)
    g = Grid.box((-1.0,), (1.0,), 41)
    x = g.mesh()[0]
    u, v = np.cos(x) - np.cos(1.0), np.sin(3 * x) * (1 - x * x)
    L = lambda w: apply_operator(GridFunction(g, w), CFG, P).values  # noqa: E731
    assert np.allclose(L(2 * u - 3 * v), 2 * L(u) - 3 * L(v))


def test_assembled_operator_matches_stencil_on_odd_data():
    P = Params(1, 1.2)
    g = Grid.box((-1.0,), (1.0,), 65)
    op = assemble_discrete_operator(g, "antisym-xn", CFG, P)
    x = g.mesh()[0]
    vals = np.where(np.abs(x) < 1, x * (1 - x * x), 0.0)
    u = GridFunction(g, vals, "antisym-xn")
    direct = build_stencil(g, False, CFG, P).apply(vals)
    assert np.allclose(op.matrix @ op.gather(u), direct[op.unknowns], atol=1e-12)
    # the folded operator is symmetric and positive definite
    assert np.allclose(op.matrix, op.matrix.T, atol=1e-12)
    assert np.linalg.eigvalsh(op.matrix).min() > 0


def test_odd_image_round_trip():
    g = Grid.box((-1.0, -1.0), (1.0, 1.0), 9)
    op = assemble_discrete_operator(g, "antisym-x1-and-x2", CFG, Params(2, 1.0))
    z = np.arange(1, op.size + 1, dtype=float)
    u = op.to_function(z)
    GridFunction(g, u.values, "antisym-x1-and-x2")  # passes the oddness check
    assert np.array_equal(op.gather(u), z)


def test_evaluation_on_the_hull_is_refused():
    g = Grid.box((-1.0,), (1.0,), 11)
    u = GridFunction(g, np.zeros(11))
    with pytest.raises(DomainError):
        frac_lap_pv(u, [1.0], CFG, Params(1, 1.0))


def test_dense_assembly_respects_the_unknown_cap():
    g = Grid.box((-1.0, -1.0), (1.0, 1.0), 41)
    with pytest.raises(ResourceError):
        assemble_discrete_operator(g, "zero-outside", QuadratureConfig(max_unknowns=100), Params(2, 1.0))


def test_workers_do_not_change_results():
    P = Params(1, 0.7)
    f = getoor(1, 0.7)
    pts = np.linspace(-0.9, 0.9, 7)[:, None]
    assert np.array_equal(frac_lap_pv_many(f, pts, CFG, P, 1), frac_lap_pv_many(f, pts, CFG, P, 3))


def test_quadrature_config_parsing():
    cfg = QuadratureConfig.from_text("inner_radius = 3\n# comment\ngauss_order = 6")
    assert cfg.inner_radius == 3.0 and cfg.gauss_order == 6
    with pytest.raises(ParameterError, match="line 1"):
        QuadratureConfig.from_text("bogus = 1")
    with pytest.raises(ParameterError):
        QuadratureConfig(inner_radius=0.5)


def test_lalpha_weight_is_finite_for_bounded_data():
    P = Params(1, 1.0)
    g = Grid.box((-1.0,), (1.0,), 21)
    u = GridFunction(g, np.ones(21))
    # ∫_{-1}^{1} dx / (1 + x^2) = π/2, trapezoid on 21 points
    assert lalpha_membership(u, P) == pytest.approx(math.pi / 2, rel=1e-3)
