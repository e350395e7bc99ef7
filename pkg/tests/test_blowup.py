"""Rescaling about the maximum, case classification and boundary diagnostics."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fraclap.blowup import (
    CASE_TABLE,
    BlowupRecord,
    argmax_lex,
    blowup_record,
    boundary_distances,
    bucket,
    classify_case,
    decay_diagnostic,
    holder_check,
    limiting_domain,
    rescale,
)
from fraclap.errors import ContractError, ParameterError, ScaleError
from fraclap.geometry import Grid, GridFunction, Params, RegionSpec
from fraclap.solver import ProblemSpec, solve

REPRESENTATIVE = {"zero": 0.01, "finite": 1.0, "inf": math.inf}


def test_nine_case_table_is_exhaustive():
    expected = {
        ("inf", "inf"): 1, ("inf", "finite"): 2, ("finite", "inf"): 3, ("finite", "finite"): 4,
        ("inf", "zero"): 5, ("finite", "zero"): 6, ("zero", "inf"): 7, ("zero", "finite"): 8,
        ("zero", "zero"): 9,
    }
    assert CASE_TABLE == expected
    for a, b in itertools.product(REPRESENTATIVE, repeat=2):
        assert classify_case(REPRESENTATIVE[a], REPRESENTATIVE[b]) == expected[(a, b)]
    assert sorted(CASE_TABLE.values()) == list(range(1, 10))
    assert all(limiting_domain(c) for c in range(1, 10))


@given(st.floats(0, 1e6), st.floats(1e-3, 1.0), st.floats(1.5, 100.0))
def test_buckets_are_monotone_in_the_ratio(r, low, factor):
    th = (low, low * factor)
    order = {"zero": 0, "finite": 1, "inf": 2}
    assert order[bucket(r, th)] <= order[bucket(r * 2 + 1e-9, th)]


def test_bucket_edges_and_bad_thresholds():
    assert bucket(0.1) == "zero" and bucket(10.0) == "inf" and bucket(0.5) == "finite"
    with pytest.raises(ParameterError):
        bucket(1.0, (1.0, 0.5))
    with pytest.raises(ParameterError):
        bucket(-1.0)


def _bump_1d(m=201, peak=0.3):
    g = Grid.box((-1.0,), (1.0,), m)
    x = g.mesh()[0]
    return GridFunction(g, 5.0 * np.exp(-((x - peak) ** 2) / 0.02) - 5.0 * np.exp(-((x + peak) ** 2) / 0.02), "antisym-xn")


def test_rescaled_profile_is_normalised_and_node_aligned():
    u = _bump_1d()
    m, x, idx = argmax_lex(u)
    params = Params(1, 1.0, 2.0)
    v, lam = rescale(u, x, m, params)
    assert lam == pytest.approx(m ** (-1.0))
    assert v.evaluate(np.zeros((1, 1)))[0] == pytest.approx(1.0, abs=1e-14)
    assert v.values.max() <= 1.0 + 1e-10
    assert v.grid.spacing[0] == pytest.approx(u.grid.spacing[0] / lam)
    # without a window every node of v is the image of a node of u: no interpolation
    assert np.allclose(v.values * m, u.values, rtol=1e-14, atol=0)
    assert v.grid.point((idx[0],)) == pytest.approx((0.0,), abs=1e-12)
    vw, _ = rescale(u, x, m, params, window=5.0)
    assert vw.grid.upper[0] <= 5.0 + 1e-12 and vw.grid.origin[0] >= -5.0 - 1e-12


def test_rescale_contracts():
    u = _bump_1d()
    m, x, _ = argmax_lex(u)
    with pytest.raises(ContractError):
        rescale(u, x, 0.9 * m, Params(1, 1.0, 2.0))
    huge = GridFunction(u.grid, u.values * 1e200, "antisym-xn")
    with pytest.raises(ScaleError):
        rescale(huge, x, m * 1e200, Params(1, 0.1, 1.2))


def test_record_rejects_unnormalised_profiles():
    g = Grid.box((-1.0,), (1.0,), 11)
    v = GridFunction(g, np.full(11, 2.0))
    with pytest.raises(ContractError):
        BlowupRecord(2.0, (0.0,), 1.0, 1.0, 1.0, 4, v, 0.5)


def test_boundary_distances_in_the_upper_half_ball():
    d, dp, dplus = boundary_distances(np.array([0.3, 0.4]), RegionSpec("bounded-domain"))
    assert (dp, dplus, d) == pytest.approx((0.4, 0.5, 0.4))
    with pytest.raises(ContractError):
        boundary_distances(np.array([0.3, -0.4]), RegionSpec("bounded-domain"))


def test_blowup_ratios_are_invariant_under_domain_scaling():
    """Solutions on balls of radius R are rescalings of one profile, so the ratios agree."""
    records = []
    for R in (1.0, 0.5):
        spec = ProblemSpec.interval(1.0, 2.0, 257, radius=R)
        res = solve(spec)
        records.append(blowup_record(res.u, spec.domain, spec.params))
    a, b = records
    assert a.case_label == b.case_label
    assert a.ratio_prime == pytest.approx(b.ratio_prime, rel=1e-9)
    assert a.ratio_plus == pytest.approx(b.ratio_plus, rel=1e-9)
    assert np.allclose(a.v_k.values, b.v_k.values, atol=1e-9)
    assert '"case"' in a.to_json()


def _shifted_psi1(n, alpha, m):
    g = Grid.box((-0.6,) * n, (0.6,) * n, m)
    c = np.eye(n)[0]
    vals = np.clip(1 - np.sum((g.points() - c) ** 2, axis=1), 0, None) ** (alpha / 2)
    return GridFunction(g, vals.reshape(g.extent))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_holder_fit_recovers_the_half_order_exponent(alpha):
    rep = holder_check(_shifted_psi1(1, alpha, 2049), np.zeros(1), alpha)
    assert rep.verdict == "pass", rep.notes
    assert abs(rep.data["exponent"] - alpha / 2) <= 0.1


def test_holder_check_gates_and_failures():
    v = _shifted_psi1(1, 1.0, 2049)
    rep = holder_check(v, np.array([0.5]), 1.0)
    assert rep.verdict == "hypothesis-failure" and rep.clause == "touch point"
    g = Grid.box((-0.6,), (0.6,), 2049)
    x = g.mesh()[0]
    jump = GridFunction(g, np.where(x > 1e-9, 1.0, 0.0))
    rep = holder_check(jump, np.zeros(1), 1.0)
    assert rep.verdict == "fail" and rep.witness is not None
    with pytest.raises(ParameterError):
        holder_check(v, np.zeros(1), 1.0, levels=3)


def test_decay_diagnostic():
    g = Grid.box((-10.0,), (10.0,), 401)
    x = g.mesh()[0]
    assert decay_diagnostic(GridFunction(g, np.exp(-x * x))).verdict == "pass"
    rep = decay_diagnostic(GridFunction(g, 1.0 / (1.0 + np.abs(x))))
    assert rep.verdict == "fail" and abs(rep.witness[0]) >= 8.0
