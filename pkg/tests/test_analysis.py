import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard.analysis import (UNATTAINABLE_NOTE, linear_comparison_decay, lower_bound_check, tail_window,
                               two_sided_bounds, verify_decay, verify_origin, verify_solution,
                               young_inequality_check)
from choquard.errors import AnalysisError
from choquard.exponents import ProblemParams, tau0
from choquard.green import fundamental_solution
from choquard.grid import OriginModel, RadialFunction, TailModel, ZERO, make_grid
from choquard.solver import iterate

P = ProblemParams(3, 2.0, 2.0, 0.5)


@pytest.fixture(scope="module")
def solved(grid3, kernel32):
    return iterate(P, 0.5, grid3, kernel=kernel32)


def test_origin_of_gamma0(grid3):
    fs = fundamental_solution(3, grid3)
    fit = verify_origin(fs.profile, P.with_k(1.0))
    assert fit.coefficient == pytest.approx(1 / (4 * math.pi), rel=5e-3)
    assert fit.exponent == pytest.approx(-1, abs=0.02)


def test_origin_with_bounded_perturbation(grid3):
    fs = fundamental_solution(3, grid3)
    u = RadialFunction.from_values(grid3, fs.profile.values + 1 / (1 + grid3.nodes**2))
    fit = verify_origin(u, P.with_k(1.0))
    assert fit.coefficient == pytest.approx(1 / (4 * math.pi), rel=1e-2)


def test_origin_scales_with_mass(grid3):
    fs = fundamental_solution(3, grid3)
    fit = verify_origin(fs.profile * 2.5, P.with_k(2.5))
    assert fit.relative_error < 5e-3


def test_origin_boundedness_for_zero_mass(grid3):
    u = RadialFunction.from_callable(grid3, lambda r: 1 / (1 + r**4), origin_exponent=0.0, tail_exponent=4.0)
    fit = verify_origin(u, P.with_k(0.0))
    assert fit.bounded is True and fit.target_coefficient is None


def test_exact_power_tail(grid3):
    u = RadialFunction.from_callable(grid3, lambda r: 0.7 * r**-2.0, origin_exponent=-2.0, tail_exponent=2.0)
    d = verify_decay(u, P.with_k(1.0))
    assert d.exponent == pytest.approx(2.0, abs=1e-10)
    assert d.prefactor == pytest.approx(0.7, rel=1e-10)
    assert d.exponent_error < 1e-10
    assert d.sandwich_spread < 1e-10


def test_short_window_advises_larger_radius():
    g = make_grid(1e-2, 0.5, 256)
    with pytest.raises(AnalysisError, match="r_max"):
        tail_window(g)


def test_lower_bound_examples(grid3):
    t0 = tau0(P)
    exact = RadialFunction.from_callable(grid3, lambda r: r**t0)
    assert lower_bound_check(exact, P) == pytest.approx(1.0, rel=1e-12)
    plus = RadialFunction.from_callable(grid3, lambda r: r**t0 + r ** (t0 - 1))
    assert lower_bound_check(plus, P) == pytest.approx(1.0, rel=0.02)
    assert lower_bound_check(plus, P) >= 1.0
    zero = RadialFunction(grid3, np.zeros(grid3.n), OriginModel(0, 0), TailModel(ZERO))
    with pytest.raises(AnalysisError):
        lower_bound_check(zero, P)


@pytest.mark.parametrize("mu, nu, sigma", [(1, 1, 2), (1, 3, 4), (0.5, 1, 2.5)])
def test_linear_comparison(grid3, mu, nu, sigma):
    res = linear_comparison_decay(mu, nu, sigma, grid3)
    assert res.target == pytest.approx(nu / mu)
    assert res.relative_error < 0.02


def test_linear_comparison_zero_forcing(grid3):
    assert linear_comparison_decay(1, 0, 2, grid3).limit == 0.0


def test_solution_report(solved, kernel32):
    rep = verify_solution(solved, kernel32)
    flags = rep.pass_flags
    assert flags["origin_coefficient"]
    assert flags["lower_bound_positive"]
    assert flags["young_inequality"]
    assert flags["decay_prefactor_lp"]
    # the L1 norm is infinite for a tail exponent of 2 in three dimensions
    assert rep.decay_fit.l1_norm is None and not flags["decay_prefactor_l1"]
    assert rep.decay_fit.far_exponent == pytest.approx(2.0, rel=0.02)


def test_report_is_deterministic(solved, kernel32):
    a = verify_solution(solved, kernel32).to_json()
    b = verify_solution(solved, kernel32).to_json()
    assert a == b
    json.loads(a)


def test_trivial_report(grid3, kernel32):
    rep = verify_solution(iterate(P, 0.0, grid3, kernel=kernel32), kernel32)
    assert rep.pass_flags == {"origin_bounded": True}
    assert "trivial" in rep.notes[0]


def test_two_sided_bounds_note(solved):
    b = two_sided_bounds(solved.u, P.with_k(0.5))
    assert b["lower_ok"]
    assert b["note"] == UNATTAINABLE_NOTE


def test_young_on_solution(solved, kernel32):
    assert young_inequality_check(solved.u, P, kernel32)["ok"]


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(0.01, 0.99))
def test_young_pointwise(I, u, q):
    # weighted AM-GM: I u^q <= (1-q) I^{1/(1-q)} + q u
    lhs = I * u**q
    rhs = (1 - q) * I ** (1 / (1 - q)) + q * u
    assert lhs <= rhs * (1 + 1e-10) + 1e-300
