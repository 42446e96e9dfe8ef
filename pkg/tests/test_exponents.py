import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from choquard.checks import literal_verdict
from choquard.errors import ParameterError, RegionError
from choquard.exponents import (EXISTENCE_WITH_DIRAC, NONEXISTENCE, OUTSIDE, REMOVABLE_ONLY,
                                ProblemParams, classify, margins, predicted_decay, tau0,
                                tau_closed_form, tau_sequence)


@st.composite
def params(draw, dims=(3, 4, 5, 10)):
    N = draw(st.sampled_from(dims))
    alpha = draw(st.floats(0.01, N - 0.01))
    p = draw(st.floats(0.01, 2.0 * N / (N - 2.0)))
    q = draw(st.floats(0.01, 0.99))
    return ProblemParams(N, alpha, p, q)


@pytest.mark.parametrize("N, alpha, q, expected", [(3, 1, 0.5, -4), (5, 4, 0.5, -3), (10, 0.5, 0.9, -95)])
def test_tau0_examples(N, alpha, q, expected):
    assert tau0(ProblemParams(N, alpha, 1.0, q)) == pytest.approx(expected, rel=1e-14)


def test_tau_sequence_ten_dimensional():
    seq = tau_sequence(ProblemParams(10, 0.5, 0.05, 0.9))
    # recursion written out by hand: tau_{j+1} = (alpha + p tau_j) / (1 - q)
    expected = [-95.0]
    for _ in range(3):
        expected.append((0.5 + 0.05 * expected[-1]) / 0.1)
    assert np.allclose(seq.taus, expected, rtol=1e-12)
    assert np.allclose(expected, [-95, -42.5, -16.25, -3.125])
    assert seq.threshold == pytest.approx(-10.0)
    assert seq.j0 == 3
    assert seq.divergence_value() == pytest.approx(0.34375, abs=1e-12)


def test_tau_sequence_equality_case():
    seq = tau_sequence(ProblemParams(3, 1, 0.5, 0.5))
    assert np.allclose(seq.taus, [-4, -2])
    assert seq.j0 == 1
    assert seq.divergence_value() == pytest.approx(0.0, abs=1e-12)


def test_tau_sequence_crossed_at_start():
    seq = tau_sequence(ProblemParams(3, 1, 0.2, 0.5))
    assert seq.taus == (-4.0,)
    assert seq.threshold == pytest.approx(-5.0)
    assert seq.j0 == 0


def test_tau_sequence_cap_reports_none():
    # far outside (q): the sequence decreases and never crosses
    seq = tau_sequence(ProblemParams(3, 1.0, 2.5, 0.5), max_j=10)
    assert seq.j0 is None
    assert len(seq.taus) == 11
    with pytest.raises(ParameterError):
        tau_sequence(ProblemParams(3, 1.0, 1.0, 0.5), max_j=0)


@pytest.mark.parametrize("p, q, verdict", [(0.2, 0.5, NONEXISTENCE), (3.5, 0.9, REMOVABLE_ONLY),
                                           (1.5, 0.5, EXISTENCE_WITH_DIRAC)])
def test_classify_examples(p, q, verdict):
    assert classify(ProblemParams(3, 1.0, p, q)).verdict == verdict


def test_regime_flag_example():
    assert classify(ProblemParams(3, 1.0, 1.5, 0.5)).flags["regime_16"]


@pytest.mark.parametrize("N, alpha, p, q, exponent", [(3, 1, 1.5, 0.5, 4), (3, 2, 2, 0.5, 2), (4, 2, 1.2, 0.6, 5)])
def test_predicted_decay_examples(N, alpha, p, q, exponent):
    pred = predicted_decay(ProblemParams(N, alpha, p, q))
    assert pred.exponent == pytest.approx(exponent)
    assert pred.prefactor_rule == "L1NormPower"
    assert pred.regime == "1.6"
    assert pred.origin_exponent == N - 2


def test_predicted_decay_outside_region():
    with pytest.raises(RegionError):
        predicted_decay(ProblemParams(3, 1.0, 0.2, 0.5))


@pytest.mark.parametrize("bad", [dict(N=2), dict(alpha=0.0), dict(alpha=3.0), dict(p=0.0), dict(q=1.0),
                                 dict(q=0.0), dict(k=-1.0), dict(p=math.nan)])
def test_invalid_params(bad):
    kw = dict(N=3, alpha=1.0, p=1.0, q=0.5, k=0.0)
    kw.update(bad)
    with pytest.raises(ParameterError):
        ProblemParams(**kw)


def test_boundary_flag_keeps_verdict():
    # p + q = 1 + alpha/(N-2) exactly: the sum condition holds with equality
    P = ProblemParams(3, 1.0, 1.5, 0.5)
    region = classify(P)
    assert region.boundary
    assert region.verdict == EXISTENCE_WITH_DIRAC
    assert not classify(P, eps_boundary=0.0).boundary


def test_regime_19_is_empty_in_existence_region():
    rng = np.random.default_rng(3)
    for _ in range(5000):
        N = int(rng.choice([3, 4, 5, 10]))
        P = ProblemParams(N, rng.uniform(0.01, N - 0.01), rng.uniform(0.01, 3.0), rng.uniform(0.01, 0.99))
        r = classify(P)
        if r.verdict == EXISTENCE_WITH_DIRAC:
            assert not r.flags["regime_19"]


@settings(max_examples=300, deadline=None)
@given(params())
def test_classifier_matches_literal_inequalities(P):
    assume(min(abs(v) for v in margins(P).values()) > 1e-9)
    assert classify(P).verdict == literal_verdict(P.N, P.alpha, P.p, P.q)


@settings(max_examples=300, deadline=None)
@given(params())
def test_nonexistence_and_existence_disjoint(P):
    f = classify(P).flags
    assert not (f["nonexist_q"] and f["existence_hypotheses"])


@settings(max_examples=200, deadline=None)
@given(params(), st.integers(1, 50))
def test_closed_form_matches_recursion(P, j):
    t = tau0(P)
    for _ in range(j):
        t = (P.alpha + P.p * t) / (1 - P.q)
    assume(abs(t) < 1e12)
    assert abs(t - tau_closed_form(P, j)) <= 1e-10 * (1 + abs(t))


@settings(max_examples=200, deadline=None)
@given(params())
def test_tau_increasing_under_nonexistence(P):
    assume(classify(P).verdict == NONEXISTENCE)
    t = tau_sequence(P).taus
    assert all(b > a for a, b in zip(t, t[1:]))
    seq = tau_sequence(P)
    # slow crossings (ratio near 1) may exceed the cap; that is reported, not looped
    assert seq.j0 is not None or len(seq.taus) == 65
    if seq.j0 is not None:
        assert seq.divergence_value() >= 0


@settings(max_examples=100, deadline=None)
@given(params())
def test_tau_converges_geometrically(P):
    ratio = P.p / (1 - P.q)
    assume(classify(P).verdict == NONEXISTENCE and ratio < 0.95)
    limit = P.alpha / (1 - P.p - P.q)
    assert limit > 0
    gaps = [abs(tau_closed_form(P, j) - limit) for j in range(8)]
    for a, b in zip(gaps, gaps[1:]):
        if a > 1e-6 * (1 + limit):
            assert b / a == pytest.approx(ratio, rel=1e-4)


def test_outside_label_exists_for_gap_points():
    # Outside may only label points that no other region claims
    for p in np.linspace(0.05, 5.95, 60):
        for q in np.linspace(0.02, 0.98, 25):
            P = ProblemParams(3, 1.0, float(p), float(q))
            r = classify(P)
            if r.verdict == OUTSIDE:
                assert not r.flags["nonexist_q"] and not r.flags["existence_hypotheses"]
                assert not (r.flags["cond_12"] and r.flags["cond_13"])
