"""Named invariant suites run by ``choquard verify``.

Each check returns ``(ok, detail)``; details contain only computed numbers, so
two runs with the same seed print identical text.
"""

from __future__ import annotations

import math

import numpy as np

from .exponents import (EXISTENCE_WITH_DIRAC, NONEXISTENCE, OUTSIDE, REMOVABLE_ONLY,
                        ProblemParams, classify, margins, tau_closed_form, tau_sequence)

SUITES = ("exponents", "green", "riesz", "solver", "analysis")
DIMENSIONS = (3, 4, 5, 10)


def random_params(rng: np.random.Generator, N=None) -> ProblemParams:
    N = int(rng.choice(DIMENSIONS)) if N is None else N
    alpha = float(rng.uniform(0.01, N - 0.01))
    p = float(rng.uniform(0.01, 2.0 * N / (N - 2.0)))
    q = float(rng.uniform(0.01, 0.99))
    return ProblemParams(N, alpha, p, q)


def literal_verdict(N, alpha, p, q) -> str:
    """Independent re-evaluation of the region inequalities, written out longhand."""
    if (1 - alpha / N) * p + q < 1 and p + q < 1 + alpha / (N - 2):
        return NONEXISTENCE
    c12 = (1 - alpha / N) * p + q >= 1 or p + q >= 1 + alpha / (N - 2)
    if c12 and (p + q >= (N + alpha) / (N - 2) or p >= N / (N - 2)):
        return REMOVABLE_ONLY
    if p < N / (N - 2) and 0 < q < 1 and c12 and p + q < (N + alpha) / (N - 2):
        return EXISTENCE_WITH_DIRAC
    return OUTSIDE


# --- exponents ---------------------------------------------------------------

def _classifier_oracle(rng):
    n = mismatches = 0
    while n < 2000:
        P = random_params(rng)
        if min(abs(v) for v in margins(P).values()) <= 1e-9:
            continue
        n += 1
        mismatches += classify(P).verdict != literal_verdict(P.N, P.alpha, P.p, P.q)
    return mismatches == 0, f"{mismatches} mismatches in {n} samples"


def _tau_closed_form(rng):
    worst = 0.0
    for _ in range(300):
        P = random_params(rng)
        seq = [tau_sequence(P, 1).tau0]
        for j in range(1, 51):
            seq.append(P.alpha / (1 - P.q) + P.p / (1 - P.q) * seq[-1])
            if abs(seq[-1]) > 1e12:
                break
            worst = max(worst, abs(seq[-1] - tau_closed_form(P, j)) / (1 + abs(seq[-1])))
    return worst <= 1e-10, f"max scaled difference {worst:.3e}"


def _tau_monotone(rng):
    bad = n = 0
    while n < 300:
        P = random_params(rng)
        if classify(P).verdict != NONEXISTENCE:
            continue
        n += 1
        t = tau_sequence(P).taus
        bad += any(b <= a for a, b in zip(t, t[1:]))
    return bad == 0, f"{bad} non-increasing sequences in {n}"


def _partition(rng):
    clash = 0
    for _ in range(2000):
        f = classify(random_params(rng)).flags
        clash += f["nonexist_q"] and f["existence_hypotheses"]
    return clash == 0, f"{clash} points in both regions"


# --- green -------------------------------------------------------------------

def _green_constant(rng):
    from .green import green_apply
    from .grid import OriginModel, RadialFunction, TailModel, POWER, make_grid
    g = make_grid(n=1024)
    one = RadialFunction(g, np.ones(g.n), OriginModel(1.0, 0.0), TailModel(POWER, 1.0, 0.0))
    u = green_apply(one, decay_rate=0.0)
    idx = g.index_window(10 * g.r_min, g.r_max / 10)
    err = float(np.max(np.abs(u.values[idx] - 1.0)))
    return err < 1e-6, f"sup |G[1] - 1| = {err:.3e}"


def _green_monotone(rng):
    from .green import green_apply
    from .grid import RadialFunction, make_grid
    g = make_grid(n=512)
    a = rng.uniform(0.1, 1.0, g.n)
    b = a + rng.uniform(0.0, 1.0, g.n)
    fa = RadialFunction.from_values(g, a, origin_exponent=0.0, tail_exponent=4.0)
    fb = RadialFunction.from_values(g, b, origin_exponent=0.0, tail_exponent=4.0)
    ua, ub = green_apply(fa, decay_rate=0.04).values, green_apply(fb, decay_rate=0.04).values
    ok = bool(np.all(ua >= 0.0) and np.all(ub >= ua))
    return ok, f"min G[f] = {ua.min():.3e}, min(G[g]-G[f]) = {(ub - ua).min():.3e}"


def _gamma0_origin(rng):
    from .green import fundamental_solution, origin_constant
    from .grid import make_grid
    fs = fundamental_solution(3, make_grid())
    err = abs(fs.c_N_fit / origin_constant(3) - 1)
    return err < 5e-3, f"fitted c_3 relative error {err:.3e}"


# --- riesz -------------------------------------------------------------------

def _riesz_indicator(rng):
    from .grid import RadialFunction, make_grid
    from .riesz import build_kernel, riesz_apply
    g = make_grid()
    K = build_kernel(3, 1.0, g)
    val = riesz_apply(RadialFunction.indicator(g, 1.0), K).values[0]
    err = abs(val / (4 * math.pi) - 1)
    return err < 1e-3, f"I_1[1_B](r_min) / 4 pi - 1 = {err:.3e}"


def _riesz_slope(rng):
    from .grid import RadialFunction, make_grid
    from .riesz import asymptotic_check, build_kernel
    g = make_grid()
    K = build_kernel(3, 1.0, g)
    rep = asymptotic_check(RadialFunction.from_callable(g, lambda r: (1 + r) ** -5.0), 5.0, K)
    return rep.passed, f"error slope {rep.fitted_error_slope:.4f} vs bound {rep.slope_bound:.4f} + 0.1"


def _riesz_symmetry(rng):
    from .riesz import angular_kernel
    N = int(rng.choice(DIMENSIONS))
    alpha = float(rng.uniform(0.1, N - 0.1))
    r, s = rng.uniform(0.01, 10.0, 2)
    lam = float(rng.uniform(0.1, 10.0))
    a, b = angular_kernel(r, s, N, alpha), angular_kernel(s, r, N, alpha)
    c = angular_kernel(lam * r, lam * s, N, alpha)
    e1 = abs(a / b - 1)
    e2 = abs(c / (lam ** (alpha - N) * a) - 1)
    return max(e1, e2) < 1e-6, f"symmetry {e1:.2e}, homogeneity {e2:.2e}"


def _riesz_positive(rng):
    from .grid import make_grid
    from .riesz import build_kernel
    K = build_kernel(3, float(rng.uniform(0.2, 2.8)), make_grid(n=512))
    return bool(np.all(K.matrix >= 0.0)), f"min weight {K.matrix.min():.3e}"


# --- solver ------------------------------------------------------------------

def _solver_monotone(rng):
    from .solver import iterate
    res = iterate(ProblemParams(3, 2.0, 2.0, 0.5), 0.5)
    mono = all(s.monotone_ok for s in res.diagnostics)
    return res.converged and mono, f"{res.verdict} after {res.iterations} iterations; monotone {mono}"


def _solver_fixed_point(rng):
    from .solver import iterate
    res = iterate(ProblemParams(3, 2.0, 2.0, 0.5), 0.5)
    return bool(res.fixed_point_residual < 10 * res.tol), f"residual {res.fixed_point_residual:.3e}"


def _solver_nonexistence(rng):
    from .solver import DIVERGED_RIESZ, MAX_ITERATIONS, nonexistence_probe
    rep = nonexistence_probe(ProblemParams(3, 1.0, 0.2, 0.5))
    ok = rep.certified and rep.iteration_verdict in (DIVERGED_RIESZ, MAX_ITERATIONS)
    return ok, f"alpha + tau_j0 p = {rep.divergence_value:.6g}; iteration {rep.iteration_verdict}"


# --- analysis ----------------------------------------------------------------

def _linear_comparison(rng):
    from .analysis import linear_comparison_decay
    from .grid import make_grid
    g = make_grid()
    errs = [linear_comparison_decay(mu, nu, s, g).relative_error for nu, s, mu in ((1, 2, 1), (3, 4, 1), (1, 2.5, 0.5))]
    return max(errs) < 0.02, "relative errors " + ", ".join(f"{e:.3e}" for e in errs)


def _origin_gamma0(rng):
    from .analysis import verify_origin
    from .green import fundamental_solution
    from .grid import make_grid
    fs = fundamental_solution(3, make_grid())
    fit = verify_origin(fs.profile, ProblemParams(3, 1.0, 1.5, 0.5, k=1.0))
    ok = fit.relative_error < 5e-3 and abs(fit.exponent + 1) < 0.02
    return ok, f"coefficient error {fit.relative_error:.3e}, slope {fit.exponent:.4f}"


def _young(rng):
    u = rng.uniform(0.0, 10.0, 1000)
    I = rng.uniform(0.0, 10.0, 1000)
    q = float(rng.uniform(0.05, 0.95))
    lhs = I * u**q
    rhs = (1 - q) * I ** (1 / (1 - q)) + q * u
    excess = float(np.max((lhs - rhs) / np.maximum(rhs, 1e-300)))
    return excess <= 1e-10, f"max relative excess {excess:.3e}"


REGISTRY = {
    "exponents": [("classifier_oracle", _classifier_oracle), ("tau_closed_form", _tau_closed_form),
                  ("tau_monotone", _tau_monotone), ("partition", _partition)],
    "green": [("constant_preserved", _green_constant), ("monotone_positive", _green_monotone),
              ("gamma0_origin_coefficient", _gamma0_origin)],
    "riesz": [("indicator_at_origin", _riesz_indicator), ("asymptotic_error_slope", _riesz_slope),
              ("kernel_symmetry_homogeneity", _riesz_symmetry), ("nonnegative_weights", _riesz_positive)],
    "solver": [("monotone_convergence", _solver_monotone), ("fixed_point_residual", _solver_fixed_point),
               ("nonexistence_probe", _solver_nonexistence)],
    "analysis": [("linear_comparison", _linear_comparison), ("origin_of_gamma0", _origin_gamma0),
                 ("young_inequality", _young)],
}


def run_suite(name: str, seed: int = 0):
    """Yield ``(suite, property, ok, detail)`` for the requested suite or ``"all"``."""
    names = SUITES if name == "all" else (name,)
    for suite in names:
        if suite not in REGISTRY:
            raise KeyError(suite)
        for prop, fn in REGISTRY[suite]:
            rng = np.random.default_rng([seed, len(prop)])
            try:
                ok, detail = fn(rng)
            except Exception as exc:  # a crash is a failed property, not a crashed suite
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            yield suite, prop, bool(ok), detail
