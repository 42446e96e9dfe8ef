"""Minimal singular solutions by monotone iteration.

The iteration is ``v_0 = k Gamma_0``, ``v_n = G[I_alpha[v_{n-1}^p] v_{n-1}^q] + k Gamma_0``,
where ``G`` is the discrete ``(-Lap + 1)^{-1}`` and the singular part ``k Gamma_0``
is added analytically.  Every ingredient of the discrete map is order preserving
(nonnegative Riesz weights, M-matrix Green operator, endpoint models whose
exponents are fixed and whose coefficients are matched to the end samples), so
the discrete iterates increase monotonically exactly as in the continuous proof.
A supersolution ``w_k = k(phi + a0 varphi)`` caps the sequence for small ``k``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (ConsistencyError, ConstructionError, DivergentRieszError,
                     FitError, KTooLargeError, NumericalError, ParameterError,
                     RegionError, SolverConfigurationError)
from .exponents import (EXISTENCE_WITH_DIRAC, NONEXISTENCE, ProblemParams,
                        TauSequence, classify, tau0, tau_sequence)
from .green import GreenOperator, fundamental_solution
from .grid import (POWER, ZERO, OriginModel, RadialFunction, RadialGrid,
                   TailModel, fit_log_linear)
from .riesz import AngularKernel, build_kernel, riesz_apply

log = logging.getLogger(__name__)

CONVERGED = "Converged"
DIVERGED_RIESZ = "DivergedRiesz"
MAX_ITERATIONS = "MaxIterations"

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500
MONOTONE_SLACK = 1e-12
TOL_SUPER = 1e-3
STALL_RATIO = 0.999
STALL_STEPS = 20
BLOWUP_FACTOR = 1e30
K_RANGE = (1e-8, 1e4)
KSTAR_RATIO = 1.5
A0_LADDER = tuple(2.0**j for j in range(21))


def _require_existence(params: ProblemParams):
    verdict = classify(params).verdict
    if verdict != EXISTENCE_WITH_DIRAC:
        raise RegionError(f"({params.N}, {params.alpha}, {params.p}, {params.q}) is in region {verdict}, "
                          f"not {EXISTENCE_WITH_DIRAC}")


# --- supersolution -----------------------------------------------------------

def tau_interval(params: ProblemParams) -> tuple:
    """Admissible interval for the exponent ``tau`` of the auxiliary profile."""
    N, a = params.N, params.alpha
    return 2.0 - N, min(0.0, 2.0 + a - (N - 2.0) * (params.p + params.q))


def phi_profile(r, N: int, tau: float):
    """``(r^{2-N} + r^tau) exp(-r^2/(2N))`` and its radial Laplacian."""
    r = np.asarray(r, dtype=float)
    E = np.exp(-r**2 / (2.0 * N))
    val = (r ** (2.0 - N) + r**tau) * E

    def lap_term(a):
        # Lap(r^a E) = E [a(a+N-2) r^{a-2} - (2a+N)/N r^a + r^{a+2}/N^2]
        return (a * (a + N - 2.0) * r ** (a - 2.0) - (2.0 * a + N) / N * r**a + r ** (a + 2.0) / N**2) * E

    return val, lap_term(2.0 - N) + lap_term(tau)


def varphi_profile(r, N: int, tau0_: float, r0: float):
    """``(r0 + r)^tau0`` and its radial Laplacian."""
    r = np.asarray(r, dtype=float)
    s = r0 + r
    val = s**tau0_
    lap = tau0_ * (tau0_ - 1.0) * s ** (tau0_ - 2.0) + tau0_ * (N - 1.0) / r * s ** (tau0_ - 1.0)
    return val, lap


@dataclass(frozen=True, eq=False)
class SupersolutionProfile:
    """``w_k = k[phi + a0 varphi]`` together with its validation data."""

    tau: float
    tau0: float
    r0: float
    a0: float
    k: float
    profile: RadialFunction
    laplacian: np.ndarray
    inequality_margin: float
    super_margin: float
    worst_r: float
    tol_super: float = TOL_SUPER

    @property
    def validated(self) -> bool:
        return self.super_margin >= -self.tol_super

    def to_dict(self):
        return {
            "tau": self.tau,
            "tau0": self.tau0,
            "r0": self.r0,
            "a0": self.a0,
            "k": self.k,
            "inequality_margin": self.inequality_margin,
            "super_margin": self.super_margin,
            "worst_r": self.worst_r,
            "validated": self.validated,
        }


def _auxiliary(params: ProblemParams, r):
    lo, hi = tau_interval(params)
    tau = 0.5 * (lo + hi)
    t0 = tau0(params)
    r0 = 2.0 * math.sqrt(t0 * (t0 - 1.0))
    phi, lphi = phi_profile(r, params.N, tau)
    vphi, lvphi = varphi_profile(r, params.N, t0, r0)
    return tau, t0, r0, (phi, lphi), (vphi, lvphi)


def find_a0(params: ProblemParams, grid: RadialGrid, a_seed: float = 1.0) -> float:
    """Smallest ``a0`` on the ladder ``a_seed * 2^j`` satisfying the Laplacian inequality.

    The inequality is ``Lap phi + a0 Lap varphi <= (phi + a0 varphi)/2`` at every node.
    """
    _, _, _, (phi, lphi), (vphi, lvphi) = _auxiliary(params, grid.nodes)
    worst = None
    for step in A0_LADDER:
        a0 = a_seed * step
        gap = 0.5 * (phi + a0 * vphi) - (lphi + a0 * lvphi)
        if np.all(gap >= 0.0):
            return a0
        i = int(np.argmin(gap / (phi + a0 * vphi)))
        worst = (float(grid.nodes[i]), float(gap[i]))
    raise ConstructionError(f"no a0 in the ladder satisfies the Laplacian inequality; worst node r={worst[0]:.6g}",
                            worst_node=worst)


def supersolution_profile(params: ProblemParams, k: float, grid: RadialGrid,
                          kernel: Optional[AngularKernel] = None, a_seed: float = 1.0) -> SupersolutionProfile:
    """``w_k`` with its supersolution margin, without enforcing the margin.

    ``super_margin`` is the nodewise minimum of
    ``(-Lap w + w - I[w^p] w^q) / w``; it is -inf when ``I[w^p]`` diverges.
    """
    _require_existence(params)
    if not k > 0:
        raise ParameterError(f"k must be positive, got {k}")
    if kernel is None:
        kernel = build_kernel(params.N, params.alpha, grid)
    N, p, q = params.N, params.p, params.q
    r = grid.nodes
    a0 = find_a0(params, grid, a_seed)
    tau, t0, r0, (phi, lphi), (vphi, lvphi) = _auxiliary(params, r)
    w = k * (phi + a0 * vphi)
    lap = k * (lphi + a0 * lvphi)
    ineq = 0.5 * (phi + a0 * vphi) - (lphi + a0 * lvphi)
    prof = RadialFunction(grid, w, OriginModel(k, 2.0 - N), TailModel(POWER, k * a0, -t0),
                          {"label": "supersolution"})
    try:
        nonlinear = riesz_apply(prof**p, kernel).values * w**q
        rel = (-lap + w - nonlinear) / w
        worst = int(np.argmin(rel))
        margin = float(rel[worst])
    except DivergentRieszError:
        worst, margin = 0, -math.inf
    return SupersolutionProfile(tau, t0, r0, a0, float(k), prof, lap,
                                float(np.min(ineq / (phi + a0 * vphi))), margin, float(r[worst]))


def build_supersolution(params: ProblemParams, k: float, grid: RadialGrid,
                        kernel: Optional[AngularKernel] = None, tol_super: float = TOL_SUPER,
                        a_seed: float = 1.0) -> SupersolutionProfile:
    """Construct and validate ``w_k``.

    Raises ConstructionError when the ladder is exhausted and KTooLargeError
    when ``-Lap w + w - I[w^p] w^q >= -tol_super * w`` fails at some node.
    """
    sup = supersolution_profile(params, k, grid, kernel, a_seed)
    if sup.super_margin < -tol_super:
        raise KTooLargeError(f"supersolution inequality fails at k={k:.6g}: relative residual "
                             f"{sup.super_margin:.3e} at r={sup.worst_r:.6g}",
                             worst_node=(sup.worst_r, sup.super_margin))
    return sup


# --- iteration ---------------------------------------------------------------

@dataclass(frozen=True)
class IterationState:
    n: int
    delta_sup: float
    monotone_ok: bool
    capped_ok: Optional[bool]
    tail_exponent: Optional[float] = None

    def as_tuple(self):
        return (self.delta_sup, self.monotone_ok, self.capped_ok)


@dataclass(eq=False)
class SolveResult:
    params: ProblemParams
    k: float
    u: RadialFunction
    verdict: str
    iterations: int
    final_delta: float
    diagnostics: list = field(default_factory=list)
    message: str = ""
    supersolution: Optional[SupersolutionProfile] = None
    tol: float = DEFAULT_TOL
    fixed_point_residual: Optional[float] = None

    @property
    def converged(self) -> bool:
        return self.verdict == CONVERGED

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "k": self.k,
            "verdict": self.verdict,
            "iterations": self.iterations,
            "final_delta": self.final_delta,
            "tol": self.tol,
            "fixed_point_residual": self.fixed_point_residual,
            "message": self.message,
            "monotone": all(s.monotone_ok for s in self.diagnostics),
            "capped": None if self.supersolution is None else all(bool(s.capped_ok) for s in self.diagnostics),
            "supersolution": None if self.supersolution is None else self.supersolution.to_dict(),
            "origin_model": self.u.origin.to_dict(),
            "tail_model": self.u.tail.to_dict(),
            "grid": self.u.grid.to_dict(),
        }


class FixedPointMap:
    """The discrete map ``v -> G[I[v^p] v^q] + k Gamma_0``.

    ``tail_mode="pinned"`` fixes every endpoint exponent from the exponent
    arithmetic (the map is then exactly order preserving);
    ``tail_mode="fitted"`` refits the tail of each iterate, which lets the
    iterate drift towards non-integrable tails and is used by the
    nonexistence probe.
    """

    def __init__(self, params: ProblemParams, grid: RadialGrid, kernel: Optional[AngularKernel] = None,
                 tail_mode: str = "pinned"):
        if tail_mode not in ("pinned", "fitted"):
            raise ParameterError(f"unknown tail mode {tail_mode!r}")
        self.params = params
        self.grid = grid
        self.kernel = kernel if kernel is not None else build_kernel(params.N, params.alpha, grid)
        self.tail_mode = tail_mode
        N, a, p, q = params.N, params.alpha, params.p, params.q
        self.k = params.k
        gam = fundamental_solution(N, grid).profile
        self.singular = gam * self.k
        # exponents of every intermediate profile
        self.origin_v = 2.0 - N if self.k > 0 else 0.0
        self.origin_riesz = min(0.0, a + self.origin_v * p)
        self.origin_rhs = self.origin_riesz + self.origin_v * q
        m = -tau0(params)
        riesz_tail = N - a if m * p > N else m * p - a
        self.tail_rhs = riesz_tail + q * m
        self.tail_v = min(m, self.tail_rhs)
        self.riesz_tail = riesz_tail
        self.green = GreenOperator(grid, decay_rate=self.tail_v / grid.r_max,
                                   origin_exponent=min(0.0, self.origin_rhs + 2.0))

    def make_iterate(self, values) -> RadialFunction:
        values = np.asarray(values, dtype=float)
        if not np.any(values > 0.0):
            return RadialFunction(self.grid, values, OriginModel(0.0, 0.0), TailModel(ZERO))
        if self.tail_mode == "pinned":
            return RadialFunction.from_values(self.grid, values, origin_exponent=self.origin_v,
                                              tail_exponent=self.tail_v)
        return RadialFunction.from_values(self.grid, values, origin_exponent=self.origin_v)

    def nonlinearity(self, v: RadialFunction) -> RadialFunction:
        """``I[v^p] v^q`` with consistent endpoint models."""
        p, q = self.params.p, self.params.q
        vp = v**p
        if self.tail_mode == "pinned":
            I = riesz_apply(vp, self.kernel, origin_exponent=self.origin_riesz, tail_exponent=self.riesz_tail)
        else:
            I = riesz_apply(vp, self.kernel, origin_exponent=self.origin_riesz)
        return I * v**q

    def __call__(self, v: RadialFunction) -> RadialFunction:
        f = self.nonlinearity(v)
        if self.tail_mode == "pinned":
            u = self.green.solve_values(f)
        else:
            u = GreenOperator(self.grid, origin_exponent=self.green.origin_exponent).solve_values(f)
        u = np.maximum(u, 0.0) + self.singular.values
        return self.make_iterate(u)


def _relative_delta(new, old) -> float:
    scale = np.maximum(np.abs(new), np.finfo(float).tiny)
    return float(np.max(np.abs(new - old) / scale))


def _interior_tail_exponent(v: RadialFunction) -> Optional[float]:
    g = v.grid
    idx = g.index_window(g.r_max / 2.0 / 10**1.5, g.r_max / 2.0)
    vals = v.values[idx]
    if vals.size < 8 or np.any(vals <= 0.0):
        return None
    try:
        return -fit_log_linear(g.nodes[idx], vals).exponent
    except FitError:
        return None


def iterate(params: ProblemParams, k: Optional[float] = None, grid: Optional[RadialGrid] = None,
            tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, *,
            kernel: Optional[AngularKernel] = None, v0: Optional[RadialFunction] = None,
            supersolution="auto", tail_mode: str = "pinned", check_region: bool = True,
            keep_iterates: bool = False) -> SolveResult:
    """Run the monotone iteration for the minimal solution with Dirac mass ``k``.

    ``supersolution``: "auto" builds ``w_k`` for the cap check (recording
    whether it validates as a supersolution at this ``k``), None skips it, or
    pass a prebuilt SupersolutionProfile.
    ``v0`` replaces the starting profile ``k Gamma_0`` (it must lie between
    ``k Gamma_0`` and the solution for the sequence to stay monotone).
    """
    from .grid import make_grid

    if k is not None:
        params = params.with_k(k)
    if check_region:
        _require_existence(params)
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be >= 1, got {max_iter}")
    grid = grid if grid is not None else make_grid(N=params.N)
    fmap = FixedPointMap(params, grid, kernel, tail_mode=tail_mode)
    kk = params.k

    if supersolution == "auto":
        sup = None
        if kk > 0 and check_region:
            try:
                sup = supersolution_profile(params, kk, grid, fmap.kernel)
            except ConstructionError as exc:
                log.info("no supersolution profile at k=%g: %s", kk, exc)
    else:
        sup = supersolution
    cap = sup.profile.values if sup is not None else None

    v = v0 if v0 is not None else fmap.make_iterate(fmap.singular.values)
    v_start = v.values
    blowup = BLOWUP_FACTOR * max(float(np.max(v_start)), 1.0)
    diagnostics = []
    iterates = [v] if keep_iterates else None
    if kk == 0.0 and v0 is None:
        u = fmap.make_iterate(np.zeros(grid.n))
        res = SolveResult(params, kk, u, CONVERGED, 0, 0.0, [], "k = 0: the trivial solution u = 0",
                          sup, tol, 0.0)
        res.u.meta["trivial"] = True
        return res

    verdict, message = MAX_ITERATIONS, f"no convergence within {max_iter} iterations"
    delta = math.inf
    stall = 0
    n = 0
    for n in range(1, max_iter + 1):
        try:
            with np.errstate(over="ignore"):
                new = fmap(v)
        except DivergentRieszError as exc:
            verdict, message = DIVERGED_RIESZ, str(exc)
            n -= 1
            break
        except (ParameterError, NumericalError) as exc:
            # overflow inside the map after sustained growth is the same blow-up
            if n > 1 and np.max(v.values) > np.max(v_start):
                verdict, message = DIVERGED_RIESZ, f"iterate blew up: {exc}"
                n -= 1
                break
            raise
        if not np.all(np.isfinite(new.values)) or np.max(new.values) > blowup:
            verdict, message = DIVERGED_RIESZ, "iterate escaped every polynomial bound (blow-up)"
            break
        drop = v.values - new.values
        monotone = bool(np.all(drop <= MONOTONE_SLACK * np.abs(v.values)))
        if not monotone and v0 is None:
            i = int(np.argmax(drop / np.maximum(np.abs(v.values), np.finfo(float).tiny)))
            raise ConsistencyError(f"iterate {n} decreased at r={grid.nodes[i]:.6g} by {drop[i]:.3e}; "
                                   "the discrete map is not order preserving")
        capped = None if cap is None else bool(np.all(new.values <= cap * (1.0 + 1e-12)))
        new_delta = _relative_delta(new.values, v.values)
        tail_exp = _interior_tail_exponent(new)
        diagnostics.append(IterationState(n, new_delta, monotone, capped, tail_exp))
        if keep_iterates:
            iterates.append(new)
        stall = stall + 1 if delta < math.inf and new_delta > STALL_RATIO * delta else 0
        delta = new_delta
        v = new
        if delta < tol:
            verdict, message = CONVERGED, f"relative sup-delta {delta:.3e} < tol {tol:.1e}"
            break
        if tail_exp is not None and tail_exp * params.p <= params.alpha and params.k > 0:
            verdict = DIVERGED_RIESZ
            message = (f"fitted tail exponent {tail_exp:.4g} gives p*sigma = {tail_exp * params.p:.4g} "
                       f"<= alpha = {params.alpha:.4g}: I_alpha[v^p] diverges")
            break
        if stall >= STALL_STEPS:
            verdict, message = MAX_ITERATIONS, f"stalled: delta ratio > {STALL_RATIO} for {STALL_STEPS} steps"
            break
    result = SolveResult(params, kk, v, verdict, n, delta, diagnostics, message, sup, tol)
    if verdict == CONVERGED:
        result.fixed_point_residual = fixed_point_residual(v, fmap)
    if keep_iterates:
        result.iterates = iterates
    return result


def fixed_point_residual(u: RadialFunction, fmap: FixedPointMap) -> float:
    """``sup |u - G[I[u^p]u^q] - k Gamma_0| / u`` over the nodes."""
    return _relative_delta(u.values, fmap(u).values)


def equation_residual(result: SolveResult, kernel: Optional[AngularKernel] = None) -> np.ndarray:
    """Nodewise ``(-Lap + 1)(u - k Gamma_0) - I[u^p]u^q`` relative to ``I[u^p]u^q``.

    The singular part is removed analytically, so no Dirac mass is discretised.
    """
    fmap = FixedPointMap(result.params, result.u.grid, kernel)
    f = fmap.nonlinearity(result.u)
    regular = result.u.values - fmap.singular.values
    lhs = fmap.green.operator(regular, f)
    scale = np.maximum(f.values, np.finfo(float).tiny)
    return (lhs - f.values) / scale


# --- k* bracket --------------------------------------------------------------

@dataclass(frozen=True)
class KStarBracket:
    k_lo: float
    k_hi: float
    open_above: bool
    probes: tuple

    def __iter__(self):
        return iter((self.k_lo, self.k_hi))

    def to_dict(self):
        return {
            "k_lo": self.k_lo,
            "k_hi": self.k_hi if math.isfinite(self.k_hi) else "infinite",
            "open_above": self.open_above,
            "probes": [list(x) for x in self.probes],
        }


def estimate_kstar(params: ProblemParams, grid: Optional[RadialGrid] = None, *,
                   kernel: Optional[AngularKernel] = None, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER, k_range=K_RANGE,
                   ratio: float = KSTAR_RATIO) -> KStarBracket:
    """Geometric bisection for the largest Dirac mass with a convergent iteration.

    The bracket is a property of the grid and tolerances; it is not the exact
    threshold of the continuous problem.
    """
    from .grid import make_grid

    _require_existence(params)
    grid = grid if grid is not None else make_grid(N=params.N)
    kernel = kernel if kernel is not None else build_kernel(params.N, params.alpha, grid)
    probes = []

    def ok(k):
        res = iterate(params, k, grid, tol, max_iter, kernel=kernel, supersolution=None)
        probes.append((k, res.verdict, res.iterations))
        return res.converged

    lo, hi = k_range
    if not ok(lo):
        raise SolverConfigurationError(f"iteration does not converge even at k={lo:g}")
    if ok(hi):
        return KStarBracket(hi, math.inf, True, tuple(probes))
    while hi / lo > ratio:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return KStarBracket(lo, hi, False, tuple(probes))


# --- nonexistence ------------------------------------------------------------

@dataclass(frozen=True)
class NonexistenceReport:
    params: ProblemParams
    sequence: TauSequence
    j0: Optional[int]
    divergence_value: Optional[float]
    certified: bool
    iteration_verdict: str
    iteration_message: str
    iterations: int

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "tau_sequence": self.sequence.to_dict(),
            "j0": self.j0,
            "divergence_value": self.divergence_value,
            "certified": self.certified,
            "iteration_verdict": self.iteration_verdict,
            "iteration_message": self.iteration_message,
            "iterations": self.iterations,
        }


def nonexistence_probe(params: ProblemParams, grid: Optional[RadialGrid] = None, *, k: float = 1.0,
                       max_iter: int = DEFAULT_MAX_ITER, kernel: Optional[AngularKernel] = None) -> NonexistenceReport:
    """Certify ``alpha + tau_{j0} p >= 0`` and run the iteration defensively.

    The iteration refits the tail of every iterate, so growth of the lower
    bound exponents shows up as a tail that ``I_alpha`` can no longer integrate.
    """
    from .grid import make_grid

    verdict = classify(params).verdict
    if verdict != NONEXISTENCE:
        raise RegionError(f"nonexistence probe called in region {verdict}")
    seq = tau_sequence(params)
    div = seq.divergence_value()
    certified = div is not None and div >= 0.0
    grid = grid if grid is not None else make_grid(N=params.N)
    res = iterate(params, k if params.k == 0 else params.k, grid, DEFAULT_TOL, max_iter, kernel=kernel,
                  supersolution=None, tail_mode="fitted", check_region=False)
    return NonexistenceReport(params, seq, seq.j0, div, certified, res.verdict, res.message, res.iterations)
