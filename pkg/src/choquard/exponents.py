"""Exponent arithmetic for -Lap u + u = I_alpha[u^p] u^q.

Everything here is closed-form: the bootstrap sequence of lower-bound
exponents, the region classifier and the predicted decay law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from .errors import ParameterError, RegionError

NONEXISTENCE = "Nonexistence"
REMOVABLE_ONLY = "RemovableOnly"
EXISTENCE_WITH_DIRAC = "ExistenceWithDirac"
OUTSIDE = "Outside"

DEFAULT_EPS_BOUNDARY = 1e-9
DEFAULT_MAX_J = 64


@dataclass(frozen=True)
class ProblemParams:
    """One equation instance ``(N, alpha, p, q, k)``."""

    N: int
    alpha: float
    p: float
    q: float
    k: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ParameterError(f"N must be an integer >= 3, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        for name in ("alpha", "p", "q", "k"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise ParameterError(f"{name} must be finite, got {val}")
            object.__setattr__(self, name, val)
        if not 0.0 < self.alpha < self.N:
            raise ParameterError(f"alpha must lie in (0, N) = (0, {self.N}), got {self.alpha}")
        if not self.p > 0.0:
            raise ParameterError(f"p must be positive, got {self.p}")
        if not 0.0 < self.q < 1.0:
            raise ParameterError(f"q must lie in (0, 1), got {self.q}")
        if self.k < 0.0:
            raise ParameterError(f"k must be nonnegative, got {self.k}")

    def with_k(self, k: float) -> "ProblemParams":
        return replace(self, k=k)

    def to_dict(self) -> dict:
        return {"N": self.N, "alpha": self.alpha, "p": self.p, "q": self.q, "k": self.k}


@dataclass(frozen=True)
class TauSequence:
    tau0: float
    taus: tuple
    j0: Optional[int]
    threshold: float
    limit: float
    ratio: float
    alpha: float
    p: float

    @property
    def crossed(self) -> bool:
        return self.j0 is not None

    def divergence_value(self) -> Optional[float]:
        """``alpha + tau_{j0} p``, or None when the threshold was never crossed."""
        if self.j0 is None:
            return None
        return self.alpha + self.taus[self.j0] * self.p

    def to_dict(self) -> dict:
        return {
            "tau0": self.tau0,
            "taus": list(self.taus),
            "j0": self.j0,
            "threshold": self.threshold,
            "limit": self.limit if math.isfinite(self.limit) else "infinite",
            "ratio": self.ratio,
            "divergence_value": self.divergence_value(),
        }


@dataclass(frozen=True)
class RegionVerdict:
    verdict: str
    flags: dict
    margins: dict
    boundary: bool
    eps_boundary: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "flags": dict(self.flags),
            "margins": dict(self.margins),
            "boundary": self.boundary,
            "eps_boundary": self.eps_boundary,
        }


@dataclass(frozen=True)
class DecayPrediction:
    exponent: float
    prefactor_rule: str
    regime: Optional[str]
    origin_exponent: float
    origin_coefficient_rule: str = "c_N*k"

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "prefactor_rule": self.prefactor_rule,
            "regime": self.regime,
            "origin_exponent": self.origin_exponent,
            "origin_coefficient_rule": self.origin_coefficient_rule,
        }


def tau0(params: ProblemParams) -> float:
    """Decay exponent of the universal lower bound ``u >= b0 |x|^tau0``."""
    N, alpha, q = params.N, params.alpha, params.q
    return -max((N - alpha) / (1.0 - q), N - 2.0)


def tau_step(params: ProblemParams, prev: float) -> float:
    return params.alpha / (1.0 - params.q) + params.p / (1.0 - params.q) * prev


def tau_closed_form(params: ProblemParams, j: int) -> float:
    """``tau_j`` from the geometric partial sum of the increments."""
    t0 = tau0(params)
    t1 = tau_step(params, t0)
    rho = params.p / (1.0 - params.q)
    if j == 0:
        return t0
    if abs(rho - 1.0) < 1e-15:
        partial = float(j)
    else:
        partial = (1.0 - rho**j) / (1.0 - rho)
    return t0 + partial * (t1 - t0)


def tau_sequence(params: ProblemParams, max_j: int = DEFAULT_MAX_J) -> TauSequence:
    """Iterate the bootstrap until ``tau_j >= -alpha/p`` or ``max_j`` steps.

    ``j0 = 0`` when ``tau0`` already sits above the threshold; ``j0`` is None
    when the threshold is not reached within ``max_j`` steps.
    """
    if max_j < 1:
        raise ParameterError(f"max_j must be >= 1, got {max_j}")
    threshold = -params.alpha / params.p
    taus = [tau0(params)]
    j0 = 0 if taus[0] >= threshold else None
    while j0 is None and len(taus) <= max_j:
        taus.append(tau_step(params, taus[-1]))
        if taus[-1] >= threshold:
            j0 = len(taus) - 1
    s = params.p + params.q
    limit = params.alpha / (1.0 - s) if s < 1.0 else math.inf
    return TauSequence(
        tau0=taus[0],
        taus=tuple(taus),
        j0=j0,
        threshold=threshold,
        limit=limit,
        ratio=params.p / (1.0 - params.q),
        alpha=params.alpha,
        p=params.p,
    )


def margins(params: ProblemParams) -> dict:
    """Signed distances to every inequality boundary used by the classifier.

    Each margin is positive on the side where the named strict inequality holds.
    """
    N, a, p, q = params.N, params.alpha, params.p, params.q
    return {
        "weighted_sum_below_one": 1.0 - ((1.0 - a / N) * p + q),
        "sum_below_lower_critical": 1.0 + a / (N - 2.0) - (p + q),
        "sum_below_upper_critical": (N + a) / (N - 2.0) - (p + q),
        "p_below_serrin": N / (N - 2.0) - p,
    }


def condition_flags(params: ProblemParams) -> dict:
    N, a, p, q = params.N, params.alpha, params.p, params.q
    weighted = (1.0 - a / N) * p + q
    s = p + q
    lower = 1.0 + a / (N - 2.0)
    upper = (N + a) / (N - 2.0)
    serrin = N / (N - 2.0)
    nonexist_q = weighted < 1.0 and s < lower
    cond_12 = weighted >= 1.0 or s >= lower
    cond_13 = s >= upper or p >= serrin
    cond_14 = s < upper and p < serrin
    regime_16 = weighted > 1.0 and s < upper
    regime_19 = weighted <= 1.0 and lower <= s < upper
    existence = p < serrin and 0.0 < q < 1.0 and cond_12 and s < upper
    return {
        "nonexist_q": nonexist_q,
        "cond_12": cond_12,
        "cond_13": cond_13,
        "cond_14": cond_14,
        "regime_16": regime_16,
        "regime_19": regime_19,
        "existence_hypotheses": existence,
    }


def classify(params: ProblemParams, eps_boundary: float = DEFAULT_EPS_BOUNDARY) -> RegionVerdict:
    """Region verdict for ``params``.

    Flags use the exact strict/non-strict form of every inequality; points
    within ``eps_boundary`` of any boundary are flagged but keep their verdict.
    """
    flags = condition_flags(params)
    m = margins(params)
    if flags["nonexist_q"]:
        verdict = NONEXISTENCE
    elif flags["cond_12"] and flags["cond_13"]:
        verdict = REMOVABLE_ONLY
    elif flags["existence_hypotheses"]:
        verdict = EXISTENCE_WITH_DIRAC
    else:
        verdict = OUTSIDE
    boundary = any(abs(v) < eps_boundary for v in m.values())
    return RegionVerdict(verdict, flags, m, boundary, eps_boundary)


def predicted_decay(params: ProblemParams) -> DecayPrediction:
    """Decay law at infinity and singular law at the origin of ``u_k``."""
    region = classify(params)
    if region.verdict != EXISTENCE_WITH_DIRAC:
        raise RegionError(f"no decay law outside the existence region (verdict {region.verdict})")
    N, a, q = params.N, params.alpha, params.q
    if region.flags["regime_16"]:
        return DecayPrediction((N - a) / (1.0 - q), "L1NormPower", "1.6", N - 2.0)
    if region.flags["regime_19"]:
        return DecayPrediction(max(N - 2.0, (N - a) / (1.0 - q)), "BoundedByK", "1.9", N - 2.0)
    return DecayPrediction(-tau0(params), "None", None, N - 2.0)
