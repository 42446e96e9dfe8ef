"""Log-uniform radial grids, radial profiles and their quadrature.

A profile lives on ``[r_min, r_max]`` as nodal samples and is continued to
``(0, r_min)`` and ``(r_max, inf)`` by power-law (or exponential) models, so
integrals over all of R^N are computed as a finite quadrature plus closed-form
endpoint pieces.

Between nodes a profile is interpolated by local cubics in ``t = log r``.
The same interpolant underlies :func:`integrate` and the Riesz quadrature.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc

from .errors import DivergentIntegralError, FitError, ParameterError

ENDPOINT_FIT_NODES = 16
TOL_MODEL = 0.05
MIN_FIT_NODES = 8


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / gamma_fn(N / 2.0)


def ball_volume(N: int, radius: float = 1.0) -> float:
    return math.pi ** (N / 2.0) / gamma_fn(N / 2.0 + 1.0) * radius**N


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# Local cubic interpolation on a cell [t_c, t_c + h] in the coordinate
# s = (t - t_c)/h.  Each stencil lists the node offsets (relative to c) and
# the matrix mapping stencil values to monomial coefficients of s^0..s^3.
def _lagrange_monomials(offsets):
    V = np.vander(np.asarray(offsets, dtype=float), 4, increasing=True)
    # row k of inv(V).T gives the monomial coefficients of the k-th basis polynomial
    return np.linalg.inv(V)  # coef[p, k]


STENCIL_FIRST = (0, 1, 2, 3)
STENCIL_INTERIOR = (-1, 0, 1, 2)
STENCIL_LAST = (-2, -1, 0, 1)
_L = {
    STENCIL_FIRST: _lagrange_monomials(STENCIL_FIRST),
    STENCIL_INTERIOR: _lagrange_monomials(STENCIL_INTERIOR),
    STENCIL_LAST: _lagrange_monomials(STENCIL_LAST),
}


def cell_stencil(c: int, n: int):
    """Stencil used to interpolate on cell ``c`` of a grid with ``n`` nodes."""
    if c == 0:
        return STENCIL_FIRST
    if c == n - 2:
        return STENCIL_LAST
    return STENCIL_INTERIOR


def stencil_matrix(stencil) -> np.ndarray:
    return _L[stencil]


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Log-uniform nodes on ``[r_min, r_max]`` in dimension ``N``."""

    r_min: float
    r_max: float
    n: int
    N: int

    def __post_init__(self):
        if not (math.isfinite(self.r_min) and math.isfinite(self.r_max)):
            raise ParameterError("grid bounds must be finite")
        if not 0.0 < self.r_min < self.r_max:
            raise ParameterError(f"need 0 < r_min < r_max, got ({self.r_min}, {self.r_max})")
        if int(self.n) != self.n or self.n < 16:
            raise ParameterError(f"need at least 16 nodes, got {self.n}")
        if int(self.N) != self.N or self.N < 3:
            raise ParameterError(f"need N >= 3, got {self.N}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "N", int(self.N))

    def __eq__(self, other):
        if not isinstance(other, RadialGrid):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def key(self):
        return (float(self.r_min), float(self.r_max), self.n, self.N)

    @cached_property
    def h(self) -> float:
        """Spacing in ``log r``."""
        return math.log(self.r_max / self.r_min) / (self.n - 1)

    @cached_property
    def t(self) -> np.ndarray:
        t = math.log(self.r_min) + self.h * np.arange(self.n)
        t[-1] = math.log(self.r_max)
        t.setflags(write=False)
        return t

    @cached_property
    def nodes(self) -> np.ndarray:
        r = np.exp(self.t)
        r[0] = self.r_min
        r[-1] = self.r_max
        r.setflags(write=False)
        return r

    @property
    def omega(self) -> float:
        return sphere_area(self.N)

    @cached_property
    def weights(self) -> np.ndarray:
        """Weights for ``integral f dx`` over the shell ``r_min < |x| < r_max``."""
        w = _cubic_weights(self.n, self.h, self.N) * np.exp(self.N * self.t)
        w *= self.omega
        w.setflags(write=False)
        return w

    def index_window(self, lo: float, hi: float) -> np.ndarray:
        r = self.nodes
        tol = 1e-12
        return np.nonzero((r >= lo * (1 - tol)) & (r <= hi * (1 + tol)))[0]

    def digest(self) -> str:
        text = "|".join(_fmt(x) for x in (self.r_min, self.r_max)) + f"|{self.n}|{self.N}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"r_min": _fmt(self.r_min), "r_max": _fmt(self.r_max), "n": self.n, "N": self.N}

    @classmethod
    def from_dict(cls, d) -> "RadialGrid":
        return cls(float(d["r_min"]), float(d["r_max"]), int(d["n"]), int(d["N"]))

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid(self.r_min, self.r_max, factor * (self.n - 1) + 1, self.N)


def make_grid(r_min: float = 1e-4, r_max: float = 1e2, n: int = 2048, N: int = 3) -> RadialGrid:
    return RadialGrid(float(r_min), float(r_max), n, N)


@lru_cache(maxsize=32)
def _cubic_weights(n: int, h: float, N: int) -> np.ndarray:
    """Per-node weights of the cubic product rule for ``int g(t) e^{N t} dt``.

    Returned without the ``e^{N t_c}`` factor of each node, i.e. the caller
    multiplies by ``exp(N t_i)``; the rule is exact for cubics times e^{N t}.
    """
    xs, ws = np.polynomial.legendre.leggauss(12)
    s = 0.5 * (xs + 1.0)
    ws = 0.5 * ws
    mom = np.array([h * np.sum(ws * s**p * np.exp(N * h * s)) for p in range(4)])
    w = np.zeros(n)
    for c in range(n - 1):
        st = cell_stencil(c, n)
        contrib = mom @ stencil_matrix(st)
        for k, off in enumerate(st):
            j = c + off
            # weight for node j in units of exp(N t_j): shift the cell factor
            w[j] += contrib[k] * math.exp(N * h * (c - j))
    return w


# --- endpoint models ---------------------------------------------------------

@dataclass(frozen=True)
class OriginModel:
    """``f(r) ~ coef * r**exponent`` for ``r < r_min``."""

    coef: float
    exponent: float

    def __call__(self, r):
        return self.coef * np.asarray(r, dtype=float) ** self.exponent

    def to_dict(self):
        return {"coef": _fmt(self.coef), "exponent": _fmt(self.exponent)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["coef"]), float(d["exponent"]))


POWER = "power"
EXPONENTIAL = "exponential"
ZERO = "zero"


@dataclass(frozen=True)
class TailModel:
    """Continuation for ``r > r_max``.

    ``power``: ``coef * r**-exponent``; ``exponential``: ``coef * exp(-exponent * r)``;
    ``zero``: identically zero.
    """

    kind: str
    coef: float = 0.0
    exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in (POWER, EXPONENTIAL, ZERO):
            raise ParameterError(f"unknown tail kind {self.kind!r}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == POWER:
            return self.coef * r ** (-self.exponent)
        if self.kind == EXPONENTIAL:
            return self.coef * np.exp(-self.exponent * r)
        return np.zeros_like(r)

    def log_slope(self, r: float) -> float:
        """``d log f / d log r`` of the model at ``r``."""
        if self.kind == POWER:
            return -self.exponent
        if self.kind == EXPONENTIAL:
            return -self.exponent * r
        return -math.inf

    def as_power(self, r_max: float) -> "TailModel":
        """Power law with the same value and log-slope at ``r_max``."""
        if self.kind != EXPONENTIAL:
            return self
        sigma = self.exponent * r_max
        value = self.coef * math.exp(-self.exponent * r_max)
        return TailModel(POWER, value * r_max**sigma, sigma)

    def to_dict(self):
        return {"kind": self.kind, "coef": _fmt(self.coef), "exponent": _fmt(self.exponent)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], float(d["coef"]), float(d["exponent"]))


# --- power-law fitting -------------------------------------------------------

@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    residual: float
    window: tuple
    nodes: int

    def __iter__(self):
        return iter((self.exponent, self.prefactor, self.residual))

    def to_dict(self):
        return {
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "residual": self.residual,
            "window": list(self.window),
            "nodes": self.nodes,
        }


def fit_log_linear(r, y, min_nodes: int = MIN_FIT_NODES) -> PowerLawFit:
    """Least-squares fit of ``log y = log A + m log r``."""
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    if r.size < min_nodes:
        raise FitError(f"need at least {min_nodes} nodes in the fit window, got {r.size}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0.0):
        raise FitError("power-law fit needs strictly positive finite samples")
    x = np.log(r)
    ly = np.log(y)
    xm = x.mean()
    dx = x - xm
    slope = float(np.dot(dx, ly - ly.mean()) / np.dot(dx, dx))
    intercept = float(ly.mean() - slope * xm)
    resid = ly - (intercept + slope * x)
    rms = float(np.sqrt(np.mean(resid**2)))
    return PowerLawFit(slope, math.exp(intercept), rms, (float(r[0]), float(r[-1])), int(r.size))


def fit_power_law(f: "RadialFunction", window) -> PowerLawFit:
    """Fit ``f ~ A r^m`` over the grid nodes inside ``window``.

    Returns ``(exponent m, prefactor A, rms log-residual)``.
    """
    lo, hi = window
    g = f.grid
    if lo < g.r_min * (1 - 1e-12) or hi > g.r_max * (1 + 1e-12) or lo >= hi:
        raise FitError(f"window {window} not inside [{g.r_min}, {g.r_max}]")
    idx = g.index_window(lo, hi)
    return fit_log_linear(g.nodes[idx], f.values[idx])


def _fit_origin(grid, values) -> OriginModel:
    m = ENDPOINT_FIT_NODES
    head = values[:m]
    if np.all(head > 0.0):
        fit = fit_log_linear(grid.nodes[:m], head)
        return _match_origin(grid, values, fit.exponent)
    if values[0] == 0.0:
        return OriginModel(0.0, 0.0)
    return _match_origin(grid, values, 0.0)


def _fit_tail(grid, values) -> TailModel:
    m = ENDPOINT_FIT_NODES
    tail = values[-m:]
    if np.all(tail == 0.0):
        return TailModel(ZERO)
    if not np.all(tail > 0.0):
        return TailModel(ZERO) if values[-1] == 0.0 else _match_tail(grid, values, 0.0)
    fit_end = fit_log_linear(grid.nodes[-m:], tail)
    # a power law has constant log-slope; exp(-a r) doubles it when r doubles
    j = int(np.searchsorted(grid.nodes, grid.r_max / 2.0))
    if j >= m and np.all(values[j - m + 1:j + 1] > 0.0):
        fit_half = fit_log_linear(grid.nodes[j - m + 1:j + 1], values[j - m + 1:j + 1])
        if fit_end.exponent < -1.0 and fit_end.exponent < 1.5 * fit_half.exponent:
            rate = -fit_end.exponent / grid.r_max
            coef = values[-1] * math.exp(rate * grid.r_max)
            if math.isfinite(coef):
                return TailModel(EXPONENTIAL, coef, rate)
    return _match_tail(grid, values, -fit_end.exponent)


def _match_origin(grid, values, exponent) -> OriginModel:
    return OriginModel(float(values[0]) / grid.r_min**exponent, float(exponent))


def _match_tail(grid, values, exponent) -> TailModel:
    if values[-1] == 0.0:
        return TailModel(ZERO)
    return TailModel(POWER, float(values[-1]) * grid.r_max**exponent, float(exponent))


# --- radial functions --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadialFunction:
    """Samples of a nonnegative radial profile plus endpoint continuations."""

    grid: RadialGrid
    values: np.ndarray
    origin: OriginModel
    tail: TailModel
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ParameterError(f"expected {self.grid.n} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("profile samples must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, grid, values, origin=None, tail=None, *,
                    origin_exponent=None, tail_exponent=None, meta=None) -> "RadialFunction":
        """Build a profile, fitting or matching endpoint models as requested.

        An explicit model wins; otherwise a given exponent is used with the
        coefficient matched to the end sample; otherwise the model is fitted
        on the 16 end nodes.
        """
        v = np.asarray(values, dtype=float)
        if origin is None:
            origin = _fit_origin(grid, v) if origin_exponent is None else _match_origin(grid, v, origin_exponent)
        if tail is None:
            tail = _fit_tail(grid, v) if tail_exponent is None else _match_tail(grid, v, tail_exponent)
        return cls(grid, v, origin, tail, dict(meta or {}))

    @classmethod
    def from_callable(cls, grid, func, **kw) -> "RadialFunction":
        return cls.from_values(grid, func(grid.nodes), **kw)

    @classmethod
    def indicator(cls, grid, radius: float = 1.0) -> "RadialFunction":
        """Indicator of the ball of given radius, sampled as log-cell averages.

        Node values are the fraction of the dual cell ``[t_i - h/2, t_i + h/2]``
        lying inside the ball, which keeps the jump second-order accurate.
        """
        if not grid.r_min < radius < grid.r_max:
            raise ParameterError("ball radius must lie strictly inside the grid")
        frac = (math.log(radius) - (grid.t - 0.5 * grid.h)) / grid.h
        v = np.clip(frac, 0.0, 1.0)
        return cls(grid, v, OriginModel(1.0, 0.0), TailModel(ZERO), {"label": f"indicator(B_{radius:g})"})

    def map_values(self, values, **kw) -> "RadialFunction":
        return RadialFunction.from_values(self.grid, values, **kw)

    def __pow__(self, a: float) -> "RadialFunction":
        a = float(a)
        o = OriginModel(self.origin.coef**a, self.origin.exponent * a)
        if self.tail.kind == POWER:
            t = TailModel(POWER, self.tail.coef**a, self.tail.exponent * a)
        elif self.tail.kind == EXPONENTIAL:
            t = TailModel(EXPONENTIAL, self.tail.coef**a, self.tail.exponent * a)
        else:
            t = self.tail
        return RadialFunction(self.grid, self.values**a, o, t)

    def __mul__(self, other) -> "RadialFunction":
        if isinstance(other, RadialFunction):
            self._check_grid(other)
            o = OriginModel(self.origin.coef * other.origin.coef,
                            self.origin.exponent + other.origin.exponent)
            return RadialFunction(self.grid, self.values * other.values, o, _mul_tail(self.tail, other.tail, self.grid.r_max))
        c = float(other)
        if c < 0:
            raise ParameterError("profiles are nonnegative; cannot scale by a negative number")
        t = TailModel(self.tail.kind, self.tail.coef * c, self.tail.exponent)
        return RadialFunction(self.grid, self.values * c, OriginModel(self.origin.coef * c, self.origin.exponent), t)

    __rmul__ = __mul__

    def __add__(self, other: "RadialFunction") -> "RadialFunction":
        self._check_grid(other)
        v = self.values + other.values
        a, b = self.origin, other.origin
        if a.exponent == b.exponent:
            origin = OriginModel(a.coef + b.coef, a.exponent)
        else:
            origin = a if a.exponent < b.exponent else b
            origin = _match_origin(self.grid, v, origin.exponent)
        ta, tb = self.tail, other.tail
        if ta.kind == ZERO:
            tail = tb
        elif tb.kind == ZERO:
            tail = ta
        elif ta.kind == tb.kind and ta.exponent == tb.exponent:
            tail = TailModel(ta.kind, ta.coef + tb.coef, ta.exponent)
        else:
            pa, pb = ta.as_power(self.grid.r_max), tb.as_power(self.grid.r_max)
            tail = _match_tail(self.grid, v, min(pa.exponent, pb.exponent))
        return RadialFunction(self.grid, v, origin, tail)

    def _check_grid(self, other):
        if other.grid != self.grid:
            raise ParameterError("profiles live on different grids")

    def model_mismatch(self) -> dict:
        """Relative jump between each endpoint model and the adjacent sample."""
        g, v = self.grid, self.values
        out = {}
        if v[0] > 0:
            out["origin"] = abs(self.origin(g.r_min) - v[0]) / v[0]
        if self.tail.kind != ZERO and v[-1] > 0:
            out["tail"] = abs(float(self.tail(g.r_max)) - v[-1]) / v[-1]
        return out

    # --- serialisation ---
    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "origin_model": self.origin.to_dict(),
            "tail_model": self.tail.to_dict(),
            "values": [_fmt(x) for x in self.values],
        }

    @classmethod
    def from_dict(cls, d) -> "RadialFunction":
        grid = RadialGrid.from_dict(d["grid"])
        return cls(grid, np.array([float(x) for x in d["values"]]),
                   OriginModel.from_dict(d["origin_model"]), TailModel.from_dict(d["tail_model"]))

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "RadialFunction":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "value"])
            for r, v in zip(self.grid.nodes, self.values):
                w.writerow([_fmt(r), _fmt(v)])


def read_csv_profile(path):
    """Return ``(r, values)`` arrays from a CSV written by :meth:`RadialFunction.to_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["r", "value"]:
        raise ParameterError(f"unexpected CSV header {rows[0]}")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]


def _mul_tail(a: TailModel, b: TailModel, r_max: float) -> TailModel:
    if a.kind == ZERO or b.kind == ZERO:
        return TailModel(ZERO)
    if a.kind == POWER and b.kind == POWER:
        return TailModel(POWER, a.coef * b.coef, a.exponent + b.exponent)
    if a.kind == EXPONENTIAL and b.kind == EXPONENTIAL:
        return TailModel(EXPONENTIAL, a.coef * b.coef, a.exponent + b.exponent)
    e, p = (a, b) if a.kind == EXPONENTIAL else (b, a)
    # exp(-a r) r^-s as a pure exponential matching value and slope at r_max
    rate = e.exponent + p.exponent / r_max
    value = float(e(r_max)) * float(p(r_max))
    return TailModel(EXPONENTIAL, value * math.exp(rate * r_max), rate)


# --- integration -------------------------------------------------------------

def origin_mass(model: OriginModel, r_min: float, N: int) -> float:
    """``int_{|x|<r_min} c |x|^s dx``."""
    if model.coef == 0.0:
        return 0.0
    e = model.exponent + N
    if e <= 0.0:
        raise DivergentIntegralError(
            f"origin exponent {model.exponent} <= -N = {-N}: not locally integrable",
            exponent=model.exponent, where="origin")
    return sphere_area(N) * model.coef * r_min**e / e


def tail_mass(model: TailModel, r_max: float, N: int) -> float:
    """``int_{|x|>r_max}`` of the tail continuation."""
    if model.kind == ZERO or model.coef == 0.0:
        return 0.0
    if model.kind == POWER:
        e = model.exponent - N
        if e <= 0.0:
            raise DivergentIntegralError(
                f"tail exponent {model.exponent} <= N = {N}: not integrable at infinity",
                exponent=model.exponent, where="tail")
        return sphere_area(N) * model.coef * r_max ** (-e) / e
    # exp(-a r) r^{N-1}: leading term of the incomplete gamma function
    a = model.exponent
    if a <= 0.0:
        raise DivergentIntegralError("exponential tail with nonpositive rate", exponent=a, where="tail")
    val = model.coef * gammaincc(N, a * r_max) * gamma_fn(N) / a**N
    return sphere_area(N) * float(val)


def integrate(f: RadialFunction) -> float:
    """``int_{R^N} f dx``: quadrature on the grid plus endpoint model pieces."""
    g = f.grid
    core = float(np.dot(g.weights, f.values))
    return core + origin_mass(f.origin, g.r_min, g.N) + tail_mass(f.tail, g.r_max, g.N)
