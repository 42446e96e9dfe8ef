"""Radial Riesz potentials ``I_alpha[f](x) = int f(y) |x-y|^{alpha-N} dy``.

For radial ``f`` the potential reduces to
``I[f](r) = int_0^inf f(s) kappa(r, s) s^{N-1} ds`` with the angular kernel
``kappa(r, s) = int_{S^{N-1}} |r e_1 - s w|^{alpha-N} dw``.  The kernel is
homogeneous of degree ``alpha - N``, so in ``t = log s - log r``

    I[f](r) = r^alpha int f(r e^t) G(t) dt,   G(t) = kappa(1, e^t) e^{N t},

a convolution in log coordinates.  On a log-uniform grid the product
integration weights (f interpolated by local cubics, G integrated exactly
per cell) therefore depend only on the index offset, and are computed once
per ``(N, alpha, grid)``.  ``G`` has an integrable singularity at ``t = 0``
when ``alpha <= 1``; the two cells touching it are integrated adaptively.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import digamma, hyp2f1
from scipy.special import gamma as gamma_fn

from .errors import DivergentRieszError, ParameterError
from .grid import (EXPONENTIAL, POWER, ZERO, RadialFunction, RadialGrid,
                   cell_stencil, fit_log_linear, integrate, sphere_area,
                   stencil_matrix, STENCIL_INTERIOR)

log = logging.getLogger(__name__)

GAUSS_NODES = 20
QUAD_EPSREL = 1e-12
CACHE_ENV = "CHOQUARD_CACHE_DIR"


def _check_order(N, alpha):
    if not 0.0 < alpha < N:
        raise ParameterError(f"alpha must lie in (0, N) = (0, {N}), got {alpha}")


def angular_kernel_ratio(rho, N: int, alpha: float):
    """``kappa(1, rho)`` via the Gegenbauer/hypergeometric closed form.

    Mean of ``|e - rho w|^{-2 lam}`` over the sphere is
    ``max(1,rho)^{-2 lam} 2F1(lam, 1 - alpha/2; N/2; min(rho,1/rho)^2)``.
    """
    rho = np.asarray(rho, dtype=float)
    lam = 0.5 * (N - alpha)
    big = np.maximum(rho, 1.0)
    small = np.minimum(rho, 1.0)
    z = (small / big) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        val = sphere_area(N) * big ** (alpha - N) * hyp2f1(lam, 1.0 - 0.5 * alpha, 0.5 * N, z)
    return val


NEAR_ONE = 0.1


def _hyp_profile(N: int, alpha: float, w):
    """``2F1(lam, 1 - alpha/2; N/2; 1 - w)`` accurate for small ``w = 1 - z``.

    Uses the connection formula to argument ``w`` near ``z = 1`` so that the
    singular factor ``w^{alpha-1}`` keeps full relative precision.
    """
    a, b, c = 0.5 * (N - alpha), 1.0 - 0.5 * alpha, 0.5 * N
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    far = w >= NEAR_ONE
    out[far] = hyp2f1(a, b, c, 1.0 - w[far])
    wn = w[~far]
    e = c - a - b  # = alpha - 1
    if abs(e - round(e)) > 1e-12:
        A = gamma_fn(c) * gamma_fn(e) / (gamma_fn(c - a) * gamma_fn(c - b))
        B = gamma_fn(c) * gamma_fn(-e) / (gamma_fn(a) * gamma_fn(b))
        with np.errstate(divide="ignore"):
            out[~far] = A * hyp2f1(a, b, 1.0 - e, wn) + wn**e * B * hyp2f1(c - a, c - b, 1.0 + e, wn)
    elif round(e) == 0:
        # logarithmic case alpha = 1; leading terms suffice once z rounds to 1
        lead = gamma_fn(c) / (gamma_fn(a) * gamma_fn(b))
        with np.errstate(divide="ignore"):
            approx = lead * (-np.log(wn) + 2.0 * digamma(1.0) - digamma(a) - digamma(b))
        plain = hyp2f1(a, b, c, 1.0 - wn)
        out[~far] = np.where(wn < 1e-10, approx, plain)
    else:
        out[~far] = hyp2f1(a, b, c, 1.0 - wn)
    return out


def log_kernel(t, N: int, alpha: float, sigma: float = 0.0):
    """``e^{sigma t} G(t)`` with ``G(t) = kappa(1, e^t) e^{N t}``, free of overflow."""
    t = np.asarray(t, dtype=float)
    w = -np.expm1(-2.0 * np.abs(t))
    growth = (np.where(t > 0, alpha, N) + sigma) * t
    F = _hyp_profile(N, alpha, w.ravel()).reshape(w.shape)
    with np.errstate(over="ignore", under="ignore"):
        return sphere_area(N) * np.exp(growth) * F


def angular_kernel(r, s, N: int, alpha: float):
    """``kappa(r, s)`` for arrays of radii (homogeneous closed form)."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, r ** (alpha - N) * angular_kernel_ratio(s / np.where(r > 0, r, 1.0), N, alpha),
                       sphere_area(N) * s ** (alpha - N))
    return out


def angular_kernel_quadrature(r: float, s: float, N: int, alpha: float) -> float:
    """``kappa(r, s)`` by adaptive quadrature over the polar angle.

    Independent of the hypergeometric route; used to cross-check it.
    """
    _check_order(N, alpha)
    if r == 0.0 or s == 0.0:
        return sphere_area(N) * max(r, s) ** (alpha - N)
    e = 0.5 * (alpha - N)

    def integrand(theta):
        d2 = (r - s) ** 2 + 2.0 * r * s * (1.0 - math.cos(theta))
        return d2**e * math.sin(theta) ** (N - 2)

    # the only near-singularity sits at theta = 0 when r ~ s: resolve it with a split
    split = min(math.pi / 2, max(1e-8, 4.0 * abs(r - s) / max(r, s)))
    a = sp_integrate.quad(integrand, 0.0, split, epsabs=0.0, epsrel=1e-12, limit=400)[0]
    b = sp_integrate.quad(integrand, split, math.pi, epsabs=0.0, epsrel=1e-12, limit=400)[0]
    return sphere_area(N - 1) * (a + b)


def _singular_cell(func, h: float, side: int, alpha: float) -> float:
    """``int func(t) dt`` over ``[0, h]`` (side=+1) or ``[-h, 0]`` (side=-1).

    ``G`` behaves like ``|t|^{alpha-1}`` at 0; ``t = side h u^m`` with
    ``m alpha >= 2`` turns that into a smooth integrand in ``u``.
    """
    m = max(1, math.ceil(2.0 / alpha))

    def integrand(u):
        return func(side * h * u**m) * h * m * u ** (m - 1)

    return sp_integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200)[0]


def _gauss01(m):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(eq=False)
class AngularKernel:
    """Riesz quadrature data for one ``(N, alpha, grid)``.

    ``matrix[i, j]`` is the weight of ``f(r_j)`` in ``I[f](r_i)`` for the part
    of the integral inside ``[r_min, r_max]``.
    """

    N: int
    alpha: float
    grid: RadialGrid
    matrix: np.ndarray
    moments: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def diagonal_integrable(self) -> bool:
        return self.alpha > 1.0

    def G(self, t):
        return log_kernel(t, self.N, self.alpha)

    def _weighted(self, t, sigma):
        return log_kernel(t, self.N, self.alpha, sigma)

    def kappa(self, r, s):
        return angular_kernel(r, s, self.N, self.alpha)

    @property
    def table(self) -> np.ndarray:
        """``kappa(r_i, r_j)`` on the grid; diagonal is inf when ``alpha <= 1``."""
        r = self.grid.nodes
        tab = angular_kernel(r[:, None], r[None, :], self.N, self.alpha)
        if not self.diagonal_integrable:
            np.fill_diagonal(tab, np.inf)
        return tab

    # --- endpoint corrections ---
    def _cell_integrals(self, sigma: float) -> np.ndarray:
        """``int_cell e^{sigma t} G(t) dt`` for every offset cell ``d``."""
        n, h = self.grid.n, self.grid.h
        s, w = _gauss01(GAUSS_NODES)
        d = np.arange(-(n - 1), n - 1)
        t = (d[:, None] + s[None, :]) * h
        vals = h * np.sum(w * self._weighted(t, sigma), axis=1)
        for dd in (-1, 0):
            vals[dd + n - 1] = _singular_cell(lambda x: float(self._weighted(x, sigma)),
                                              h, 1 if dd == 0 else -1, self.alpha)
        return vals

    def origin_weights(self, sigma: float) -> np.ndarray:
        """``E[i] = int_{-inf}^{-i h} e^{sigma t} G(t) dt`` (needs ``sigma > -N``)."""
        key = ("origin", float(sigma))
        if key not in self._cache:
            n, h = self.grid.n, self.grid.h
            cells = self._cell_integrals(sigma)[: n - 1]  # d = -(n-1) .. -1
            far = sp_integrate.quad(lambda x: float(self._weighted(x, sigma)),
                                    -np.inf, -(n - 1) * h, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200)[0]
            # E[i] = far + sum_{d=-(n-1)}^{-i-1} cells[d]
            csum = np.concatenate(([0.0], np.cumsum(cells)))
            E = far + csum[n - 1 - np.arange(n)]
            self._cache[key] = E
        return self._cache[key]

    def tail_weights(self, sigma: float) -> np.ndarray:
        """``T[i] = int_{(n-1-i) h}^{inf} e^{-sigma t} G(t) dt`` (needs ``sigma > alpha``)."""
        key = ("tail", float(sigma))
        if key not in self._cache:
            n, h = self.grid.n, self.grid.h
            cells = self._cell_integrals(-sigma)[n - 1:]  # d = 0 .. n-2
            far = sp_integrate.quad(lambda x: float(self._weighted(x, -sigma)),
                                    (n - 1) * h, np.inf, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200)[0]
            rev = np.concatenate(([0.0], np.cumsum(cells[::-1])))  # sums from the top cell down
            # T[i] = far + sum_{d=n-1-i}^{n-2} cells[d]
            T = far + rev[np.arange(n)]
            self._cache[key] = T
        return self._cache[key]

    # --- persistence ---
    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = directory / kernel_cache_name(self.N, self.alpha, self.grid)
        np.save(stem.with_suffix(".npy"), self.matrix, allow_pickle=False)
        np.save(stem.with_suffix(".moments.npy"), self.moments, allow_pickle=False)
        meta = {
            "N": self.N,
            "alpha": format(self.alpha, ".17g"),
            "grid": self.grid.to_dict(),
            "grid_digest": self.grid.digest(),
            "shape": list(self.matrix.shape),
            "dtype": str(self.matrix.dtype),
            "sha256": hashlib.sha256(self.matrix.tobytes()).hexdigest(),
        }
        stem.with_suffix(".json").write_text(json.dumps(meta, indent=1), encoding="utf-8")
        return stem.with_suffix(".npy")

    @classmethod
    def load(cls, directory, N, alpha, grid):
        stem = Path(directory) / kernel_cache_name(N, alpha, grid)
        meta_path = stem.with_suffix(".json")
        if not meta_path.exists():
            return None
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if (meta["N"] != N or float(meta["alpha"]) != float(alpha)
                or RadialGrid.from_dict(meta["grid"]) != grid):
            return None
        matrix = np.load(stem.with_suffix(".npy"), allow_pickle=False)
        if hashlib.sha256(matrix.tobytes()).hexdigest() != meta["sha256"]:
            log.warning("kernel cache %s failed its checksum; rebuilding", stem)
            return None
        moments = np.load(stem.with_suffix(".moments.npy"), allow_pickle=False)
        return cls(N, float(alpha), grid, matrix, moments)


def kernel_cache_name(N, alpha, grid) -> str:
    a = hashlib.sha256(format(float(alpha), ".17g").encode()).hexdigest()[:8]
    return f"riesz_N{N}_a{a}_{grid.digest()}"


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "choquard"


def _moments(N, alpha, grid) -> np.ndarray:
    """``M[d, p] = int_0^1 G((d + s) h) s^p h ds`` for offsets ``d = -(n-1)..n-2``."""
    n, h = grid.n, grid.h
    s, w = _gauss01(GAUSS_NODES)
    d = np.arange(-(n - 1), n - 1)
    t = (d[:, None] + s[None, :]) * h
    Gv = log_kernel(t, N, alpha)
    M = np.empty((d.size, 4))
    for p in range(4):
        M[:, p] = h * np.sum(w * s**p * Gv, axis=1)

    def G1(x):
        return float(log_kernel(x, N, alpha))

    for dd in (-1, 0):
        for p in range(4):
            # local cell coordinate is t/h - dd
            M[dd + n - 1, p] = _singular_cell(lambda x: G1(x) * (x / h - dd) ** p,
                                              h, 1 if dd == 0 else -1, alpha)
    if not np.all(np.isfinite(M)):
        raise ParameterError("non-finite Riesz moments; check (N, alpha)")
    return M


def _assemble(moments, grid, alpha) -> np.ndarray:
    n = grid.n
    i = np.arange(n)
    K = np.zeros((n, n))
    L_int = stencil_matrix(STENCIL_INTERIOR)
    W_int = moments @ L_int  # W_int[d, k]
    for c in range(n - 1):
        st = cell_stencil(c, n)
        W = W_int if st == STENCIL_INTERIOR else moments @ stencil_matrix(st)
        rows = c - i + (n - 1)
        for k, off in enumerate(st):
            K[:, c + off] += W[rows, k]
    K *= grid.nodes[:, None] ** alpha
    return K


def build_kernel(N: int, alpha: float, grid: RadialGrid, cache=None) -> AngularKernel:
    """Tabulate the Riesz quadrature for ``(N, alpha, grid)``.

    ``cache``: None/False for no disk cache, True for the default directory
    (``$CHOQUARD_CACHE_DIR`` or ``~/.cache/choquard``), or a directory path.
    A cache hit returns the stored arrays unchanged.
    """
    _check_order(N, alpha)
    if grid.N != N:
        raise ParameterError(f"dimension mismatch: N={N}, grid.N={grid.N}")
    cache_dir = default_cache_dir() if cache is True else (Path(cache) if cache else None)
    if cache_dir is not None:
        hit = AngularKernel.load(cache_dir, N, alpha, grid)
        if hit is not None:
            return hit
    M = _moments(N, float(alpha), grid)
    K = _assemble(M, grid, float(alpha))
    kern = AngularKernel(N, float(alpha), grid, K, M)
    if cache_dir is not None:
        kern.save(cache_dir)
    return kern


def riesz_apply(f: RadialFunction, kernel: AngularKernel, **model_kw) -> RadialFunction:
    """``I_alpha[f]`` on the grid, including the truncated inner ball and outer region.

    Raises DivergentRieszError when the tail of ``f`` decays no faster than
    ``r^{-alpha}`` (the potential is then infinite everywhere) or when ``f``
    is not locally integrable at the origin.
    """
    g = f.grid
    if g != kernel.grid:
        raise ParameterError("profile and kernel live on different grids")
    if np.any(f.values < 0.0):
        raise ParameterError("riesz_apply expects a nonnegative profile")
    N, alpha = kernel.N, kernel.alpha
    vals = kernel.matrix @ f.values
    r = g.nodes
    if f.origin.coef != 0.0:
        s0 = f.origin.exponent
        if s0 <= -N:
            raise DivergentRieszError(
                f"origin exponent {s0} <= -N: f is not locally integrable",
                exponent=s0, where="origin")
        vals = vals + f.origin.coef * r ** (alpha + s0) * kernel.origin_weights(s0)
    tail = f.tail.as_power(g.r_max) if f.tail.kind == EXPONENTIAL else f.tail
    if tail.kind == POWER and tail.coef != 0.0:
        s_inf = tail.exponent
        if s_inf <= alpha:
            raise DivergentRieszError(
                f"tail exponent {s_inf:.6g} <= alpha = {alpha:.6g}: I_alpha[f] is infinite "
                f"(alpha - tail exponent = {alpha - s_inf:.6g} >= 0)",
                exponent=s_inf, where="tail")
        vals = vals + tail.coef * r ** (alpha - s_inf) * kernel.tail_weights(s_inf)
    vals = np.maximum(vals, 0.0)
    return RadialFunction.from_values(g, vals, **model_kw)


def riesz_at_origin(f: RadialFunction, alpha: float) -> float:
    """``I_alpha[f](0) = int f(y) |y|^{alpha-N} dy``."""
    g = f.grid
    weight = RadialFunction.from_values(g, g.nodes ** (alpha - g.N), origin_exponent=alpha - g.N,
                                        tail_exponent=g.N - alpha)
    return integrate(f * weight)


@dataclass(frozen=True)
class RieszReport:
    l1_norm: float
    beta: float
    gamma: float
    error_samples: tuple
    fitted_error_slope: float
    slope_bound: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.fitted_error_slope <= self.slope_bound + self.tolerance

    def to_dict(self):
        return {
            "l1_norm": self.l1_norm,
            "beta": self.beta,
            "gamma": self.gamma,
            "error_samples": [list(x) for x in self.error_samples],
            "fitted_error_slope": self.fitted_error_slope,
            "slope_bound": self.slope_bound,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def asymptotic_gamma(beta: float, N: int) -> float:
    if not beta > N:
        raise ParameterError(f"beta must exceed N = {N}, got {beta}")
    if math.isinf(beta):
        return 1.0
    return (beta - N) / (1.0 + beta - N)


def asymptotic_check(f: RadialFunction, beta: float, kernel: AngularKernel,
                     decades: float = 1.5, tolerance: float = 0.1) -> RieszReport:
    """Far-field error ``|I[f](r) - ||f||_1 r^{alpha-N}|`` and its log-log slope.

    The slope is compared with the one-sided bound ``-(N - alpha + gamma)``,
    ``gamma = (beta - N)/(1 + beta - N)``; pass ``beta = inf`` for compact support.
    """
    N, alpha = kernel.N, kernel.alpha
    gam = asymptotic_gamma(beta, N)
    g = f.grid
    l1 = integrate(f)
    If = riesz_apply(f, kernel)
    idx = g.index_window(g.r_max * 10.0 ** (-decades), g.r_max)
    r = g.nodes[idx]
    err = np.abs(If.values[idx] - l1 * r ** (alpha - N))
    fit = fit_log_linear(r, err)
    return RieszReport(l1, float(beta), gam, tuple(zip(r.tolist(), err.tolist())),
                       fit.exponent, -(N - alpha + gam), tolerance)
