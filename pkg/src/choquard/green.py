"""Fundamental solution and Green operator of ``-Lap + mu`` for radial data.

The Green operator is a finite-volume discretisation on the log grid: control
volumes are spherical shells between geometric midpoints, the flux between
neighbouring nodes uses the exact conductance of the radial Laplacian, and the
reaction term is lumped.  The resulting matrix is a tridiagonal M-matrix, so
the discrete solution operator is positive and order preserving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import gamma as gamma_fn
from scipy.special import kv

from .errors import DivergentIntegralError, NumericalError, ParameterError
from .grid import (EXPONENTIAL, POWER, ZERO, OriginModel, RadialFunction,
                   RadialGrid, TailModel, fit_log_linear)


def origin_constant(N: int) -> float:
    """``c_N = 1/((N-2) |S^{N-1}|)``, the coefficient of ``|x|^{2-N}`` in Gamma_0."""
    return gamma_fn(N / 2.0 - 1.0) / (4.0 * math.pi ** (N / 2.0))


def gamma0(r, N: int, mu: float = 1.0):
    """Radial fundamental solution of ``-Lap + mu`` in R^N.

    ``(2 pi)^{-N/2} m^{N-2} (m r)^{1-N/2} K_{N/2-1}(m r)`` with ``m = sqrt(mu)``.
    """
    r = np.asarray(r, dtype=float)
    m = math.sqrt(mu)
    nu = N / 2.0 - 1.0
    x = m * r
    return (2.0 * math.pi) ** (-N / 2.0) * m ** (N - 2.0) * x ** (-nu) * kv(nu, x)


def gamma0_laplacian_residual(r, N: int, rel_step: float = 1e-4):
    """``(-Lap Gamma_0 + Gamma_0) / Gamma_0`` by central differences (should be ~0)."""
    r = np.asarray(r, dtype=float)
    d = rel_step * r
    g0 = gamma0(r, N)
    gp = gamma0(r + d, N)
    gm = gamma0(r - d, N)
    second = (gp - 2 * g0 + gm) / d**2
    first = (gp - gm) / (2 * d)
    return (-(second + (N - 1) / r * first) + g0) / g0


@dataclass(frozen=True, eq=False)
class FundamentalSolution:
    N: int
    profile: RadialFunction
    c_N: float
    c_N_fit: float
    origin_fit_exponent: float
    origin_fit_residual: float

    def to_dict(self):
        return {
            "N": self.N,
            "c_N": self.c_N,
            "c_N_fit": self.c_N_fit,
            "origin_fit_exponent": self.origin_fit_exponent,
            "origin_fit_residual": self.origin_fit_residual,
        }


def fundamental_solution(N: int, grid: RadialGrid) -> FundamentalSolution:
    """Gamma_0 on ``grid`` with its origin coefficient recovered by a fit.

    The coefficient is fitted on ``[r_min, 10 r_min]`` with the exponent left
    free (reported) and, separately, with the exponent pinned to ``2-N``.
    """
    if N != grid.N:
        raise ParameterError(f"dimension mismatch: N={N}, grid.N={grid.N}")
    r = grid.nodes
    vals = gamma0(r, N)
    idx = grid.index_window(grid.r_min, 10.0 * grid.r_min)
    free = fit_log_linear(r[idx], vals[idx])
    c_fit = float(np.exp(np.mean(np.log(vals[idx] * r[idx] ** (N - 2)))))
    cN = origin_constant(N)
    # exp(-r) r^{-(N-1)/2} far away: match value and log-slope at r_max
    slope = 1.0 + (N - 1) / (2.0 * grid.r_max)
    tail = TailModel(EXPONENTIAL, float(vals[-1]) * math.exp(slope * grid.r_max), slope) \
        if vals[-1] > 0 else TailModel(ZERO)
    prof = RadialFunction(grid, vals, OriginModel(c_fit, 2.0 - N), tail, {"label": "Gamma_0"})
    return FundamentalSolution(N, prof, cN, c_fit, free.exponent, free.residual)


def robin_rate(f: RadialFunction, mu: float = 1.0) -> float:
    """Outgoing decay rate ``-u'/u`` at ``r_max`` for ``u = G[f]``.

    The slower of the homogeneous (Yukawa) decay and the decay of ``f``.
    """
    g = f.grid
    rates = [math.sqrt(mu) + (g.N - 1) / (2.0 * g.r_max)]
    if f.tail.kind == POWER:
        rates.append(max(f.tail.exponent, 0.0) / g.r_max)
    elif f.tail.kind == EXPONENTIAL:
        rates.append(max(f.tail.exponent, 0.0))
    return min(rates)


class GreenOperator:
    """Discrete ``(-Lap + mu)^{-1}`` on a radial grid.

    ``origin_exponent`` is the expected power of the solution below ``r_min``
    (0 for bounded images); it only enters the tiny reaction mass of the
    inner ball.  ``decay_rate`` fixes the Robin condition ``u' = -rate u`` at
    ``r_max``; when None it is taken from each right-hand side.
    """

    def __init__(self, grid: RadialGrid, mu: float = 1.0, decay_rate=None, origin_exponent: float = 0.0):
        if mu <= 0:
            raise ParameterError(f"mu must be positive, got {mu}")
        self.grid = grid
        self.mu = float(mu)
        self.decay_rate = decay_rate
        self.origin_exponent = float(origin_exponent)
        N = grid.N
        r = grid.nodes
        mid = np.sqrt(r[:-1] * r[1:])
        edges = np.concatenate(([r[0]], mid, [r[-1]]))
        self.mass = (edges[1:] ** N - edges[:-1] ** N) / N
        # exact conductance of the radial Laplacian between neighbouring spheres
        self.cond = (N - 2.0) / (r[:-1] ** (2.0 - N) - r[1:] ** (2.0 - N))
        e_u = N + min(self.origin_exponent, 0.0)
        if e_u <= 0:
            raise ParameterError("origin exponent of the image must exceed -N")
        self.inner_mass = r[0] ** N / e_u

    def _bands(self, rate: float) -> np.ndarray:
        n = self.grid.n
        mu = self.mu
        diag = mu * self.mass.copy()
        diag[:-1] += self.cond
        diag[1:] += self.cond
        diag[0] += mu * self.inner_mass
        diag[-1] += rate * self.grid.r_max ** (self.grid.N - 1)
        ab = np.zeros((3, n))
        ab[0, 1:] = -self.cond
        ab[1] = diag
        ab[2, :-1] = -self.cond
        return ab

    def rhs(self, f: RadialFunction) -> np.ndarray:
        """Right-hand side ``M f`` plus the source mass of the inner ball."""
        g = self.grid
        b = self.mass * f.values
        if f.origin.coef != 0.0:
            e = f.origin.exponent + g.N
            if e <= 0:
                raise DivergentIntegralError(
                    f"source exponent {f.origin.exponent} <= -N at the origin",
                    exponent=f.origin.exponent, where="origin")
            b[0] += f.origin.coef * g.r_min**e / e
        return b

    def solve_values(self, f: RadialFunction) -> np.ndarray:
        rate = robin_rate(f, self.mu) if self.decay_rate is None else float(self.decay_rate)
        ab = self._bands(rate)
        b = self.rhs(f)
        try:
            u = solve_banded((1, 1), ab, b, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"tridiagonal solve failed: {exc}") from exc
        if not np.all(np.isfinite(u)):
            raise NumericalError("tridiagonal solve produced non-finite values")
        return u

    def apply(self, f: RadialFunction, **model_kw) -> RadialFunction:
        u = self.solve_values(f)
        # the M-matrix inverse is nonnegative; clip round-off below zero
        u = np.where(u < 0.0, 0.0, u) if np.all(f.values >= 0.0) else u
        return RadialFunction.from_values(self.grid, u, **model_kw)

    def operator(self, u_values, f: RadialFunction = None, rate=None) -> np.ndarray:
        """Discrete ``(-Lap + mu) u`` per unit shell volume, consistent with :meth:`solve_values`.

        Boundary rows use the same closures as the solve (the source mass of
        the inner ball is taken from ``f`` when given).
        """
        if rate is None:
            rate = self.decay_rate if self.decay_rate is not None else (
                robin_rate(f, self.mu) if f is not None else 0.0)
        ab = self._bands(float(rate))
        u = np.asarray(u_values, dtype=float)
        out = ab[1] * u
        out[:-1] += ab[0, 1:] * u[1:]
        out[1:] += ab[2, :-1] * u[:-1]
        if f is not None and f.origin.coef != 0.0:
            e = f.origin.exponent + self.grid.N
            out[0] -= f.origin.coef * self.grid.r_min**e / e
            return out / self.mass
        return out / self.mass


def green_apply(f: RadialFunction, mu: float = 1.0, decay_rate=None, **model_kw) -> RadialFunction:
    """``u = G[f]``, the decaying solution of ``-Lap u + mu u = f`` regular at 0.

    The singular homogeneous solution (a Dirac mass at the origin) is excluded;
    add ``k * Gamma_0`` separately for that.
    """
    if np.any(f.values < 0.0):
        raise ParameterError("green_apply expects a nonnegative right-hand side")
    N = f.grid.N
    sigma = f.origin.exponent if f.origin.coef != 0.0 else 0.0
    if sigma + N <= 0:
        raise DivergentIntegralError(f"source exponent {sigma} <= -N at the origin", exponent=sigma, where="origin")
    op = GreenOperator(f.grid, mu=mu, decay_rate=decay_rate, origin_exponent=min(0.0, sigma + 2.0))
    return op.apply(f, **model_kw)

