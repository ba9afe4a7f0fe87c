"""Nystrom discretization of the stationary Wiener-Hopf equation.

The half-line is truncated at ``b_max`` and sampled on a uniform grid
b_i = i*h. Trapezoid weights turn the integral operator into the matrix

    K[i, j] = h * f((i - j) h) * w[j],    f(x) = 0.5 * exp(-|x + a|),

and the rescaled density solves (I - K) u = f(b_i). Only the 2N+1 kernel
samples f((i-j) h) are evaluated; the dense matrix is a gather from them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .distributions import ParameterError, check_a_tilde, optimal_theta, pdf_x_normalized
from .neumann import SolverError

DEFAULT_POINTS = 1000
DEFAULT_PICARD_ITERATIONS = 200
PICARD_STEP_TOL = 1e-12
MIN_RCOND = 1e-13


class NonContractionError(SolverError):
    """Picard iteration diverged."""


@dataclass(frozen=True)
class QuadratureGrid:
    n_intervals: int
    b_max: float

    def __post_init__(self):
        if self.n_intervals < 1:
            raise ParameterError("grid needs at least one interval")
        if not self.b_max > 0:
            raise ParameterError("b_max must be positive")

    @property
    def n_points(self) -> int:
        return self.n_intervals + 1

    @property
    def h(self) -> float:
        return self.b_max / self.n_intervals

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_points) * self.h

    @property
    def weights(self) -> np.ndarray:
        w = np.ones(self.n_points)
        w[0] = w[-1] = 0.5
        return w


def default_b_max(a_tilde: float) -> float:
    """max(30, 30/theta*): the stationary tail decays at least like exp(-theta* b)."""
    theta = optimal_theta(check_a_tilde(a_tilde)).theta
    return max(30.0, 30.0 / theta)


def make_grid(a_tilde: float, n_intervals: int = DEFAULT_POINTS, b_max: float | None = None) -> QuadratureGrid:
    return QuadratureGrid(n_intervals, default_b_max(a_tilde) if b_max is None else float(b_max))


@dataclass(frozen=True)
class DiscreteOperator:
    grid: QuadratureGrid
    a_tilde: float
    kernel_samples: np.ndarray  # f(d*h) for d = -N..N

    def kernel(self, i, j):
        return self.kernel_samples[np.asarray(i) - np.asarray(j) + self.grid.n_intervals]

    @property
    def matrix(self) -> np.ndarray:
        n = self.grid.n_points
        idx = np.arange(n)
        diff = idx[:, None] - idx[None, :] + self.grid.n_intervals
        return self.grid.h * self.kernel_samples[diff] * self.grid.weights[None, :]

    @property
    def source(self) -> np.ndarray:
        """f(b_i) = 0.5*exp(-(b_i + a)); the same samples as diagonal offsets 0..N."""
        return self.kernel_samples[self.grid.n_intervals :].copy()

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u


def build_operator(grid: QuadratureGrid, a_tilde: float) -> DiscreteOperator:
    a_tilde = check_a_tilde(a_tilde)
    offsets = np.arange(-grid.n_intervals, grid.n_intervals + 1) * grid.h
    return DiscreteOperator(grid, a_tilde, pdf_x_normalized(a_tilde, offsets))


@dataclass(frozen=True)
class QuadratureSolution:
    """Stationary law from the discretized equation (normalized units)."""

    operator: DiscreteOperator
    u_vec: np.ndarray
    p0: float
    omega_n: float
    method: str = "nystrom"

    @property
    def grid(self) -> QuadratureGrid:
        return self.operator.grid

    @property
    def a_tilde(self) -> float:
        return self.operator.a_tilde

    @property
    def label(self) -> str:
        return f"{self.method}(N={self.grid.n_intervals})"

    def rescaled(self, b_tilde):
        """Nystrom interpolant u(b) = f(b) + h * sum_j w_j f(b - b_j) u_j; zero past b_max."""
        b = np.asarray(b_tilde, dtype=float)
        flat = np.atleast_1d(b)
        if np.any(flat < 0):
            raise ParameterError("normalized battery power must be >= 0")
        g = self.grid
        wu = g.h * g.weights * self.u_vec
        out = np.empty(flat.shape)
        for start in range(0, flat.size, 512):
            chunk = flat[start : start + 512]
            kern = pdf_x_normalized(self.a_tilde, chunk[:, None] - g.nodes[None, :])
            out[start : start + 512] = pdf_x_normalized(self.a_tilde, chunk) + kern @ wu
        out[flat > g.b_max] = 0.0
        return float(out[0]) if b.ndim == 0 else out

    def density(self, b_tilde):
        return self.p0 * self.rescaled(b_tilde)

    def node_survival(self) -> np.ndarray:
        """S at the grid nodes from the cumulative trapezoid rule."""
        g = self.p0 * self.u_vec
        cum = np.concatenate([[0.0], np.cumsum(0.5 * self.grid.h * (g[1:] + g[:-1]))])
        return (1.0 - self.p0) - cum

    def survival(self, b_tilde):
        b = np.asarray(b_tilde, dtype=float)
        out = np.interp(b, self.grid.nodes, self.node_survival(), right=0.0)
        return np.maximum(out, 0.0) if b.ndim else max(float(out), 0.0)

    def cdf(self, b_tilde):
        return 1.0 - self.survival(b_tilde)

    def percentile(self, q: float) -> float:
        if not 0.0 < q < 1.0:
            raise ParameterError(f"percentile level must lie in (0, 1), got {q}")
        if q <= self.p0:
            return 0.0
        target = 1.0 - q
        s = self.node_survival()
        idx = int(np.argmax(s <= target))
        if s[idx] > target:
            return float(self.grid.b_max)
        if idx == 0:
            return 0.0
        s0, s1 = s[idx - 1], s[idx]
        frac = (s0 - target) / (s0 - s1)
        return float(self.grid.nodes[idx - 1] + frac * self.grid.h)

    def tail_bound(self) -> float:
        return self.percentile(1.0 - 1e-12) if self.p0 < 1.0 - 1e-12 else 0.0


def _finish(operator: DiscreteOperator, u: np.ndarray, method: str) -> QuadratureSolution:
    if not np.all(np.isfinite(u)):
        raise SolverError("quadrature solution is not finite")
    clamp = float(-u[u < 0].sum())
    if clamp > 1e-8:
        raise SolverError(f"quadrature solution has negative mass {clamp:.3e}")
    u = np.maximum(u, 0.0)
    g = operator.grid
    omega_n = float(g.h * np.dot(g.weights, u))
    return QuadratureSolution(operator, u, 1.0 / (1.0 + omega_n), omega_n, method)


def solve_resolvent(operator: DiscreteOperator) -> QuadratureSolution:
    """Direct LU solve of (I - K) u = f with a reciprocal condition check."""
    a = np.eye(operator.grid.n_points) - operator.matrix
    anorm = np.linalg.norm(a, 1)
    with warnings.catch_warnings():
        # singular pivots are reported through the condition estimate below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    rcond, info = sla.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond < MIN_RCOND:
        raise SolverError(
            f"resolvent system is singular or ill-conditioned (rcond={rcond:.3e}); "
            "the contraction condition fails for this slope"
        )
    u = sla.lu_solve((lu, piv), operator.source, check_finite=False)
    return _finish(operator, u, "nystrom")


def solve_picard(
    operator: DiscreteOperator,
    iterations: int = DEFAULT_PICARD_ITERATIONS,
    step_tol: float | None = PICARD_STEP_TOL,
) -> QuadratureSolution:
    """Fixed-point iteration u <- f + K u started from u = f.

    Stops after ``iterations`` steps or once successive iterates differ by
    less than ``step_tol`` in max norm; three consecutive growing steps
    raise NonContractionError.
    """
    if iterations < 0:
        raise ValueError("iteration count must be >= 0")
    mat = operator.matrix
    f = operator.source
    u = f.copy()
    last_step = math.inf
    growth = 0
    for _ in range(iterations):
        nxt = f + mat @ u
        step = float(np.max(np.abs(nxt - u)))
        u = nxt
        growth = growth + 1 if step > last_step else 0
        if growth >= 3:
            raise NonContractionError("Picard iterates diverge; operator is not a contraction")
        last_step = step
        if step_tol is not None and step < step_tol:
            break
    return _finish(operator, u, "picard")


def solve_nystrom(a_tilde: float, n_intervals: int = DEFAULT_POINTS, b_max: float | None = None) -> QuadratureSolution:
    grid = make_grid(a_tilde, n_intervals, b_max)
    return solve_resolvent(build_operator(grid, a_tilde))
