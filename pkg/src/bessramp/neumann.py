"""Analytic stationary law of the reflected Laplace walk as a Neumann series.

The n-th term of the series for the rescaled density u = g/p0 is

    v_n(b) = exp(-(b + (n+1)a)) * sum_k Lambda[n, k] * (b + a)**k

with all quantities in normalized units (b = beta*B, a = beta*a_MW). The
coefficients follow a triangular recursion driven by an "upper" and a
"lower" transfer coefficient, one for each side of the kernel kink.

Numerically the table is carried in two scalings:

* ``d[n, k] = k! * Lambda[n, k]`` reproduces the literal coefficients;
* ``c[n, k] = exp(-(n+1)a) * k! * Lambda[n, k]`` is what every evaluation uses.

With the k! folded in, the transfer (r!/k!) * (L + U) only depends on k - r,
and v_n becomes a Poisson-weighted sum ``exp(a) * sum_k c[n, k] * pois(k; b+a)``,
which neither overflows nor cancels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from .distributions import ParameterError, check_a_tilde, optimal_theta

DEFAULT_M_MAX = 200
DEFAULT_TERM_TOL = 1e-10

_FACTORIALS = np.array([float(math.factorial(k)) for k in range(171)])


class SolverError(RuntimeError):
    """Raised when a solver cannot produce a stationary law."""


def pascal_triangle(n: int) -> np.ndarray:
    """Binomial coefficients C(i, j) for 0 <= j <= i <= n as a dense array."""
    tri = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        tri[i, 0] = tri[i, i] = 1.0
        for j in range(1, i):
            tri[i, j] = tri[i - 1, j - 1] + tri[i - 1, j]
    return tri


def upper_transfer(k: int, r: int, a_tilde: float, binom: np.ndarray | None = None) -> float:
    """U_{k->r} = sum_{m=r}^{k} 1/2 * k!/m! * C(m, r) * a**(m-r) * (1/2)**(k-m+1)."""
    if not 0 <= r <= k:
        raise IndexError(f"upper transfer needs 0 <= r <= k, got k={k}, r={r}")
    if binom is None or binom.shape[0] <= k:
        binom = pascal_triangle(k)
    total = 0.0
    ratio = 1.0  # k!/m!, built from m = k downwards
    for m in range(k, r - 1, -1):
        total += 0.5 * ratio * binom[m, r] * a_tilde ** (m - r) * 0.5 ** (k - m + 1)
        ratio *= m
    return total


def lower_transfer(k: int, r: int, a_tilde: float, binom: np.ndarray | None = None) -> float:
    """L_{k->r} = 1/2 * 1/(k+1) * C(k+1, r) * a**(k+1-r); zero for r = 0."""
    if not 0 <= r <= k + 1:
        raise IndexError(f"lower transfer needs 0 <= r <= k+1, got k={k}, r={r}")
    if r == 0:
        return 0.0
    if binom is None or binom.shape[0] <= k + 1:
        binom = pascal_triangle(k + 1)
    return 0.5 / (k + 1) * binom[k + 1, r] * a_tilde ** (k + 1 - r)


def literal_coefficients(a_tilde: float, order: int) -> list[np.ndarray]:
    """Lambda rows by direct application of the recursion with the literal transfers.

    O(order**4) and limited to order <= ~150 by k! in double precision; kept as
    the reference the factorial-scaled recursion is checked against.
    """
    binom = pascal_triangle(order + 1)
    rows = [np.array([0.5])]
    for n in range(order):
        prev = rows[-1]
        new = np.zeros(n + 2)
        for k, lam in enumerate(prev):
            for r in range(k + 1):
                new[r] += lam * upper_transfer(k, r, a_tilde, binom)
            for r in range(1, k + 2):
                new[r] += lam * lower_transfer(k, r, a_tilde, binom)
        rows.append(new)
    return rows


def scaled_transfer_matrix(a_tilde: float, order: int) -> np.ndarray:
    """T[k, r] = r!/k! * (L_{k->r} + U_{k->r}) for 0 <= k <= order, 0 <= r <= order+1.

    r!/k! * U_{k->r} = 1/2 * sum_{j=0}^{k-r} a**j/j! * 2**-(k-r-j+1)
    r!/k! * L_{k->r} = 1/2 * a**(k+1-r)/(k+1-r)!           (r >= 1)
    """
    size = order + 2
    exp_terms = np.empty(size)  # a**j / j!
    exp_terms[0] = 1.0
    for j in range(1, size):
        exp_terms[j] = exp_terms[j - 1] * a_tilde / j
    upper = np.empty(size)  # upper[d] = sum_j a**j/j! * 2**-(d-j+1)
    upper[0] = 0.5
    for d in range(1, size):
        upper[d] = 0.5 * (upper[d - 1] + exp_terms[d])
    k = np.arange(order + 1)[:, None]
    r = np.arange(order + 2)[None, :]
    d = k - r
    mat = np.zeros((order + 1, order + 2))
    mask_u = d >= 0
    mat[mask_u] += 0.5 * upper[d[mask_u]]
    mask_l = (d >= -1) & (r >= 1)
    mat[mask_l] += 0.5 * exp_terms[(d + 1)[mask_l]]
    return mat


@dataclass(frozen=True)
class CoefficientTable:
    """Triangular coefficient table for a fixed normalized slope.

    ``scaled_rows[n][k] = k! * Lambda[n, k]`` and
    ``damped_rows[n][k] = exp(-(n+1)*a_tilde) * k! * Lambda[n, k]``.
    """

    a_tilde: float
    scaled_rows: tuple[np.ndarray, ...] = field(repr=False)
    damped_rows: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def order(self) -> int:
        return len(self.damped_rows) - 1

    @cached_property
    def rows(self) -> tuple[np.ndarray, ...]:
        """Lambda[n, k] rows, row n holding n+1 entries."""
        out = []
        for row in self.scaled_rows:
            lam = np.empty_like(row)
            direct = min(row.size, 171)  # k! is finite in double up to 170!
            lam[:direct] = row[:direct] / _FACTORIALS[:direct]
            if row.size > direct:
                k = np.arange(direct, row.size)
                with np.errstate(divide="ignore"):
                    lam[direct:] = np.exp(np.log(row[direct:]) - gammaln(k + 1))
            out.append(lam)
        return tuple(out)

    @cached_property
    def damped_matrix(self) -> np.ndarray:
        """Damped rows as a dense lower-triangular (order+1, order+1) array."""
        mat = np.zeros((self.order + 1, self.order + 1))
        for n, row in enumerate(self.damped_rows):
            mat[n, : row.size] = row
        return mat

    def truncated(self, order: int) -> "CoefficientTable":
        if not 0 <= order <= self.order:
            raise ValueError(f"cannot truncate order {self.order} table to {order}")
        return CoefficientTable(
            self.a_tilde, self.scaled_rows[: order + 1], self.damped_rows[: order + 1]
        )

    def extended(self, order: int) -> "CoefficientTable":
        """Table with rows up to ``order``, reusing the rows already computed."""
        if order <= self.order:
            return self.truncated(order)
        mat = scaled_transfer_matrix(self.a_tilde, order)
        damp = math.exp(-self.a_tilde)
        scaled = list(self.scaled_rows)
        damped = list(self.damped_rows)
        for n in range(self.order, order):
            block = mat[: n + 1, : n + 2]
            scaled.append(scaled[-1] @ block)
            damped.append(damp * (damped[-1] @ block))
        return CoefficientTable(self.a_tilde, tuple(scaled), tuple(damped))


def build_coefficients(a_tilde: float, order: int) -> CoefficientTable:
    """Coefficient rows 0..order; row 0 is {1/2}."""
    a_tilde = check_a_tilde(a_tilde)
    if order < 0:
        raise ValueError(f"truncation order must be >= 0, got {order}")
    base = CoefficientTable(
        a_tilde, (np.array([0.5]),), (np.array([0.5 * math.exp(-a_tilde)]),)
    )
    return base.extended(order)


def _exp_partial_sums(a_tilde: float, order: int) -> np.ndarray:
    """E_k = sum_{i<=k} a**i/i! = H_k/k!."""
    terms = np.empty(order + 1)
    terms[0] = 1.0
    for i in range(1, order + 1):
        terms[i] = terms[i - 1] * a_tilde / i
    return np.cumsum(terms)


def term_omegas(table: CoefficientTable) -> np.ndarray:
    """omega_n = integral of v_n over the half-line, for n = 0..order."""
    return table.damped_matrix @ _exp_partial_sums(table.a_tilde, table.order)


def omega(table: CoefficientTable) -> float:
    """Truncated normalization sum Omega_M = sum_n omega_n."""
    return math.fsum(term_omegas(table))


def poisson_weights(w: np.ndarray, order: int) -> np.ndarray:
    """exp(-w) * w**k / k! for k = 0..order, shape (len(w), order+1)."""
    w = np.asarray(w, dtype=float)
    k = np.arange(order + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = np.log(w)[:, None]
        logp = k[None, :] * logw - w[:, None] - gammaln(k + 1)[None, :]
    logp[:, 0] = -w  # 0 * log(0) at w = 0
    return np.exp(logp)


def poisson_cdf_weights(w: np.ndarray, order: int) -> np.ndarray:
    """Q_k(w) = Gamma(k+1, w)/k! = exp(-w) * sum_{j<=k} w**j/j!."""
    return np.cumsum(poisson_weights(w, order), axis=1)


def upper_incomplete_gamma_int(order: int, x: float) -> float:
    """Gamma(s, x) = (s-1)! * exp(-x) * sum_{j<s} x**j/j! for integer s >= 1."""
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)) or order < 1:
        raise ParameterError(f"integer order >= 1 required, got {order!r}")
    if x < 0:
        raise ParameterError(f"argument must be >= 0, got {x}")
    term = 1.0
    partial = 1.0
    for j in range(1, order):
        term *= x / j
        partial += term
    return math.factorial(order - 1) * math.exp(-x) * partial


def _as_points(b_tilde) -> tuple[np.ndarray, bool]:
    arr = np.asarray(b_tilde, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ParameterError("normalized battery power must be >= 0")
    return np.atleast_1d(arr), arr.ndim == 0


def term_values(table: CoefficientTable, b_tilde) -> np.ndarray:
    """v_n(b) for every n, shape (len(b), order+1)."""
    b, _ = _as_points(b_tilde)
    weights = poisson_weights(b + table.a_tilde, table.order)
    return math.exp(table.a_tilde) * weights @ table.damped_matrix.T


def rescaled_density(table: CoefficientTable, b_tilde):
    """Truncated series u_M(b) = sum_{n<=M} v_n(b)."""
    b, scalar = _as_points(b_tilde)
    column = table.damped_matrix.sum(axis=0)
    out = math.exp(table.a_tilde) * poisson_weights(b + table.a_tilde, table.order) @ column
    return float(out[0]) if scalar else out


def _tail_integral(table: CoefficientTable, b_tilde) -> np.ndarray:
    """integral_b^inf u_M, via Gamma(k+1, b+a): exp(a) * sum_k C_k Q_k(b+a)."""
    b, _ = _as_points(b_tilde)
    column = table.damped_matrix.sum(axis=0)
    q = poisson_cdf_weights(b + table.a_tilde, table.order)
    return math.exp(table.a_tilde) * q @ column


def closed_form_m2(a_tilde: float, b_tilde):
    """Three-term (M = 2) rescaled density and point mass in closed form."""
    a = check_a_tilde(a_tilde)
    b = np.asarray(b_tilde, dtype=float)
    ea = math.exp(a)
    poly = b**2 + (2.0 + 4.0 * ea + 4.0 * a) * b + (
        1.0 + 3.0 * a**2 + 3.0 * a + ea * (2.0 + 8.0 * ea + 4.0 * a)
    )
    u = np.exp(-3.0 * a - b) * poly / 16.0
    e3 = math.exp(3.0 * a)
    p0 = 16.0 * e3 / (5.0 + 7.0 * a + 3.0 * a**2 + 6.0 * ea + 4.0 * a * ea + 8.0 * ea**2 + 16.0 * e3)
    return (float(u) if u.ndim == 0 else u), p0


@dataclass(frozen=True)
class NeumannSolution:
    """Stationary law from a truncated Neumann series (normalized units)."""

    table: CoefficientTable
    p0: float
    omega: float
    converged: bool = True

    @property
    def a_tilde(self) -> float:
        return self.table.a_tilde

    @property
    def order(self) -> int:
        return self.table.order

    @property
    def label(self) -> str:
        return f"analytic(M={self.order})"

    def rescaled(self, b_tilde):
        return rescaled_density(self.table, b_tilde)

    def density(self, b_tilde):
        """Continuous part g = p0 * u."""
        return self.p0 * self.rescaled(b_tilde)

    def survival(self, b_tilde):
        """S(b) = P(B > b); S(0) = 1 - p0."""
        _, scalar = _as_points(b_tilde)
        out = self.p0 * _tail_integral(self.table, b_tilde)
        return float(out[0]) if scalar else out

    def cdf(self, b_tilde):
        s = self.survival(b_tilde)
        return 1.0 - s

    def percentile(self, q: float, tol: float = 1e-10) -> float:
        """Smallest b with G(b) >= q; zero when the point mass already covers q."""
        if not 0.0 < q < 1.0:
            raise ParameterError(f"percentile level must lie in (0, 1), got {q}")
        if q <= self.p0:
            return 0.0
        target = 1.0 - q
        hi = 1.0
        while self.survival(hi) >= target:
            hi *= 2.0
            if hi > 1e8:
                raise SolverError("percentile bracket did not close")
        lo = 0.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self.survival(mid) > target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def tail_bound(self) -> float:
        """Point beyond which the continuous mass is below 1e-12."""
        return self.percentile(1.0 - 1e-12) if self.p0 < 1.0 - 1e-12 else 0.0


def solve_neumann(
    a_tilde: float,
    order: int | None = None,
    m_max: int = DEFAULT_M_MAX,
    term_tol: float = DEFAULT_TERM_TOL,
    table: CoefficientTable | None = None,
) -> NeumannSolution:
    """Assemble the analytic law.

    With ``order=None`` the series is truncated adaptively at the first n with
    omega_n / Omega_n < ``term_tol``, or at ``m_max``.
    """
    a_tilde = check_a_tilde(a_tilde)
    converged = True
    if order is None:
        if table is None or table.order < m_max:
            table = build_coefficients(a_tilde, m_max) if table is None else table.extended(m_max)
        omegas = term_omegas(table)
        running = np.cumsum(omegas)
        hits = np.nonzero(omegas / running < term_tol)[0]
        if hits.size:
            order = int(hits[0])
        else:
            order, converged = m_max, False
        table = table.truncated(order)
    elif table is None:
        table = build_coefficients(a_tilde, order)
    else:
        table = table.extended(order)
    om = omega(table)
    return NeumannSolution(table, 1.0 / (1.0 + om), om, converged)


def contraction_rate(a_tilde: float) -> tuple[float, float]:
    """(theta*, M_X(theta*)) of the weighted-norm contraction certificate."""
    cert = optimal_theta(a_tilde)
    return cert.theta, cert.mgf
