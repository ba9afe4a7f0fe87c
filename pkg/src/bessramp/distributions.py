"""Increment laws for primary power changes and the shifted effective increment.

Two families are supported: the simple Laplace law (SL) with inverse power
scale ``beta`` and the two-scale generalized Laplace mixture (GL)

    f_Y(y) = gamma/2 * (c*zeta*exp(-zeta*gamma*|y|) + (1-c)*exp(-gamma*|y|)).

Only SL enters the analytic solvers; GL is consumed by the simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

DEFAULT_ZETA = 10.0


class ParameterError(ValueError):
    """Raised when a law or slope parameter is outside its domain."""


class LawKind(str, Enum):
    SIMPLE = "SL"
    GENERALIZED = "GL"


@dataclass(frozen=True)
class IncrementLaw:
    """Distribution of the primary power change Y [MW].

    For ``kind=SIMPLE`` only ``scale`` (beta, 1/MW) is used. For
    ``kind=GENERALIZED`` ``scale`` is gamma and ``c``/``zeta`` set the
    mixture of the narrow (rate zeta*gamma) and wide (rate gamma) parts.
    """

    kind: LawKind
    scale: float
    c: float = 0.0
    zeta: float = DEFAULT_ZETA

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ParameterError(f"scale must be positive and finite, got {self.scale}")
        if not 0.0 <= self.c <= 1.0:
            raise ParameterError(f"mixture weight c must lie in [0, 1], got {self.c}")
        if not self.zeta >= 1.0:
            raise ParameterError(f"zeta must be >= 1, got {self.zeta}")

    @classmethod
    def simple(cls, beta: float) -> "IncrementLaw":
        return cls(LawKind.SIMPLE, float(beta))

    @classmethod
    def generalized(cls, gamma: float, c: float, zeta: float = DEFAULT_ZETA) -> "IncrementLaw":
        return cls(LawKind.GENERALIZED, float(gamma), float(c), float(zeta))

    @classmethod
    def equal_variance(cls, beta: float, c: float, zeta: float = DEFAULT_ZETA) -> "IncrementLaw":
        """GL law whose variance equals that of SL(beta)."""
        return cls.generalized(equivalent_gamma(beta, c, zeta), c, zeta)

    @property
    def beta(self) -> float:
        if self.kind is not LawKind.SIMPLE:
            raise ParameterError("beta is only defined for the simple Laplace law")
        return self.scale

    @property
    def gamma(self) -> float:
        if self.kind is not LawKind.GENERALIZED:
            raise ParameterError("gamma is only defined for the generalized Laplace law")
        return self.scale

    def components(self) -> list[tuple[float, float]]:
        """(weight, rate) pairs of the Laplace mixture."""
        if self.kind is LawKind.SIMPLE:
            return [(1.0, self.scale)]
        return [(self.c, self.zeta * self.scale), (1.0 - self.c, self.scale)]

    @property
    def variance(self) -> float:
        return sum(w * 2.0 / rate**2 for w, rate in self.components())

    @property
    def equivalent_beta(self) -> float:
        """Inverse scale of the SL law with the same variance."""
        return math.sqrt(2.0 / self.variance)


@dataclass(frozen=True)
class NormalizedSlope:
    """Tolerable step change a [MW] together with the power scale beta [1/MW]."""

    a: float
    beta: float

    def __post_init__(self):
        if not (self.a > 0 and self.beta > 0):
            raise ParameterError(
                f"slope requires a > 0 and beta > 0 (negative drift), got a={self.a}, beta={self.beta}"
            )

    @classmethod
    def from_a_tilde(cls, a_tilde: float, beta: float = 1.0) -> "NormalizedSlope":
        return cls(a_tilde / beta, beta)

    @property
    def a_tilde(self) -> float:
        return self.a * self.beta


def check_a_tilde(a_tilde: float) -> float:
    a_tilde = float(a_tilde)
    if not (a_tilde > 0 and math.isfinite(a_tilde)):
        raise ParameterError(
            f"a_tilde must be positive and finite (no stationary law otherwise), got {a_tilde}"
        )
    return a_tilde


def equivalent_gamma(beta: float, c: float, zeta: float = DEFAULT_ZETA) -> float:
    """Scale gamma giving GL(gamma, c, zeta) the variance 2/beta**2."""
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    if not 0.0 <= c <= 1.0:
        raise ParameterError(f"c must lie in [0, 1], got {c}")
    if not zeta >= 1.0:
        raise ParameterError(f"zeta must be >= 1, got {zeta}")
    return beta * math.sqrt(c / zeta**2 + (1.0 - c))


def pdf_y(law: IncrementLaw, y):
    y = np.abs(np.asarray(y, dtype=float))
    out = sum(w * 0.5 * rate * np.exp(-rate * y) for w, rate in law.components())
    return out if out.ndim else float(out)


def cdf_y(law: IncrementLaw, y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for w, rate in law.components():
        tail = 0.5 * np.exp(-rate * np.abs(y))
        out = out + w * np.where(y < 0, tail, 1.0 - tail)
    return out if out.ndim else float(out)


def _laplace_quantile(u, rate):
    return np.where(u < 0.5, np.log(2.0 * u) / rate, -np.log(2.0 * (1.0 - u)) / rate)


def inverse_cdf_y(law: IncrementLaw, u, aux=None):
    """Map uniform variates to increments.

    For GL the mixture component is picked by ``aux < c`` (narrow component)
    and the Laplace quantile of that component is applied to ``u``; this is
    exact because the mixture CDF is a convex combination.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ParameterError("uniform variates must lie strictly inside (0, 1)")
    if law.kind is LawKind.SIMPLE:
        out = _laplace_quantile(u, law.scale)
    else:
        if aux is None:
            raise ParameterError("generalized Laplace sampling needs the auxiliary variate")
        aux = np.asarray(aux, dtype=float)
        if np.any((aux <= 0.0) | (aux >= 1.0)):
            raise ParameterError("auxiliary variates must lie strictly inside (0, 1)")
        rate = np.where(aux < law.c, law.zeta * law.scale, law.scale)
        out = _laplace_quantile(u, rate)
    return out if out.ndim else float(out)


def open_uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform draws on the open interval (0, 1); exact zeros are redrawn."""
    u = rng.random(size)
    bad = u == 0.0
    while bad.any():
        u[bad] = rng.random(int(bad.sum()))
        bad = u == 0.0
    return u


def sample_y(law: IncrementLaw, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` increments; stream order is all ``u`` first, then all ``aux``."""
    u = open_uniform(rng, size)
    aux = open_uniform(rng, size) if law.kind is LawKind.GENERALIZED else None
    return inverse_cdf_y(law, u, aux)


def pdf_x(law: IncrementLaw, a: float, x):
    """Density of X = -Y - a."""
    return pdf_y(law, -np.asarray(x, dtype=float) - a)


def pdf_x_normalized(a_tilde: float, x):
    """SL kernel in normalized units: 0.5*exp(-|x + a_tilde|)."""
    out = 0.5 * np.exp(-np.abs(np.asarray(x, dtype=float) + a_tilde))
    return out if out.ndim else float(out)


def mgf_x(a_tilde: float, theta: float) -> float:
    """E[exp(theta X)] for the normalized SL effective increment."""
    if not abs(theta) < 1.0:
        raise ParameterError(f"MGF of the Laplace increment needs |theta| < 1, got {theta}")
    return math.exp(-a_tilde * theta) / (1.0 - theta * theta)


@dataclass(frozen=True)
class ContractionCertificate:
    theta: float
    mgf: float

    @property
    def contracts(self) -> bool:
        return self.mgf < 1.0


def _log_mgf_x(a_tilde: float, theta: float) -> float:
    return -a_tilde * theta - math.log1p(-theta * theta)


def optimal_theta(a_tilde: float, tol: float = 1e-12) -> ContractionCertificate:
    """Minimize the MGF over (0, 1) by golden-section search.

    The search runs on the log-MGF, which is convex and does not underflow
    for steep slopes.
    """
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, 1.0 - 1e-12
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = _log_mgf_x(a_tilde, x1), _log_mgf_x(a_tilde, x2)
    while hi - lo > tol:
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = _log_mgf_x(a_tilde, x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = _log_mgf_x(a_tilde, x2)
    theta = 0.5 * (lo + hi)
    return ContractionCertificate(theta, math.exp(_log_mgf_x(a_tilde, theta)))
