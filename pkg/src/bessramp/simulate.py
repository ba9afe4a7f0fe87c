"""Monte Carlo reference for the battery power law.

A primary power series is integrated from IID increments (optionally clamped
to [0, p_max]), the negative-ramp dispatch rule is applied step by step and
the resulting battery power trace is reduced to a zero fraction plus a
histogram density in normalized units.

Step convention: with R the grid power and Delta_n = P_n - R_{n-1},

    B_n = max(-Delta_n - a, 0),    R_n = P_n + B_n,

which equals the Lindley form B_n = max(B_{n-1} - Y_n - a, 0) whenever no
clamp fires.

RNG: ``numpy.random.Generator(PCG64(seed))``, one generator per trace; the
stream is consumed as n_steps uniforms for the quantile and then, for GL
laws only, n_steps uniforms for the mixture pick. Replicas use seed + index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba
import numpy as np

from .distributions import IncrementLaw, ParameterError, sample_y

DEFAULT_BIN_WIDTH = 0.05
DEFAULT_BURN_IN = 10_000
DEFAULT_P_MAX_TILDE = 90.0


@dataclass(frozen=True)
class SimulationConfig:
    """One Monte Carlo trace.

    ``a`` and ``p_max``/``p_init`` are in MW. ``beta`` is the SL-equivalent
    inverse power scale used to normalize the battery power; it defaults to
    the law's own equivalent scale. ``p_max=inf`` disables clamping.
    """

    law: IncrementLaw
    n_steps: int
    a: float
    p_max: float = math.inf
    p_init: float | None = None
    seed: int = 0
    bin_width: float = DEFAULT_BIN_WIDTH
    burn_in: int = DEFAULT_BURN_IN
    beta: float | None = None

    def __post_init__(self):
        if self.n_steps < 1:
            raise ParameterError("n_steps must be >= 1")
        if not self.a > 0:
            raise ParameterError("tolerable step change a must be > 0")
        if not self.p_max > 0:
            raise ParameterError("p_max must be > 0")
        if not self.bin_width > 0:
            raise ParameterError("bin_width must be > 0")
        if self.burn_in < 0:
            raise ParameterError("burn_in must be >= 0")
        if not 0.0 <= self.initial_power <= self.p_max:
            raise ParameterError("p_init must lie in [0, p_max]")

    @classmethod
    def normalized(
        cls,
        law: IncrementLaw,
        a_tilde: float,
        n_steps: int,
        p_max_tilde: float | None = DEFAULT_P_MAX_TILDE,
        **kwargs,
    ) -> "SimulationConfig":
        """Config from normalized slope and capacity (``p_max_tilde=None`` is unbounded)."""
        beta = kwargs.pop("beta", None) or law.equivalent_beta
        p_max = math.inf if p_max_tilde is None else p_max_tilde / beta
        return cls(law, n_steps, a_tilde / beta, p_max=p_max, beta=beta, **kwargs)

    @property
    def norm_beta(self) -> float:
        return self.beta if self.beta is not None else self.law.equivalent_beta

    @property
    def a_tilde(self) -> float:
        return self.a * self.norm_beta

    @property
    def initial_power(self) -> float:
        if self.p_init is not None:
            return self.p_init
        return 0.5 * self.p_max if math.isfinite(self.p_max) else 0.0

    def replica(self, index: int) -> "SimulationConfig":
        return replace(self, seed=self.seed + index)


@numba.njit(cache=True)
def _integrate_clamped(y, p_init, p_max):
    n = y.shape[0]
    p = np.empty(n + 1)
    p[0] = p_init
    for i in range(n):
        v = p[i] + y[i]
        if v < 0.0:
            v = 0.0
        elif v > p_max:
            v = p_max
        p[i + 1] = v
    return p


@numba.njit(cache=True)
def _dispatch(p, a):
    n = p.shape[0]
    b = np.zeros(n)
    r = np.empty(n)
    delta = np.zeros(n)
    r[0] = p[0]
    for i in range(1, n):
        d = p[i] - r[i - 1]
        delta[i] = d
        v = -d - a
        b[i] = v if v > 0.0 else 0.0
        r[i] = p[i] + b[i]
    return b, r, delta


@numba.njit(cache=True)
def _lindley(y, a):
    n = y.shape[0]
    b = np.zeros(n + 1)
    for i in range(n):
        v = b[i] - y[i] - a
        b[i + 1] = v if v > 0.0 else 0.0
    return b


def synthesize_power(config: SimulationConfig, increments: np.ndarray | None = None) -> np.ndarray:
    """Primary power P_0..P_N with P_n = clamp(P_{n-1} + Y_n, 0, p_max)."""
    if increments is None:
        rng = np.random.Generator(np.random.PCG64(config.seed))
        increments = sample_y(config.law, rng, config.n_steps)
    y = np.ascontiguousarray(increments, dtype=float)
    return _integrate_clamped(y, float(config.initial_power), float(config.p_max))


@dataclass(frozen=True)
class DispatchTrace:
    power: np.ndarray
    battery: np.ndarray
    grid: np.ndarray
    delta: np.ndarray  # delta[0] is undefined and stored as 0
    a: float

    @property
    def grid_changes(self) -> np.ndarray:
        return np.diff(self.grid)

    @property
    def realized_increments(self) -> np.ndarray:
        return np.diff(self.power)

    def export(self, path) -> None:
        """Whitespace-delimited columns n, P, B, R."""
        n = np.arange(self.power.size)
        np.savetxt(
            path,
            np.column_stack([n, self.power, self.battery, self.grid]),
            fmt=["%d", "%.9g", "%.9g", "%.9g"],
            header="n P B R",
            comments="",
        )


def run_dispatch(power: np.ndarray, a: float) -> DispatchTrace:
    """Battery power for strict negative-ramp compliance, starting from B_0 = 0."""
    if not a > 0:
        raise ParameterError("tolerable step change a must be > 0")
    p = np.ascontiguousarray(power, dtype=float)
    b, r, delta = _dispatch(p, float(a))
    return DispatchTrace(p, b, r, delta, float(a))


def lindley_recursion(increments: np.ndarray, a: float) -> np.ndarray:
    """B_n = max(B_{n-1} - Y_n - a, 0) with B_0 = 0."""
    return _lindley(np.ascontiguousarray(increments, dtype=float), float(a))


@dataclass(frozen=True)
class ViolationCounts:
    controlled: float  # fraction of steps with Delta_n < -a
    raw: float  # fraction of steps with Y_n < -a


def violation_rate(trace: DispatchTrace) -> ViolationCounts:
    y = trace.realized_increments
    delta = trace.delta[1:]
    if y.size == 0:
        return ViolationCounts(0.0, 0.0)
    return ViolationCounts(float(np.mean(delta < -trace.a)), float(np.mean(y < -trace.a)))


@dataclass(frozen=True)
class EmpiricalLaw:
    """Zero fraction plus histogram density of the positive normalized battery power."""

    zero_fraction: float
    edges: np.ndarray = field(repr=False)
    densities: np.ndarray = field(repr=False)
    n_effective: int
    label: str = "simulate"

    @property
    def p0(self) -> float:
        return self.zero_fraction

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0]) if self.edges.size > 1 else 0.0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def total_mass(self) -> float:
        return self.zero_fraction + float(np.sum(self.densities) * self.bin_width)

    def density(self, b_tilde):
        b = np.asarray(b_tilde, dtype=float)
        if self.densities.size == 0:
            out = np.zeros(b.shape)
        else:
            idx = np.floor((b - self.edges[0]) / self.bin_width).astype(int)
            inside = (idx >= 0) & (idx < self.densities.size)
            out = np.where(inside, self.densities[np.clip(idx, 0, self.densities.size - 1)], 0.0)
        return out if b.ndim else float(out)

    def _cumulative(self) -> np.ndarray:
        return self.zero_fraction + np.concatenate([[0.0], np.cumsum(self.densities) * self.bin_width])

    def cdf(self, b_tilde):
        b = np.asarray(b_tilde, dtype=float)
        if self.densities.size == 0:
            out = np.ones(b.shape)
        else:
            out = np.interp(b, self.edges, self._cumulative(), left=self.zero_fraction, right=1.0)
        return out if b.ndim else float(out)

    def survival(self, b_tilde):
        return 1.0 - self.cdf(b_tilde)

    def percentile(self, q: float) -> float:
        """Quantile with linear interpolation inside the containing bin."""
        if not 0.0 < q < 1.0:
            raise ParameterError(f"percentile level must lie in (0, 1), got {q}")
        if q <= self.zero_fraction or self.densities.size == 0:
            return 0.0
        cum = self._cumulative()
        idx = int(np.searchsorted(cum, q, side="left"))
        idx = min(max(idx, 1), cum.size - 1)
        c0, c1 = cum[idx - 1], cum[idx]
        frac = 0.0 if c1 == c0 else (q - c0) / (c1 - c0)
        return float(self.edges[idx - 1] + frac * self.bin_width)

    def tail_bound(self) -> float:
        return float(self.edges[-1]) if self.edges.size else 0.0

    def summary(self, percentiles=(0.9, 0.95, 0.99)) -> dict:
        return {
            "zero_fraction": self.zero_fraction,
            "n_effective": self.n_effective,
            "bin_width": self.bin_width,
            "percentiles": {str(q): self.percentile(q) for q in percentiles},
        }

    def export(self, csv_path, json_path=None, percentiles=(0.9, 0.95, 0.99)) -> None:
        lines = ["bin_left,density"]
        lines += [f"{left:.9g},{d:.9g}" for left, d in zip(self.edges[:-1], self.densities)]
        Path(csv_path).write_text("\n".join(lines) + "\n")
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.summary(percentiles), indent=2))


def reduce_to_law(
    battery: np.ndarray,
    beta: float,
    bin_width: float = DEFAULT_BIN_WIDTH,
    burn_in: int = DEFAULT_BURN_IN,
    label: str = "simulate",
) -> EmpiricalLaw:
    """Zero fraction and bin densities of b = beta*B after discarding ``burn_in`` steps.

    Bins start at 0 with width ``bin_width``; densities are normalized by the
    total retained count so that zero_fraction + sum(density)*width = 1.
    """
    battery = np.asarray(battery, dtype=float)
    if battery.size == 0:
        raise ParameterError("battery series is empty")
    kept = battery[burn_in:] if battery.size > burn_in else battery
    n = kept.size
    positive = kept[kept > 0.0] * beta
    zero_fraction = 1.0 - positive.size / n
    if positive.size == 0:
        return EmpiricalLaw(1.0, np.zeros(0), np.zeros(0), n, label)
    n_bins = int(math.floor(positive.max() / bin_width)) + 1
    edges = np.arange(n_bins + 1) * bin_width
    counts = np.bincount(np.minimum((positive / bin_width).astype(np.int64), n_bins - 1), minlength=n_bins)
    densities = counts / (n * bin_width)
    return EmpiricalLaw(zero_fraction, edges, densities, n, label)


def simulate(config: SimulationConfig) -> tuple[EmpiricalLaw, DispatchTrace]:
    power = synthesize_power(config)
    trace = run_dispatch(power, config.a)
    law = reduce_to_law(trace.battery, config.norm_beta, config.bin_width, config.burn_in)
    return law, trace


def simulate_law(config: SimulationConfig) -> EmpiricalLaw:
    return simulate(config)[0]
