"""Comparisons between stationary laws.

Every law object exposes ``p0``, ``density(b)``, ``percentile(q)``,
``tail_bound()`` and ``label``; empirical laws additionally carry their bin
edges. Continuous parts are compared on a set of equal-width bins evaluated
at the bin centers.

Two distance modes are offered:

* ``conditional`` (default): each continuous part is divided by its own mass
  1 - p0 before differencing, so the distance compares the shapes of the
  laws given B > 0. This is the convention that reproduces the published
  convergence ladder of the truncated series against simulation.
* ``absolute``: the raw densities g = p0 * u are differenced.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .distributions import ParameterError, check_a_tilde
from .neumann import (
    DEFAULT_M_MAX,
    CoefficientTable,
    SolverError,
    _exp_partial_sums,
    build_coefficients,
    poisson_weights,
    solve_neumann,
)
from .nystrom import solve_nystrom
from .simulate import EmpiricalLaw, SimulationConfig, simulate_law

DEFAULT_GRID_WIDTH = 0.05
MODES = ("conditional", "absolute")


class GridError(ValueError):
    """Two laws cannot be placed on a common evaluation grid."""


class ConvergenceError(SolverError):
    """The truncated series never reached the requested distance."""

    def __init__(self, message: str, best_order: int, best_distance: float):
        super().__init__(message)
        self.best_order = best_order
        self.best_distance = best_distance


@dataclass(frozen=True)
class EvaluationGrid:
    """Bins [i*width, (i+1)*width) for i < n_bins, evaluated at the centers."""

    width: float
    n_bins: int
    source: str = "uniform"

    def __post_init__(self):
        if not self.width > 0:
            raise GridError("bin width must be positive")
        if self.n_bins < 1:
            raise GridError("grid needs at least one bin")

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.width

    @property
    def upper(self) -> float:
        return self.n_bins * self.width

    def describe(self) -> dict:
        return {"width": self.width, "n_bins": self.n_bins, "upper": self.upper, "source": self.source}


def _empirical_grid(law: EmpiricalLaw) -> EvaluationGrid:
    if law.densities.size == 0:
        raise GridError(f"{law.label} has no continuous part to place on a grid")
    return EvaluationGrid(law.bin_width, law.densities.size, "empirical")


def common_grid(law_a, law_b, width: float = DEFAULT_GRID_WIDTH) -> EvaluationGrid:
    """Empirical bins when an empirical law is involved, else a uniform grid to the tail bound."""
    emp = [law for law in (law_a, law_b) if isinstance(law, EmpiricalLaw)]
    if len(emp) == 2:
        wa, wb = law_a.bin_width, law_b.bin_width
        if law_a.densities.size and law_b.densities.size and not math.isclose(wa, wb, rel_tol=1e-12):
            raise GridError(f"empirical bin widths differ ({wa} vs {wb})")
        nonempty = [law for law in emp if law.densities.size]
        if not nonempty:
            return EvaluationGrid(width, 1, "empirical")
        n = max(law.densities.size for law in nonempty)
        return EvaluationGrid(nonempty[0].bin_width, n, "empirical")
    if emp:
        if emp[0].densities.size == 0:
            other = law_b if emp[0] is law_a else law_a
            upper = max(other.tail_bound(), width)
            return EvaluationGrid(width, int(math.ceil(upper / width)), "uniform")
        return _empirical_grid(emp[0])
    upper = max(law_a.tail_bound(), law_b.tail_bound(), width)
    return EvaluationGrid(width, int(math.ceil(upper / width)), "uniform")


def _continuous_mass(law) -> float:
    return 1.0 - law.p0


def _values_on(law, grid: EvaluationGrid) -> np.ndarray:
    """Density of ``law`` on the grid bins (bin densities for empirical laws)."""
    if isinstance(law, EmpiricalLaw):
        out = np.zeros(grid.n_bins)
        if law.densities.size:
            if not math.isclose(law.bin_width, grid.width, rel_tol=1e-12):
                raise GridError(f"{law.label} bins do not match the evaluation grid")
            n = min(law.densities.size, grid.n_bins)
            out[:n] = law.densities[:n]
        return out
    return np.asarray(law.density(grid.centers), dtype=float)


def _normalize(values: np.ndarray, law, mode: str) -> np.ndarray:
    if mode == "absolute":
        return values
    mass = _continuous_mass(law)
    return values / mass if mass > 0 else np.zeros_like(values)


def l1_distance(law_a, law_b, grid: EvaluationGrid | None = None, mode: str = "conditional") -> float:
    """Sum over bins of |g_A - g_B| * width; point masses are excluded."""
    if mode not in MODES:
        raise ParameterError(f"unknown distance mode {mode!r}; choose from {MODES}")
    grid = common_grid(law_a, law_b) if grid is None else grid
    ga = _normalize(_values_on(law_a, grid), law_a, mode)
    gb = _normalize(_values_on(law_b, grid), law_b, mode)
    return float(np.sum(np.abs(ga - gb)) * grid.width)


@dataclass
class ComparisonReport:
    labels: tuple[str, str]
    d_l1: float
    p0_delta: float
    percentile_deltas: dict[str, float]
    grids_used: dict
    mode: str = "conditional"
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["labels"] = list(self.labels)
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def compare(
    law_a,
    law_b,
    percentiles: Sequence[float] = (0.9, 0.95, 0.99),
    grid: EvaluationGrid | None = None,
    mode: str = "conditional",
) -> ComparisonReport:
    grid = common_grid(law_a, law_b) if grid is None else grid
    deltas = {str(q): abs(law_a.percentile(q) - law_b.percentile(q)) for q in percentiles}
    return ComparisonReport(
        labels=(law_a.label, law_b.label),
        d_l1=l1_distance(law_a, law_b, grid, mode),
        p0_delta=law_a.p0 - law_b.p0,
        percentile_deltas=deltas,
        grids_used=grid.describe(),
        mode=mode,
    )


def series_distances(
    a_tilde: float,
    reference,
    m_max: int = DEFAULT_M_MAX,
    grid: EvaluationGrid | None = None,
    mode: str = "conditional",
    table: CoefficientTable | None = None,
) -> np.ndarray:
    """D(analytic_M, reference) for every M = 0..m_max from one coefficient table.

    The density of order M is a cumulative sum over rows, so every order is
    read off the same Poisson-weight matrix.
    """
    a_tilde = check_a_tilde(a_tilde)
    if mode not in MODES:
        raise ParameterError(f"unknown distance mode {mode!r}; choose from {MODES}")
    table = build_coefficients(a_tilde, m_max) if table is None else table.extended(m_max)
    if grid is None:
        if isinstance(reference, EmpiricalLaw):
            grid = _empirical_grid(reference)
        else:
            grid = EvaluationGrid(DEFAULT_GRID_WIDTH, int(math.ceil(max(reference.tail_bound(), 1.0) / DEFAULT_GRID_WIDTH)))
    ref = _normalize(_values_on(reference, grid), reference, mode)
    cumulative = np.cumsum(table.damped_matrix, axis=0)  # row M: column sums of rows 0..M
    weights = poisson_weights(grid.centers + a_tilde, table.order)
    u = math.exp(a_tilde) * cumulative @ weights.T  # (M, bins)
    omegas = np.cumsum(table.damped_matrix @ _exp_partial_sums(a_tilde, table.order))
    if mode == "conditional":
        g = u / omegas[:, None]  # p0*u / (1 - p0) = u / Omega
    else:
        g = u / (1.0 + omegas)[:, None]
    return np.sum(np.abs(g - ref[None, :]), axis=1) * grid.width


def terms_for_tolerance(
    a_tilde: float,
    reference,
    tol: float,
    m_max: int = DEFAULT_M_MAX,
    grid: EvaluationGrid | None = None,
    mode: str = "conditional",
) -> int:
    """Smallest truncation order M with D(analytic_M, reference) <= tol."""
    if not tol > 0:
        raise ParameterError("tolerance must be positive")
    dist = series_distances(a_tilde, reference, m_max, grid, mode)
    hits = np.nonzero(dist <= tol)[0]
    if hits.size == 0:
        best = int(np.argmin(dist))
        raise ConvergenceError(
            f"no order up to {m_max} reaches D={tol} at a_tilde={a_tilde} "
            f"(best D={dist[best]:.4g} at M={best})",
            best,
            float(dist[best]),
        )
    return int(hits[0])


@dataclass(frozen=True)
class MethodSpec:
    """analytic(order), nystrom(n_intervals, b_max) or simulate(config template)."""

    kind: str
    order: int | None = None
    n_intervals: int = 1000
    b_max: float | None = None
    simulation: SimulationConfig | None = None

    def __post_init__(self):
        if self.kind not in ("analytic", "nystrom", "simulate"):
            raise ParameterError(f"unknown method {self.kind!r}")
        if self.kind == "simulate" and self.simulation is None:
            raise ParameterError("simulate method needs a configuration template")

    @classmethod
    def analytic(cls, order: int | None = None) -> "MethodSpec":
        return cls("analytic", order=order)

    @classmethod
    def nystrom(cls, n_intervals: int = 1000, b_max: float | None = None) -> "MethodSpec":
        return cls("nystrom", n_intervals=n_intervals, b_max=b_max)

    @classmethod
    def simulate(cls, template: SimulationConfig) -> "MethodSpec":
        return cls("simulate", simulation=template)

    @property
    def params(self) -> str:
        if self.kind == "analytic":
            return "M=adaptive" if self.order is None else f"M={self.order}"
        if self.kind == "nystrom":
            return f"N={self.n_intervals}" + ("" if self.b_max is None else f";b_max={self.b_max}")
        s = self.simulation
        p_max = "inf" if math.isinf(s.p_max) else f"{s.p_max * s.norm_beta:.9g}"
        return f"n_steps={s.n_steps};seed={s.seed};p_max_tilde={p_max}"

    def solve(self, a_tilde: float):
        """Law at ``a_tilde``; simulations keep the template's scale and normalized capacity."""
        a_tilde = check_a_tilde(a_tilde)
        if self.kind == "analytic":
            return solve_neumann(a_tilde, self.order)
        if self.kind == "nystrom":
            return solve_nystrom(a_tilde, self.n_intervals, self.b_max)
        s = self.simulation
        beta = s.norm_beta
        p_max_tilde = None if math.isinf(s.p_max) else s.p_max * beta
        cfg = SimulationConfig.normalized(
            s.law, a_tilde, s.n_steps, p_max_tilde,
            beta=beta, seed=s.seed, bin_width=s.bin_width, burn_in=s.burn_in,
        )
        return simulate_law(cfg)


def timed_solve(method: MethodSpec, a_tilde: float):
    start = time.perf_counter()
    law = method.solve(a_tilde)
    return law, time.perf_counter() - start


@dataclass(frozen=True)
class CurvePoint:
    a_tilde: float
    b99: float
    method: str
    params: str


def p99_curve(a_tilde_values: Iterable[float], method: MethodSpec, q: float = 0.99) -> list[CurvePoint]:
    return [
        CurvePoint(float(a), method.solve(a).percentile(q), method.kind, method.params)
        for a in a_tilde_values
    ]


def curve_csv(points: Iterable[CurvePoint]) -> str:
    lines = ["a_tilde,b99,method,params"]
    lines += [f"{p.a_tilde:.9g},{p.b99:.9g},{p.method},{p.params}" for p in points]
    return "\n".join(lines) + "\n"
