"""One test per acceptance criterion, at the stated tolerances.

Each test records a PASS/FAIL line that the terminal summary prints.
"""

import math
import time

import numpy as np
from conftest import A_MW, A_TILDE, BETA, reference_config
from scipy import integrate

from bessramp import IncrementLaw, SimulationConfig
from bessramp.distributions import pdf_x_normalized
from bessramp.metrics import l1_distance, series_distances, terms_for_tolerance
from bessramp.neumann import build_coefficients, closed_form_m2, solve_neumann
from bessramp.nystrom import build_operator, make_grid, solve_nystrom, solve_picard, solve_resolvent
from bessramp.simulate import simulate, simulate_law

QS = (0.90, 0.95, 0.99)


def _mw(law):
    return np.array([law.percentile(q) / BETA for q in QS])


def _best_time(fn, repeats=7):
    fn()
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def test_criterion_1_exact_coefficients(acceptance):
    start = time.perf_counter()
    rows = build_coefficients(0.37, 2).rows
    exact = rows[0].tolist() == [0.5] and rows[1].tolist() == [0.125, 0.25]
    rng = np.random.default_rng(2024)
    worst = 0.0
    for a in rng.uniform(0.05, 5.0, 10):
        row2 = build_coefficients(a, 2).rows[2]
        worst = max(worst, np.max(np.abs(row2 - [(1 + a) / 16, (1 + a) / 8, 1 / 16])))
    elapsed = time.perf_counter() - start
    ok = exact and worst <= 1e-14 and elapsed < 0.1
    acceptance(1, "exact leading coefficient rows", ok, f"(row2 err {worst:.1e}, {elapsed * 1e3:.1f} ms)")
    assert ok


def test_criterion_2_closed_form_oracle(acceptance):
    start = time.perf_counter()
    b = np.linspace(0.0, 20.0, 2001)
    worst = 0.0
    for a in (0.3, 0.9, 2.0):
        sol = solve_neumann(a, 2)
        u_cf, p0_cf = closed_form_m2(a, b)
        worst = max(worst, np.max(np.abs(sol.rescaled(b) - u_cf) / u_cf), abs(sol.p0 - p0_cf) / p0_cf)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 1.0
    acceptance(2, "three-term series equals closed form", ok, f"(rel err {worst:.1e}, {elapsed:.3f} s)")
    assert ok


def test_criterion_3_sizing_table(acceptance):
    start = time.perf_counter()
    a_tilde = A_MW * BETA
    m2 = _mw(solve_neumann(a_tilde, 2))
    m100 = _mw(solve_neumann(a_tilde, 100))
    law, _ = simulate(reference_config())
    sim = _mw(law)
    elapsed = time.perf_counter() - start
    ok = (
        np.all(np.abs(m2 - [2.01, 3.42, 6.61]) <= 0.02)
        and np.all(np.abs(m100 - [2.91, 4.62, 8.60]) <= 0.05)
        and np.all(np.abs(sim - [2.79, 4.46, 8.31]) <= 0.15)
        and elapsed < 30.0
    )
    detail = f"(M=2 {np.round(m2, 3)}, M=100 {np.round(m100, 3)}, sim {np.round(sim, 3)} MW, {elapsed:.1f} s)"
    acceptance(3, "sizing table in MW", ok, detail)
    assert ok


def test_criterion_4_p99_agreement(acceptance, bounded_run, unbounded_run):
    analytic = solve_neumann(A_TILDE, 100).percentile(0.99)
    free = unbounded_run[0].percentile(0.99)
    capped = bounded_run[0].percentile(0.99)
    reduction = 1.0 - capped / free
    ok = abs(analytic - 5.15) <= 0.02 and abs(free - 5.14) <= 0.10 and abs(reduction - 0.03) <= 0.02
    detail = f"(analytic {analytic:.4f}, unbounded sim {free:.4f}, capacity reduction {100 * reduction:.1f}%)"
    acceptance(4, "P99 agreement at the reference slope", ok, detail)
    assert ok


def test_criterion_5_convergence_ladder(acceptance, bounded_run):
    emp = bounded_run[0]
    ladder = series_distances(A_TILDE, emp, 100)[[3, 6, 100]]
    ladder_ok = np.all(np.abs(ladder - [0.077, 0.022, 0.020]) <= 0.01)
    refs = {}
    for a in (1.5, 0.1):
        refs[a] = simulate_law(SimulationConfig.normalized(IncrementLaw.simple(BETA), a, 5_000_000, 90.0, seed=2))
    steep = terms_for_tolerance(1.5, refs[1.5], 0.05)
    shallow = terms_for_tolerance(0.1, refs[0.1], 0.05, m_max=300)
    ok = ladder_ok and steep <= 2 and 120 <= shallow <= 250
    detail = f"(D = {np.round(ladder, 4)}, M(1.5) = {steep}, M(0.1) = {shallow})"
    acceptance(5, "convergence ladder and terms for D<=0.05", ok, detail)
    assert ok


def test_criterion_6_solver_cross_validation(acceptance):
    dists = {}
    nys_time = 0.0
    for a in (0.3, 0.9, 2.0):
        nys_time = max(nys_time, _best_time(lambda: solve_nystrom(a, 1000), repeats=3))
        dists[a] = l1_distance(solve_nystrom(a, 1000), solve_neumann(a, 100))
    t_analytic = _best_time(lambda: solve_neumann(0.9, 18))
    t_nystrom = _best_time(lambda: solve_nystrom(0.9, 1000))
    ok = max(dists.values()) <= 0.01 and nys_time < 0.5 and t_analytic < t_nystrom
    detail = (
        f"(D = {[f'{d:.1e}' for d in dists.values()]}, Nystrom {t_nystrom * 1e3:.1f} ms, "
        f"analytic M=18 {t_analytic * 1e3:.2f} ms)"
    )
    acceptance(6, "Nystrom vs analytic agreement and timing", ok, detail)
    assert ok


def _fixed_point_residual(sol, a):
    worst = 0.0
    for b in (0.0, 0.5, 2.0, 6.0, 12.0):
        integrand = lambda y: pdf_x_normalized(a, b - y) * sol.rescaled(y)  # noqa: E731
        kink = b + a
        conv = integrate.quad(integrand, 0, kink, limit=200, epsabs=1e-13)[0]
        conv += integrate.quad(integrand, kink, np.inf, limit=200, epsabs=1e-13)[0]
        worst = max(worst, abs(sol.rescaled(b) - pdf_x_normalized(a, b) - conv))
    return worst


def test_criterion_7_property_suite(acceptance, bounded_run, unbounded_run):
    rng = np.random.default_rng(7)
    norm_err = 0.0
    mono_ok, s0_err = True, 0.0
    for a, m in zip(rng.uniform(0.3, 3.5, 20), rng.integers(0, 60, 20)):
        sol = solve_neumann(a, int(m))
        mass = integrate.quad(sol.density, 0, np.inf, limit=400, epsabs=1e-12)[0]
        norm_err = max(norm_err, abs(sol.p0 + mass - 1.0))
        grid = np.linspace(0, 40, 801)
        mono_ok &= bool(np.all(np.diff(sol.cdf(grid)) >= -1e-15))
        s0_err = max(s0_err, abs(sol.survival(0.0) - (1 - sol.p0)))

    compliance = min(trace.grid_changes.min() + trace.a for _, trace in (bounded_run, unbounded_run))

    pairs = [(0.9, 1.0), (1.8, 0.5), (3.6, 0.25)]
    analytic = [solve_neumann(a * b, 60) for a, b in pairs]
    identical = all(np.array_equal(s.table.damped_matrix, analytic[0].table.damped_matrix) for s in analytic)
    sims = [
        simulate_law(SimulationConfig(IncrementLaw.simple(b), 5_000_000, a, seed=10 + i)).percentile(0.99)
        for i, (a, b) in enumerate(pairs)
    ]
    scale_ok = identical and max(sims) - min(sims) <= 0.15

    residual = max(_fixed_point_residual(solve_neumann(a, 100), a) for a in (0.5, 0.9, 2.0))

    picard_err = 0.0
    for a in (0.9, 2.0):
        op = build_operator(make_grid(a, 1000), a)
        picard_err = max(picard_err, np.max(np.abs(solve_picard(op, 100, step_tol=None).u_vec - solve_resolvent(op).u_vec)))

    ok = (
        norm_err <= 1e-8 and mono_ok and s0_err <= 1e-12 and compliance >= -1e-9
        and scale_ok and residual < 1e-6 and picard_err <= 1e-8
    )
    detail = (
        f"(norm {norm_err:.1e}, S(0) {s0_err:.1e}, compliance {compliance:.1e}, "
        f"P99 spread {max(sims) - min(sims):.3f}, residual {residual:.1e}, Picard {picard_err:.1e})"
    )
    acceptance(7, "property suite", ok, detail)
    assert ok


def test_criterion_8_generalized_law(acceptance):
    slopes = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
    ratios = []
    for a in slopes:
        gl = simulate_law(SimulationConfig.normalized(IncrementLaw.equal_variance(1.0, 0.25), a, 5_000_000, None, seed=3))
        ratios.append(gl.percentile(0.99) / solve_neumann(a).percentile(0.99))
    ratios = np.array(ratios)
    heavy = simulate_law(SimulationConfig.normalized(IncrementLaw.equal_variance(1.0, 0.5), 3.0, 5_000_000, None, seed=3))
    twice = heavy.percentile(0.99) / solve_neumann(3.0).percentile(0.99)
    ok = (
        np.all(ratios[2:] > 1.0)
        and np.all(ratios[:2] <= 1.10)
        and np.all(np.diff(ratios) > 0)
        and abs(twice - 2.0) <= 0.6
    )
    detail = f"(GL/SL P99 ratios {np.round(ratios, 3)}, c=0.5 at 3.0: {twice:.2f}x)"
    acceptance(8, "generalized-law P99 ordering", ok, detail)
    assert ok
