import numpy as np
import pytest
from scipy.linalg import toeplitz

from bessramp.distributions import ParameterError
from bessramp.metrics import l1_distance
from bessramp.neumann import SolverError, solve_neumann
from bessramp.nystrom import (
    DiscreteOperator,
    NonContractionError,
    QuadratureGrid,
    build_operator,
    default_b_max,
    make_grid,
    solve_nystrom,
    solve_picard,
    solve_resolvent,
)


def test_grid_geometry():
    grid = QuadratureGrid(4, 2.0)
    assert grid.n_points == 5 and grid.h == 0.5
    np.testing.assert_allclose(grid.nodes, [0, 0.5, 1, 1.5, 2])
    np.testing.assert_allclose(grid.weights, [0.5, 1, 1, 1, 0.5])
    with pytest.raises(ParameterError):
        QuadratureGrid(0, 1.0)
    with pytest.raises(ParameterError):
        QuadratureGrid(10, -1.0)


def test_default_truncation_rule():
    for a_tilde in (0.3, 5.0, 1e4):  # the floor of 30 binds only for very steep slopes
        theta = (np.sqrt(1 + a_tilde**2) - 1) / a_tilde
        assert default_b_max(a_tilde) == pytest.approx(max(30.0, 30 / theta), rel=1e-6)


def test_operator_is_weighted_toeplitz():
    grid = QuadratureGrid(6, 3.0)
    op = build_operator(grid, 0.8)
    b = grid.nodes
    kern = 0.5 * np.exp(-np.abs(b[:, None] - b[None, :] + 0.8))
    np.testing.assert_allclose(op.matrix, grid.h * kern * grid.weights[None, :], rtol=1e-15)
    np.testing.assert_allclose(op.matrix / grid.weights[None, :], toeplitz(op.matrix[:, 0] / 0.5, op.matrix[0] / grid.weights), rtol=1e-15)
    np.testing.assert_allclose(op.source, 0.5 * np.exp(-(b + 0.8)), rtol=1e-15)
    assert op.kernel(2, 5) == pytest.approx(0.5 * np.exp(-abs(-1.5 + 0.8)))


def test_interpolant_reproduces_nodes():
    sol = solve_nystrom(1.0, 400)
    np.testing.assert_allclose(sol.rescaled(sol.grid.nodes[:-1]), sol.u_vec[:-1], rtol=1e-12)
    assert sol.rescaled(sol.grid.b_max + 1.0) == 0.0
    with pytest.raises(ParameterError):
        sol.rescaled(-1.0)


@pytest.mark.parametrize("a_tilde", [0.5, 1.5])
def test_picard_matches_resolvent(a_tilde):
    op = build_operator(make_grid(a_tilde, 600), a_tilde)
    direct = solve_resolvent(op)
    iterated = solve_picard(op, iterations=500)
    np.testing.assert_allclose(iterated.u_vec, direct.u_vec, atol=1e-10)
    assert iterated.p0 == pytest.approx(direct.p0, abs=1e-10)


def test_picard_divergence_detected():
    grid = QuadratureGrid(50, 10.0)
    good = build_operator(grid, 0.5)
    blown = DiscreteOperator(grid, 0.5, 4.0 * good.kernel_samples)
    with pytest.raises(NonContractionError):
        solve_picard(blown, iterations=100)


def test_singular_system_rejected():
    grid = QuadratureGrid(2, 1.0)
    samples = np.zeros(5)
    samples[2] = 1.0 / grid.h  # K = diag(w): I - K singular in its interior row
    op = DiscreteOperator(grid, 1.0, samples)
    with pytest.raises(SolverError):
        solve_resolvent(op)


def test_grid_refinement_is_second_order():
    a_tilde, b_max = 0.9, 40.0
    sols = [solve_nystrom(a_tilde, n, b_max) for n in (400, 800, 1600)]
    reference = solve_neumann(a_tilde)
    errs = [abs(s.p0 - reference.p0) for s in sols]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.15)


def test_distribution_functions_consistent():
    sol = solve_nystrom(0.9)
    assert sol.survival(0.0) == pytest.approx(1 - sol.p0, abs=1e-12)
    b = np.linspace(0, 20, 200)
    assert np.all(np.diff(sol.cdf(b)) >= 0)
    q99 = sol.percentile(0.99)
    assert sol.cdf(q99) == pytest.approx(0.99, abs=1e-9)
    assert sol.percentile(0.3) == 0.0
    assert l1_distance(sol, solve_neumann(0.9, 100)) < 1e-3


def test_huge_slope_leaves_point_mass_only():
    sol = solve_nystrom(10.0)
    assert sol.p0 == pytest.approx(1.0, abs=1e-4)
    assert sol.percentile(0.99) == 0.0
