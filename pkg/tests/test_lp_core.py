import math

import numpy as np
import pytest
import scipy.sparse as sp

from impulse_lp.lp_core import (LPStatus, SparseLP, from_mps, residuals, solve, to_mps)
from naive_simplex import tableau_simplex


def random_bounded_lp(rng, m=20, n=40, n_ub=0):
    """Feasible and bounded by construction: b = A x0 and c = A'y + s with s >= 0."""
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0, 1, n) * (rng.uniform(size=n) < 0.6)
    b = A @ x0
    y = rng.normal(size=m)
    s = rng.uniform(0, 1, n)
    c = A.T @ y + s
    G = rng.uniform(0, 1, size=(n_ub, n))
    h = G @ x0 + rng.uniform(0.1, 1, n_ub)
    return c, A, b, G, h


def test_trivial_equality():
    sol = solve(SparseLP(np.array([1.0]), np.array([[1.0]]), np.array([1.0])), method="simplex")
    assert sol.status is LPStatus.OPTIMAL
    assert math.isclose(sol.objective_value, 1.0)
    assert math.isclose(sol.primal[0], 1.0)


def test_degenerate_face():
    sol = solve(SparseLP(np.ones(2), np.array([[1.0, 1.0]]), np.array([1.0])), method="simplex")
    assert math.isclose(sol.objective_value, 1.0)
    assert math.isclose(sol.primal.sum(), 1.0)


def test_infeasible_and_unbounded_are_statuses():
    lp = SparseLP(np.ones(1), np.array([[1.0], [1.0]]), np.array([1.0, 2.0]))
    assert solve(lp, method="simplex").status is LPStatus.INFEASIBLE
    assert solve(lp, method="highs").status is LPStatus.INFEASIBLE
    lp = SparseLP(np.array([-1.0, 0.0]), np.array([[1.0, -1.0]]), np.array([0.0]))
    assert solve(lp, method="simplex").status is LPStatus.UNBOUNDED
    assert solve(lp, method="highs").status is LPStatus.UNBOUNDED


def test_empty_lp():
    sol = solve(SparseLP(np.zeros(0), None, None), method="simplex")
    assert sol.optimal and sol.objective_value == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_random_lp_matches_tableau_oracle(seed):
    rng = np.random.default_rng(seed)
    c, A, b, G, h = random_bounded_lp(rng, n_ub=3)
    status, x_ref, ref = tableau_simplex(c, A, b, G, h)
    assert status == "optimal"
    lp = SparseLP(c, sp.csr_matrix(A), b, sp.csr_matrix(G), h)
    for method in ("simplex", "highs"):
        sol = solve(lp, method=method)
        assert sol.optimal
        assert abs(sol.objective_value - ref) <= 1e-8 * (1 + abs(ref))
        r = residuals(lp, sol)
        assert r["primal"] <= 1e-8
        assert r["complementarity"] <= 1e-7
        assert r["gap"] <= 1e-7 * (1 + abs(sol.objective_value))


def test_scaling_objective_scales_value():
    rng = np.random.default_rng(11)
    c, A, b, _, _ = random_bounded_lp(rng, 10, 25)
    lp = SparseLP(c, A, b)
    base = solve(lp, method="simplex")
    scaled = solve(SparseLP(3.5 * c, A, b), method="simplex")
    assert math.isclose(scaled.objective_value, 3.5 * base.objective_value, rel_tol=1e-9)
    np.testing.assert_allclose(scaled.primal, base.primal, atol=1e-9)


def test_negative_rhs_and_inequalities():
    # min -x - y  s.t. -x - y >= -4  (written as x + y <= 4),  x - y = -1
    lp = SparseLP(np.array([-1.0, -1.0]), np.array([[1.0, -1.0]]), np.array([-1.0]),
                  np.array([[1.0, 1.0]]), np.array([4.0]))
    sol = solve(lp, method="simplex")
    assert math.isclose(sol.objective_value, -4.0)
    np.testing.assert_allclose(sol.primal, [1.5, 2.5])
    assert residuals(lp, sol)["gap"] <= 1e-9


def test_redundant_rows():
    A = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    lp = SparseLP(np.array([1.0, 2.0, 1.0]), A, np.array([1.0, 2.0, 1.0]))
    sol = solve(lp, method="simplex")
    assert sol.optimal
    assert math.isclose(sol.objective_value, 2.0)


def test_highly_degenerate_network_lp():
    # transportation problem with many ties exercises degenerate pivoting
    k = 6
    n = k * k
    A = np.zeros((2 * k, n))
    for i in range(k):
        for j in range(k):
            A[i, i * k + j] = 1
            A[k + j, i * k + j] = 1
    b = np.ones(2 * k)
    c = np.ones(n)
    sol = solve(SparseLP(c, A, b), method="simplex")
    assert math.isclose(sol.objective_value, k)


def test_mps_round_trip_is_exact():
    rng = np.random.default_rng(3)
    c, A, b, G, h = random_bounded_lp(rng, 4, 7, n_ub=2)
    lp = SparseLP(c, A, b, G, h)
    back = from_mps(to_mps(lp))
    np.testing.assert_array_equal(back.objective, lp.objective)
    np.testing.assert_array_equal(back.A_eq.toarray(), lp.A_eq.toarray())
    np.testing.assert_array_equal(back.b_ub, lp.b_ub)
    assert "0.1000000000000000055511151231257827021181583404541015625" in to_mps(
        SparseLP(np.array([0.1]), None, None))
