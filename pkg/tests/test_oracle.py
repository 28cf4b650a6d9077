import numpy as np
import pytest

from griccati.grde import optimal_cost, solve_full
from griccati.model import LQProblem, PopovTriple, random_problem
from griccati.oracle import batch_matrices, batch_optimal

from conftest import grid_minimize, scalar_two_step, simulated_cost


def test_canonical_two_step_assembly_frozen():
    # Hand computation for A=B=Q=R=1, S=0, P=0, T=2, x0=1: rolling the
    # dynamics gives x_1 = 1 + u_0 and x_2 never enters the cost (P = 0), so
    #   J = x_0^2 + u_0^2 + x_1^2 + u_1^2 = 2 + 2 u_0 + 2 u_0^2 + u_1^2.
    # In the J = c + 2 g.u + u.H u convention that is H = [[2, 0], [0, 1]],
    # g = (1, 0), c = 2, with minimiser u* = (-0.5, 0) and J* = 1.5.
    qp = batch_matrices(scalar_two_step())
    assert np.allclose(qp.H, [[2.0, 0.0], [0.0, 1.0]], atol=1e-12)
    assert np.allclose(qp.g, [1.0, 0.0], atol=1e-12)
    assert abs(qp.c - 2.0) <= 1e-12
    u, J = batch_optimal(qp)
    assert np.allclose(u, [-0.5, 0.0], atol=1e-12)
    assert abs(J - 1.5) <= 1e-12


def test_canonical_two_step_against_brute_force():
    # Independent confirmation: minimise the simulated cost (which never
    # touches the batch assembly) by nested grid search.
    problem = scalar_two_step()
    best_val, best_u = grid_minimize(lambda u: simulated_cost(problem, u), dim=2)
    assert abs(best_val - 1.5) <= 1e-6
    assert np.allclose(best_u, [-0.5, 0.0], atol=1e-4)


def test_quadratic_model_matches_simulation():
    # c + 2 g.u + u.H u must equal the rolled-out cost for arbitrary u.
    rng = np.random.default_rng(14)
    for i in range(20):
        problem = random_problem(2 + i % 3, 1 + i % 2, 1000 + i)
        qp = batch_matrices(problem)
        for _ in range(5):
            u = rng.normal(size=problem.T * problem.m)
            assert abs(qp.cost(u) - simulated_cost(problem, u)) <= 1e-8 * (1.0 + abs(qp.cost(u)))


def test_one_step_formulas():
    # T = 1 collapses to H = R + B^T P B, g = (S^T + B^T P A) x0,
    # c = x0^T (Q + A^T P A) x0.
    rng = np.random.default_rng(3)
    n, m = 3, 2
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    L = rng.normal(size=(n + m, n + m))
    Pi = L @ L.T
    Q, S, R = Pi[:n, :n], Pi[:n, n:], Pi[n:, n:]
    LP = rng.normal(size=(n, n))
    P = LP @ LP.T
    x0 = rng.normal(size=n)
    qp = batch_matrices(LQProblem(PopovTriple(A, B, Q, S, R), P, 1, x0))
    assert np.allclose(qp.H, R + B.T @ P @ B, atol=1e-10)
    assert np.allclose(qp.g, (S.T + B.T @ P @ A) @ x0, atol=1e-10)
    assert abs(qp.c - x0 @ (Q + A.T @ P @ A) @ x0) <= 1e-10 * (1.0 + abs(qp.c))


def test_agrees_with_backward_recursion():
    for i in range(30):
        kind = ("generic", "singular_R", "nilpotent_block")[i % 3]
        problem = random_problem(2 + i % 4, 1 + i % 3, 1100 + i, kind)
        traj = solve_full(problem)
        J_grde = optimal_cost(traj, problem.x0)
        _, J_oracle = batch_optimal(batch_matrices(problem))
        assert abs(J_grde - J_oracle) <= 1e-8 * (1.0 + abs(J_oracle)), (kind, i)


def test_minimiser_is_a_minimum():
    # No random perturbation may beat the computed minimiser, including on
    # problems with singular H (free directions must be flat, not descent).
    rng = np.random.default_rng(6)
    for i in range(10):
        problem = random_problem(3, 2, 1200 + i, "singular_R")
        qp = batch_matrices(problem)
        u_star, J_star = batch_optimal(qp)
        for _ in range(10):
            delta = rng.normal(size=u_star.shape[0])
            assert qp.cost(u_star + delta) >= J_star - 1e-9 * (1.0 + abs(J_star))


def test_singular_curvature_free_direction_flat():
    # Dead input channel: H has an exact kernel; moving along it must not
    # change the cost at all.
    n, m = 2, 2
    A = np.array([[0.3, 0.1], [0.0, 0.2]])
    B = np.array([[1.0, 0.0], [0.5, 0.0]])
    Q = np.eye(n)
    R = np.diag([1.0, 0.0])
    problem = LQProblem(PopovTriple(A, B, Q, np.zeros((n, m)), R), np.zeros((n, n)), 3, [1.0, -2.0])
    qp = batch_matrices(problem)
    u_star, J_star = batch_optimal(qp)
    kick = np.zeros_like(u_star)
    kick[1::m] = 7.0  # second channel of every step
    assert abs(qp.cost(u_star + kick) - J_star) <= 1e-9 * (1.0 + abs(J_star))


def test_cost_clamp_non_negative():
    # With PSD data the optimal value is mathematically >= 0; tiny negative
    # round-off must be clamped to exactly 0.0, not returned as -1e-17.
    for i in range(20):
        problem = random_problem(2 + i % 3, 1 + i % 2, 1300 + i, "singular_R")
        _, J = batch_optimal(batch_matrices(problem))
        assert J >= 0.0


def test_x0_required():
    problem = scalar_two_step()
    stripped = LQProblem(problem.triple, problem.P, problem.T)
    with pytest.raises(ValueError, match="x0|initial"):
        batch_matrices(stripped)
    qp = batch_matrices(stripped, x0=[2.0])
    assert abs(qp.c - 8.0) <= 1e-12  # scales quadratically
