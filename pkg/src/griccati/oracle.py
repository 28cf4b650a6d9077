"""Condensed batch formulation of the finite-horizon LQ cost.

Stacks the whole input sequence into one vector u and writes the cost as
J(u) = u^T H u + 2 g^T u + c, which gives an independent route to the
optimal cost for cross-checking the Riccati recursion.  Nothing here shares
code with the recursion beyond the shared linear algebra helpers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DEFAULT_TOL, Tolerance, pinv, symmetrize
from .model import LQProblem, require_valid


@dataclass(frozen=True)
class BatchQP:
    """Quadratic data of the stacked-input cost J(u) = u^T H u + 2 g^T u + c."""

    H: np.ndarray
    g: np.ndarray
    c: float

    @property
    def size(self) -> int:
        return self.H.shape[0]

    def cost(self, u) -> float:
        u = np.asarray(u, dtype=float).reshape(-1)
        return float(u @ self.H @ u + 2.0 * self.g @ u + self.c)


def batch_matrices(problem: LQProblem, x0=None, tol: Tolerance = DEFAULT_TOL) -> BatchQP:
    """Assemble H, g, c for the stacked input u = (u_0, ..., u_{T-1}).

    With state stack X = (x_0, ..., x_T) = Phi x0 + Gamma u (Phi stacks
    powers of A, Gamma is block lower triangular with blocks A^{i-1-j} B),
    block-diagonal weights Qbar = diag(Q, ..., Q, P) and Rbar = diag(R, ..., R),
    and the cross-weight Sbar placing S on the first T diagonal blocks:

        H = Gamma^T Qbar Gamma + Gamma^T Sbar + Sbar^T Gamma + Rbar
        g = (Gamma^T Qbar + Sbar^T) Phi x0
        c = x0^T Phi^T Qbar Phi x0
    """
    require_valid(problem, tol)
    if x0 is None:
        x0 = problem.x0
    if x0 is None:
        raise ValueError("no initial state: problem has no x0 and none was supplied")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n, m, T = problem.n, problem.m, problem.T
    if x0.shape[0] != n:
        raise ValueError(f"x0 has length {x0.shape[0]}, expected {n}")
    t3 = problem.triple
    A, B, Q, S, R = t3.A, t3.B, t3.Q, t3.S, t3.R

    # Powers of A up to T, shared by Phi and Gamma.
    powers = [np.eye(n)]
    for _ in range(T):
        powers.append(A @ powers[-1])

    Phi = np.vstack(powers)  # (T+1) n x n
    Gamma = np.zeros(((T + 1) * n, T * m))
    for i in range(1, T + 1):
        for j in range(i):
            Gamma[i * n : (i + 1) * n, j * m : (j + 1) * m] = powers[i - 1 - j] @ B

    Qbar = np.zeros(((T + 1) * n, (T + 1) * n))
    for t in range(T):
        Qbar[t * n : (t + 1) * n, t * n : (t + 1) * n] = Q
    Qbar[T * n :, T * n :] = problem.P

    Sbar = np.zeros(((T + 1) * n, T * m))
    for t in range(T):
        Sbar[t * n : (t + 1) * n, t * m : (t + 1) * m] = S

    Rbar = np.kron(np.eye(T), R)

    H = symmetrize(Gamma.T @ Qbar @ Gamma + Gamma.T @ Sbar + Sbar.T @ Gamma + Rbar)
    g = (Gamma.T @ Qbar + Sbar.T) @ Phi @ x0
    c = float(x0 @ Phi.T @ Qbar @ Phi @ x0)
    return BatchQP(H, g, c)


def batch_optimal(qp: BatchQP, tol: Tolerance = DEFAULT_TOL):
    """Minimum-norm minimiser and optimal value of the batch cost.

    u* = -H^+ g and J* = c - g^T H^+ g.  The pseudo-inverse matters: H is
    singular whenever some input direction has zero curvature, and the
    minimum-norm representative is then the canonical choice.  Tiny negative
    values of J* (round-off on problems whose true optimum is 0) are clamped.
    """
    H_pinv = pinv(qp.H, tol)
    u_star = -H_pinv @ qp.g
    j_star = qp.c - float(qp.g @ H_pinv @ qp.g)
    if -tol.residual_abs <= j_star < 0.0:
        j_star = 0.0
    return u_star, j_star
