"""Constrained generalised discrete algebraic Riccati equation (CGDARE).

A symmetric X solves the generalised DARE when

    D(X) = X - A^T X A + (A^T X B + S)(R + B^T X B)^+ (B^T X A + S^T) - Q = 0,

and the constrained equation additionally demands ker(R + B^T X B) be
contained in ker(A^T X B + S).  This module evaluates residuals, packages
the derived closed-loop quantities, searches for a reference solution by
fixed-point iteration, and compares pairs of solutions, whose difference is
pinned down on the closed loop's nilpotent eigenspace.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import (
    DEFAULT_TOL,
    Tolerance,
    check_symmetric,
    inertia,
    nilpotent_eigenspace,
    pinv,
    subspace_distance,
    symmetrize,
    within_residual,
)
from .model import LQProblem, PopovTriple
from .grde import riccati_map


class ReferenceRejectedError(ValueError):
    """A user-supplied candidate solution failed verification."""


def gdare_residual(X, triple: PopovTriple, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """The defect D(X); its norm is zero exactly at generalised DARE solutions."""
    Xs = check_symmetric(X, tol, "candidate solution")
    if Xs.shape[0] != triple.n:
        raise ValueError(f"candidate has size {Xs.shape[0]}, expected {triple.n}")
    return Xs - riccati_map(Xs, triple, tol)


@dataclass(frozen=True)
class CgdareSolution:
    """A candidate solution together with everything derived from it.

    R_X = R + B^T X B, S_X = A^T X B + S, K_X = R_X^+ S_X^T is the feedback
    gain, A_X = A - B K_X the closed loop.  U spans the generalised
    eigenspace of A_X at the eigenvalue zero and nu is its nilpotency index.
    kernel_condition_ok records the constraint ker R_X <= ker S_X.
    """

    X: np.ndarray
    triple: PopovTriple
    residual_norm: float
    kernel_condition_ok: bool
    R_X: np.ndarray
    S_X: np.ndarray
    K_X: np.ndarray
    A_X: np.ndarray
    inertia_RX: tuple
    U: np.ndarray
    nu: int

    def accepted(self, tol: Tolerance = DEFAULT_TOL) -> bool:
        return self.kernel_condition_ok and self.residual_norm <= tol.residual_abs


def closed_loop(X, triple: PopovTriple, tol: Tolerance = DEFAULT_TOL) -> CgdareSolution:
    """Evaluate a candidate X: residual, constraint, gain, closed loop, eigenspace."""
    Xs = check_symmetric(X, tol, "candidate solution")
    if Xs.shape[0] != triple.n:
        raise ValueError(f"candidate has size {Xs.shape[0]}, expected {triple.n}")
    A, B, S, R = triple.A, triple.B, triple.S, triple.R
    R_X = symmetrize(R + B.T @ Xs @ B)
    S_X = A.T @ Xs @ B + S
    R_X_pinv = pinv(R_X, tol)
    K_X = R_X_pinv @ S_X.T
    A_X = A - B @ K_X
    resid = float(np.linalg.norm(gdare_residual(Xs, triple, tol)))
    kercond = float(np.linalg.norm(S_X @ (np.eye(triple.m) - R_X_pinv @ R_X)))
    kercond_ok = within_residual(kercond, float(np.linalg.norm(S_X)), tol)
    # A_X can cancel to zero exactly (deadbeat loops), leaving pure rounding
    # noise; its kernel structure is judged against the size of its parents.
    loop_scale = float(np.linalg.norm(A)) + float(np.linalg.norm(B @ K_X))
    U, nu = nilpotent_eigenspace(A_X, tol, scale=loop_scale)
    return CgdareSolution(
        X=Xs,
        triple=triple,
        residual_norm=resid,
        kernel_condition_ok=kercond_ok,
        R_X=R_X,
        S_X=S_X,
        K_X=K_X,
        A_X=A_X,
        inertia_RX=inertia(R_X, tol),
        U=U,
        nu=nu,
    )


@dataclass(frozen=True)
class ReferenceConfig:
    """Knobs for the fixed-point reference search.

    The iteration runs X <- riccati_map(X) from seed (zero by default) until
    the step norm drops below residual_abs, then keeps polishing while the
    step keeps shrinking, down to polish_factor * residual_abs at most.
    """

    seed_matrix: Optional[np.ndarray] = None
    max_iter: int = 10000
    polish_factor: float = 1e-3
    divergence_norm: float = 1e100


@dataclass(frozen=True)
class ReferenceSearchResult:
    solution: Optional[CgdareSolution]
    converged: bool
    iterations: int
    message: str

    @property
    def found(self) -> bool:
        return self.solution is not None


def find_reference(
    problem: LQProblem,
    config: ReferenceConfig = ReferenceConfig(),
    tol: Tolerance = DEFAULT_TOL,
    X_ref: Optional[np.ndarray] = None,
) -> ReferenceSearchResult:
    """Find (or verify) a reference CGDARE solution for a problem.

    When X_ref is given it is verified and either returned or rejected with
    the measured residuals (ReferenceRejectedError).  Otherwise fixed-point
    iteration runs from the configured seed.  Divergence or stagnation gives
    a no-solution-found result rather than an exception; convergence of the
    iterates is not guaranteed for every problem.
    """
    triple = problem.triple
    if X_ref is not None:
        sol = closed_loop(X_ref, triple, tol)
        if not sol.accepted(tol):
            raise ReferenceRejectedError(
                "supplied reference rejected: residual "
                f"{sol.residual_norm:.3e} (limit {tol.residual_abs:.1e}), "
                f"kernel condition {'ok' if sol.kernel_condition_ok else 'violated'}"
            )
        return ReferenceSearchResult(sol, True, 0, "supplied reference verified")

    X = np.zeros((triple.n, triple.n)) if config.seed_matrix is None else symmetrize(
        np.asarray(config.seed_matrix, dtype=float)
    )
    if X.shape != (triple.n, triple.n):
        raise ValueError(f"seed matrix has shape {X.shape}, expected ({triple.n}, {triple.n})")

    target = tol.residual_abs
    floor = tol.residual_abs * config.polish_factor
    prev_step = np.inf
    reached = False
    plateau = 0
    it = 0
    for it in range(1, config.max_iter + 1):
        X_next = riccati_map(X, triple, tol)
        if not np.all(np.isfinite(X_next)) or np.linalg.norm(X_next) > config.divergence_norm:
            return ReferenceSearchResult(None, False, it, "iterates diverged")
        step = float(np.linalg.norm(X_next - X))
        X = X_next
        if step <= target:
            # Inside the acceptance band: polish down to the floor, stopping
            # early only when the step norm plateaus (round-off limit).
            reached = True
            if step <= floor:
                break
            plateau = plateau + 1 if step >= 0.999 * prev_step else 0
            if plateau >= 5:
                break
        prev_step = step
    if not reached:
        return ReferenceSearchResult(
            None, False, config.max_iter, f"no fixed point within {config.max_iter} iterations"
        )

    sol = closed_loop(X, triple, tol)
    if not sol.accepted(tol):
        return ReferenceSearchResult(
            None,
            False,
            it,
            f"iteration settled but candidate rejected (residual {sol.residual_norm:.3e})",
        )
    return ReferenceSearchResult(sol, True, it, "fixed point accepted")


@dataclass(frozen=True)
class ComparisonReport:
    """How two solutions of the same triple relate.

    coincidence_residual measures (X - Y) restricted to the first solution's
    nilpotent eigenspace, where all solutions of the constrained equation
    agree; subspace_distance compares the two eigenspaces themselves.  The
    two difference identities,

        D(X) - D(Y) = Delta - A_Y^T Delta A_X
        D(X) - D(Y) = Delta - A_Y^T Delta A_Y + A_Y^T Delta B R_X^+ B^T Delta A_Y

    with Delta = X - Y, hold whenever both kernel constraints do, solutions
    or not; their residuals are reported for whatever pair was supplied.
    """

    coincidence_residual: float
    subspace_distance: float
    nu_x: int
    nu_y: int
    dim_u_x: int
    dim_u_y: int
    inertia_RX: tuple
    inertia_RY: tuple
    inertia_match: bool
    identity_onestep_residual: float
    identity_quadratic_residual: float

    def to_dict(self):
        return {
            "coincidence_residual": self.coincidence_residual,
            "subspace_distance": self.subspace_distance,
            "nu_x": self.nu_x,
            "nu_y": self.nu_y,
            "dim_u_x": self.dim_u_x,
            "dim_u_y": self.dim_u_y,
            "inertia_RX": list(self.inertia_RX),
            "inertia_RY": list(self.inertia_RY),
            "inertia_match": self.inertia_match,
            "identity_onestep_residual": self.identity_onestep_residual,
            "identity_quadratic_residual": self.identity_quadratic_residual,
        }


def difference_identity_residuals(X, Y, triple: PopovTriple, tol: Tolerance = DEFAULT_TOL):
    """Residual norms of the two D(X) - D(Y) identities for a symmetric pair."""
    Xs = check_symmetric(X, tol, "X")
    Ys = check_symmetric(Y, tol, "Y")
    A, B, S, R = triple.A, triple.B, triple.S, triple.R
    Delta = Xs - Ys

    R_X = R + B.T @ Xs @ B
    R_Y = R + B.T @ Ys @ B
    K_X = pinv(R_X, tol) @ (B.T @ Xs @ A + S.T)
    K_Y = pinv(R_Y, tol) @ (B.T @ Ys @ A + S.T)
    A_X = A - B @ K_X
    A_Y = A - B @ K_Y

    lhs = gdare_residual(Xs, triple, tol) - gdare_residual(Ys, triple, tol)
    onestep = lhs - (Delta - A_Y.T @ Delta @ A_X)
    quadratic = lhs - (Delta - A_Y.T @ Delta @ A_Y + A_Y.T @ Delta @ B @ pinv(R_X, tol) @ B.T @ Delta @ A_Y)
    return float(np.linalg.norm(onestep)), float(np.linalg.norm(quadratic))


def compare_solutions(
    sol_x: CgdareSolution, sol_y: CgdareSolution, tol: Tolerance = DEFAULT_TOL
) -> ComparisonReport:
    """Compare two accepted solutions of the same triple."""
    tx, ty = sol_x.triple, sol_y.triple
    same = all(
        np.array_equal(getattr(tx, f), getattr(ty, f)) for f in ("A", "B", "Q", "S", "R")
    )
    if not same:
        raise ValueError("solutions belong to different triples")

    Delta = sol_x.X - sol_y.X
    coincidence = float(np.linalg.norm(Delta @ sol_x.U, 2)) if sol_x.U.size else 0.0
    sub_dist = subspace_distance(sol_x.U, sol_y.U)
    onestep, quadratic = difference_identity_residuals(sol_x.X, sol_y.X, tx, tol)
    return ComparisonReport(
        coincidence_residual=coincidence,
        subspace_distance=sub_dist,
        nu_x=sol_x.nu,
        nu_y=sol_y.nu,
        dim_u_x=sol_x.U.shape[1],
        dim_u_y=sol_y.U.shape[1],
        inertia_RX=sol_x.inertia_RX,
        inertia_RY=sol_y.inertia_RX,
        inertia_match=sol_x.inertia_RX == sol_y.inertia_RX,
        identity_onestep_residual=onestep,
        identity_quadratic_residual=quadratic,
    )
