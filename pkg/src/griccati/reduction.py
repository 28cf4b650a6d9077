"""Reduction of the Riccati recursion onto the controlled coordinates.

Fix a reference solution X of the constrained algebraic equation and rotate
into an orthonormal basis [U, U_c] where U spans the nilpotent eigenspace of
its closed loop A_X.  In that basis A_X is block upper triangular with a
nilpotent leading block, and after nu backward steps the difference
Delta_t = X_t - X vanishes on U entirely: every later step only moves the
trailing diagonal block Psi_t.  The hybrid solver therefore runs nu full
steps, checks the predicted block structure, and iterates the small
homogeneous recursion for the rest of the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import (
    DEFAULT_TOL,
    InternalInconsistencyError,
    Tolerance,
    check_symmetric,
    is_nonsingular,
    orthonormal_complement,
    pinv,
    symmetrize,
)
from .model import LQProblem
from .cgdare import CgdareSolution
from .grde import GrdeTrajectory, gain_and_projector, riccati_map, solve_full


@dataclass(frozen=True)
class ReductionData:
    """Rotated data for the reduced recursion.

    T_orth = [U, U_c] is orthogonal; in its basis the closed loop of the
    reference solution reads [[N0, *], [0, Z]] with N0 nilpotent of index nu
    and Z non-singular.  B1, B2 are the corresponding row blocks of B, and
    X_circ_blocks = (X11, X12, X22) those of the reference solution.
    R0 = R + B2^T X22 B2 is the reduced curvature at the reference;
    R_full = R + B^T X B is the full curvature, which is what one backward
    step actually inverts (the two agree whenever U^T B = 0, in particular
    on problems whose nilpotent part is unreachable from the input).
    """

    T_orth: np.ndarray
    nu: int
    N0: np.ndarray
    Z: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    R0: np.ndarray
    R_full: np.ndarray
    X_circ: np.ndarray
    X_circ_blocks: tuple
    lower_left_norm: float
    nilpotent_defect: float

    @property
    def dim_u(self) -> int:
        return self.T_orth.shape[0] - self.Z.shape[0]

    @property
    def dim_reduced(self) -> int:
        return self.Z.shape[0]


def build_reduction(problem: LQProblem, reference: CgdareSolution, tol: Tolerance = DEFAULT_TOL) -> ReductionData:
    """Rotate the problem into the [U, U_c] basis of a reference solution.

    Verifies the structural consequences of the construction: the rotation
    is orthogonal, the lower-left block of the rotated closed loop is zero
    within tolerance (U is an invariant subspace) and N0^nu vanishes.  A
    singular trailing block Z contradicts the definition of U and raises
    InternalInconsistencyError.
    """
    if not reference.accepted(tol):
        raise ValueError(
            f"reference solution not accepted (residual {reference.residual_norm:.3e}, "
            f"kernel condition {'ok' if reference.kernel_condition_ok else 'violated'})"
        )
    n = problem.n
    U = reference.U
    U_c = orthonormal_complement(U, tol)
    T_orth = np.hstack([U, U_c]) if U.size else U_c
    k = U.shape[1]

    A_rot = T_orth.T @ reference.A_X @ T_orth
    N0 = A_rot[:k, :k]
    Z = A_rot[k:, k:]
    lower_left = float(np.linalg.norm(A_rot[k:, :k]))
    scale = float(np.linalg.norm(reference.A_X))
    if lower_left > tol.residual_abs + tol.residual_rel * scale:
        raise InternalInconsistencyError(
            f"nilpotent eigenspace is not invariant: lower-left norm {lower_left:.3e}"
        )
    if Z.shape[0] and not is_nonsingular(Z, tol):
        raise InternalInconsistencyError("trailing closed-loop block is singular")
    defect = float(np.linalg.norm(np.linalg.matrix_power(N0, reference.nu))) if k else 0.0
    if defect > tol.residual_abs + tol.residual_rel * scale:
        raise InternalInconsistencyError(
            f"leading block is not nilpotent of index {reference.nu}: defect {defect:.3e}"
        )

    B_rot = T_orth.T @ problem.triple.B
    B1, B2 = B_rot[:k, :], B_rot[k:, :]
    X_rot = T_orth.T @ reference.X @ T_orth
    X11, X12, X22 = X_rot[:k, :k], X_rot[:k, k:], X_rot[k:, k:]
    R0 = symmetrize(problem.triple.R + B2.T @ X22 @ B2)
    R_full = symmetrize(problem.triple.R + problem.triple.B.T @ reference.X @ problem.triple.B)
    return ReductionData(
        T_orth=T_orth,
        nu=reference.nu,
        N0=N0,
        Z=Z,
        B1=B1,
        B2=B2,
        R0=R0,
        R_full=R_full,
        X_circ=reference.X,
        X_circ_blocks=(X11, X12, X22),
        lower_left_norm=lower_left,
        nilpotent_defect=defect,
    )


def reduced_step(Psi, rd: ReductionData, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """One backward step of the homogeneous reduced recursion.

    Psi_prev = Z^T Psi Z - Z^T Psi B2 (R0 + B2^T Psi B2)^+ B2^T Psi Z.
    Psi = 0 is a fixed point, whose closed loop is Z itself.
    """
    Psi_s = check_symmetric(Psi, tol, "reduced-state Psi")
    if Psi_s.shape[0] != rd.dim_reduced:
        raise ValueError(f"Psi has size {Psi_s.shape[0]}, expected {rd.dim_reduced}")
    return _reduced_step_with_base(Psi_s, rd.R0, rd, tol)


def _reduced_step_with_base(Psi, base, rd: ReductionData, tol: Tolerance) -> np.ndarray:
    Z, B2 = rd.Z, rd.B2
    mid = pinv(base + B2.T @ Psi @ B2, tol)
    ZtP = Z.T @ Psi
    return symmetrize(ZtP @ Z - ZtP @ B2 @ mid @ B2.T @ Psi @ Z)


@dataclass(frozen=True)
class HybridSolveResult:
    """Trajectory plus the diagnostics of the hybrid strategy.

    used_fallback is set when the structural checkpoint failed and the
    result was recomputed by the plain full recursion; the measured block
    norms that triggered the fallback are kept either way.
    """

    trajectory: GrdeTrajectory
    nu: int
    dim_u: int
    dim_reduced: int
    full_steps: int
    reduced_steps: int
    checkpoint_off_norm: float
    checkpoint_threshold: float
    used_fallback: bool
    fallback_reason: str = ""


def checkpoint_blocks(Delta, rd: ReductionData):
    """Rotate a difference matrix and split it at the reduction boundary."""
    k = rd.dim_u
    D = rd.T_orth.T @ Delta @ rd.T_orth
    return D[:k, :k], D[:k, k:], D[k:, k:]


def solve_hybrid(problem: LQProblem, rd: ReductionData, tol: Tolerance = DEFAULT_TOL) -> HybridSolveResult:
    """Hybrid backward solve: nu full steps, then the reduced recursion.

    After nu full steps the difference to the reference solution is checked
    to be confined to the trailing diagonal block; beyond tolerance the
    solver falls back to the full recursion and reports the measured norms.
    Phase two steps the trailing block only and reassembles
    X_t = X_ref + T diag(0, Psi_t) T^T; the gains are recomputed from the
    assembled X_{t+1} exactly as in the full solver.  Horizons shorter than
    nu are delegated to the full solver as well.
    """
    T = problem.T
    nu = rd.nu
    triple = problem.triple

    if T < nu:
        traj = solve_full(problem, tol)
        return HybridSolveResult(
            trajectory=traj,
            nu=nu,
            dim_u=rd.dim_u,
            dim_reduced=rd.dim_reduced,
            full_steps=T,
            reduced_steps=0,
            checkpoint_off_norm=0.0,
            checkpoint_threshold=0.0,
            used_fallback=True,
            fallback_reason=f"horizon {T} shorter than nilpotency index {nu}",
        )

    X = [None] * (T + 1)
    X[T] = symmetrize(problem.P)
    for t in range(T - 1, T - nu - 1, -1):
        X[t] = riccati_map(X[t + 1], triple, tol)

    Delta = X[T - nu] - rd.X_circ
    D11, D12, D22 = checkpoint_blocks(Delta, rd)
    off_norm = float(max(np.linalg.norm(D11), np.linalg.norm(D12)))
    threshold = tol.residual_rel * (1.0 + float(np.linalg.norm(Delta)))
    if off_norm > threshold:
        traj = solve_full(problem, tol)
        return HybridSolveResult(
            trajectory=traj,
            nu=nu,
            dim_u=rd.dim_u,
            dim_reduced=rd.dim_reduced,
            full_steps=T,
            reduced_steps=0,
            checkpoint_off_norm=off_norm,
            checkpoint_threshold=threshold,
            used_fallback=True,
            fallback_reason="checkpoint block structure violated",
        )

    # Phase two: only the trailing block moves.  One backward step inverts
    # the full curvature R + B^T X_{t+1} B = R_full + B2^T Psi B2, which is
    # available from the reduced data alone.
    k = rd.dim_u
    Psi = D22
    for t in range(T - nu - 1, -1, -1):
        Psi = _reduced_step_with_base(Psi, rd.R_full, rd, tol)
        pad = np.zeros((rd.T_orth.shape[0],) * 2)
        pad[k:, k:] = Psi
        X[t] = symmetrize(rd.X_circ + rd.T_orth @ pad @ rd.T_orth.T)

    K = [None] * T
    G = [None] * T
    for t in range(T):
        K[t], G[t] = gain_and_projector(X[t + 1], triple, tol)
    traj = GrdeTrajectory(tuple(X), tuple(K), tuple(G))
    return HybridSolveResult(
        trajectory=traj,
        nu=nu,
        dim_u=rd.dim_u,
        dim_reduced=rd.dim_reduced,
        full_steps=nu,
        reduced_steps=T - nu,
        checkpoint_off_norm=off_norm,
        checkpoint_threshold=threshold,
        used_fallback=False,
    )


@dataclass(frozen=True)
class DeltaCheckReport:
    """Measured backing for the difference recursion and its deadbeat range.

    max_step_residual: worst ||Delta_t - F_{t+1} Delta_{t+1} A_X|| over the
    horizon, where F_{t+1} = A_X^T (I - Delta_{t+1} B (R + B^T X_{t+1} B)^+ B^T).
    max_deadbeat_residual: worst ||Delta_{T-tau} U|| over tau in [nu, T],
    the range where the difference must annihilate the nilpotent eigenspace.
    """

    max_step_residual: float
    max_deadbeat_residual: float
    step_residuals: tuple
    deadbeat_residuals: tuple


def delta_recursion_check(
    problem: LQProblem,
    reference: CgdareSolution,
    traj: GrdeTrajectory,
    tol: Tolerance = DEFAULT_TOL,
) -> DeltaCheckReport:
    """Measure the one-step difference identity and the deadbeat property."""
    if traj.horizon != problem.T:
        raise ValueError("trajectory horizon does not match the problem")
    A_X = reference.A_X
    B = problem.triple.B
    R = problem.triple.R
    U = reference.U
    T = problem.T

    deltas = [traj.X[t] - reference.X for t in range(T + 1)]
    step_residuals = []
    for t in range(T - 1, -1, -1):
        R_t = R + B.T @ traj.X[t + 1] @ B
        F = A_X.T @ (np.eye(problem.n) - deltas[t + 1] @ B @ pinv(R_t, tol) @ B.T)
        step_residuals.append(float(np.linalg.norm(deltas[t] - F @ deltas[t + 1] @ A_X)))
    deadbeat = []
    for tau in range(reference.nu, T + 1):
        val = float(np.linalg.norm(deltas[T - tau] @ U)) if U.size else 0.0
        deadbeat.append(val)
    return DeltaCheckReport(
        max_step_residual=max(step_residuals) if step_residuals else 0.0,
        max_deadbeat_residual=max(deadbeat) if deadbeat else 0.0,
        step_residuals=tuple(reversed(step_residuals)),
        deadbeat_residuals=tuple(deadbeat),
    )
