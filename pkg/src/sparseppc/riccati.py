"""Discrete algebraic Riccati equation solved by fixed-point value iteration.

The solution P defines the terminal weight of the packet-design cost and
the auxiliary feedback gain K used in the contraction analysis. A plain
value iteration (transparent, dependency free) is enough at the
dimensions this package targets; the closed-loop identity residual is the
acceptance gate regardless of method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, ConvergenceError
from .horizon import _check_spd
from .plant import PlantModel


@dataclass(frozen=True)
class RiccatiSolution:
    """Stationary solution of the Riccati recursion.

    P is symmetric positive definite, K the 1 x n state-feedback row
    (stored as a length-n vector, u = K @ x), r the control weight, and
    residual the inf-norm defect of P in the fixed-point equation.
    """

    P: np.ndarray
    K: np.ndarray
    r: float
    residual: float


def _dare_rhs(A: np.ndarray, B: np.ndarray, Q: np.ndarray, r: float, P: np.ndarray) -> np.ndarray:
    BPB = float(B @ P @ B) + r
    if BPB <= 0:
        raise ConvergenceError("B^T P B + r is not positive; iteration cannot proceed", defect=None)
    APB = A.T @ (P @ B)
    return A.T @ P @ A - np.outer(APB, APB) / BPB + Q


def solve_dare(
    model: PlantModel,
    Q: np.ndarray,
    r: float,
    tol: float = 1e-12,
    max_iters: int = 10**5,
) -> RiccatiSolution:
    """Solve P = A'PA - A'PB (B'PB + r)^{-1} B'PA + Q by value iteration.

    Starts from P0 = Q, symmetrizes every iterate as (P + P')/2 to
    suppress floating-point drift, and stops when consecutive iterates
    agree to tol in inf-norm. Returns P together with the gain
    K = -(B'PB + r)^{-1} B'PA and the final fixed-point defect.

    r = 0 is accepted as a limiting case (useful for weight sweeps that
    drive the l1 weight to zero); B'PB then stays positive because
    P >= Q > 0 and B != 0.

    Raises ConvergenceError (carrying the defect) if the iteration cap is
    reached while the defect still exceeds 1e-8.
    """
    Q = _check_spd(Q, "Q", model.n)
    if r < 0:
        raise ContractViolation(f"control weight r must be >= 0, got {r}")
    if int(max_iters) < 1:
        raise ContractViolation(f"max_iters must be >= 1, got {max_iters}")
    A, B = model.A, model.B
    P = Q.copy()
    for _ in range(int(max_iters)):
        Pn = _dare_rhs(A, B, Q, r, P)
        Pn = (Pn + Pn.T) / 2
        delta = float(np.max(np.abs(Pn - P)))
        P = Pn
        if delta <= tol:
            break
    defect = float(np.max(np.abs(P - _dare_rhs(A, B, Q, r, P))))
    if delta > tol and defect > 1e-8:
        raise ConvergenceError(
            f"Riccati iteration did not converge within {max_iters} iterations "
            f"(defect {defect:.3e})",
            defect=defect,
        )
    K = -(B @ P @ A) / (float(B @ P @ B) + r)
    return RiccatiSolution(P=P, K=K, r=float(r), residual=defect)


def closed_loop_identity_residual(model: PlantModel, Q: np.ndarray, sol: RiccatiSolution) -> float:
    """Inf-norm of (A+BK)'P(A+BK) - P + Q + r K'K at the returned solution.

    Zero (to rounding) whenever P solves the fixed-point equation and K
    is the associated gain; used as the method-independent acceptance
    check on any Riccati solution.
    """
    Acl = model.A + np.outer(model.B, sol.K)
    M = Acl.T @ sol.P @ Acl - sol.P + np.asarray(Q, dtype=float) + sol.r * np.outer(sol.K, sol.K)
    return float(np.max(np.abs(M)))


def epsilon_from_r(mu: float, r: float) -> float:
    """Slack level implied by the control weight: eps = mu^2 / (4 r)."""
    if mu <= 0 or r <= 0:
        raise ContractViolation(f"mu and r must be > 0, got mu={mu}, r={r}")
    return mu * mu / (4.0 * r)


def r_from_epsilon(mu: float, eps: float) -> float:
    """Control weight implied by the slack level: r = mu^2 / (4 eps)."""
    if mu <= 0 or eps <= 0:
        raise ContractViolation(f"mu and eps must be > 0, got mu={mu}, eps={eps}")
    return mu * mu / (4.0 * eps)
