"""Packet-producing controllers: the sparse design and the quadratic baseline."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, ConvergenceError
from .horizon import HorizonData
from .solver import SolverConfig, solve_packet


def as_packet(u, N: int) -> np.ndarray:
    """Validate and return a length-N packet of finite tentative inputs."""
    u = np.asarray(u, dtype=float)
    if u.shape != (N,):
        raise ContractViolation(f"packet must have shape ({N},), got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ContractViolation("packet entries must be finite")
    return u


def l1l2_packet(
    hz: HorizonData,
    cfg: SolverConfig,
    x: np.ndarray,
    warm: np.ndarray | None = None,
) -> np.ndarray:
    """Sparse packet minimizing the l1-penalized horizon cost at state x.

    Thin wrapper over the proximal-gradient solve that insists on a
    certified optimum; use solve_packet directly to inspect partial
    results.
    """
    report = solve_packet(hz, cfg, x, warm=warm)
    if not report.converged:
        raise ConvergenceError(
            f"sparse packet solve failed its certificate (kkt {report.kkt_residual:.3e})",
            defect=report.kkt_residual,
        )
    return report.packet


def l2_packet(hz: HorizonData, mu: float, x: np.ndarray) -> np.ndarray:
    """Baseline packet minimizing the quadratically penalized horizon cost.

    The cost ||G U - H x||_2^2 + mu ||U||_2^2 has the closed-form
    minimizer (G^T G + mu I)^{-1} G^T H x; it is computed by a linear
    solve rather than an explicit inverse, and the normal-equation
    residual is verified to 1e-9 before returning. Generically every
    entry is nonzero, which is exactly the contrast with the sparse
    design.
    """
    if mu <= 0:
        raise ContractViolation(f"mu must be > 0, got {mu}")
    x = np.asarray(x, dtype=float)
    M = hz.GtG + mu * np.eye(hz.N)
    rhs = hz.GtH @ x
    U = np.linalg.solve(M, rhs)
    resid = float(np.max(np.abs(M @ U - rhs)))
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if resid > 1e-9 * scale:
        raise ConvergenceError(
            f"quadratic packet solve left a normal-equation residual of {resid:.3e}",
            defect=resid,
        )
    return U
