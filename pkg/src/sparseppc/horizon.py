"""Stacked prediction matrices for the finite-horizon packet design problem.

Everything downstream (the sparse solver, the quadratic baseline, the
stability constants) is expressed through the matrices built here: the
input-prediction matrix Phi, the free-response matrix Upsilon, the
block-diagonal weight Qbar, and the weighted forms G = Qbar^{1/2} Phi,
H = -Qbar^{1/2} Upsilon. With those, the horizon cost of a packet U at
state x is

    ||G U - H x||_2^2 + mu ||U||_1 + ||x||_Q^2

which equals the step-by-step sum of weighted predicted-state norms plus
the input penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, ContractViolation
from .plant import PlantModel


def _check_spd(M: np.ndarray, name: str, n: int) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (n, n):
        raise ConstructionError(f"{name} must be {n}x{n}, got {M.shape}")
    if np.max(np.abs(M - M.T)) > 1e-10 * max(1.0, np.max(np.abs(M))):
        raise ConstructionError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(M).min() <= 0:
        raise ConstructionError(f"{name} must be positive definite")
    return (M + M.T) / 2


def _sym_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric principal square root of an SPD matrix."""
    w, V = np.linalg.eigh(M)
    return (V * np.sqrt(w)) @ V.T


@dataclass(frozen=True)
class CostConfig:
    """Weights of the packet-design cost.

    N is the horizon length (= packet size), Q the per-step state weight,
    P the terminal weight (both SPD), and mu > 0 the l1 input weight.
    """

    N: int
    Q: np.ndarray
    P: np.ndarray
    mu: float

    def __post_init__(self):
        if int(self.N) < 1:
            raise ConstructionError(f"horizon length must be >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        n = np.atleast_2d(np.asarray(self.Q)).shape[0]
        object.__setattr__(self, "Q", _check_spd(self.Q, "Q", n))
        object.__setattr__(self, "P", _check_spd(self.P, "P", n))
        if not float(self.mu) > 0:
            raise ConstructionError(f"mu must be > 0, got {self.mu}")
        object.__setattr__(self, "mu", float(self.mu))


@dataclass(frozen=True)
class HorizonData:
    """Prediction matrices plus quantities derived from them.

    Fields Phi, Upsilon, Qbar, G, H follow the construction above; Gplus
    is the left pseudo-inverse (G^T G)^{-1} G^T computed by QR; c is the
    gradient-step constant, strictly larger than lam_max(G^T G).

    GtG, GtH, lam_max and lam_min are cached products/eigenvalues of the
    same matrices, kept so per-solve work stays O(N^2).
    """

    Phi: np.ndarray
    Upsilon: np.ndarray
    Qbar: np.ndarray
    G: np.ndarray
    H: np.ndarray
    Gplus: np.ndarray
    c: float
    cfg: CostConfig
    GtG: np.ndarray
    GtH: np.ndarray
    lam_max: float
    lam_min: float

    @property
    def N(self) -> int:
        return self.cfg.N

    @property
    def n(self) -> int:
        return self.cfg.Q.shape[0]


def lipschitz_bound(G: np.ndarray) -> float:
    """Largest eigenvalue of G^T G to relative tolerance 1e-10.

    Power iteration on the (symmetric PSD) Gram matrix with the
    deterministic all-ones start vector; falls back to the dense
    symmetric eigensolver when the iteration stagnates (residual not
    meeting tolerance within the cap, or a zero iterate).
    """
    G = np.asarray(G, dtype=float)
    if G.size == 0:
        raise ContractViolation("G must be nonempty")
    M = G.T @ G
    m = M.shape[0]
    v = np.ones(m)
    nv = np.linalg.norm(v)
    lam = 0.0
    for _ in range(20000):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break  # ones vector lies in the null space; stagnation
        v = w / nw
        lam = float(v @ (M @ v))
        # eigenvalue error of a symmetric matrix is bounded by this residual
        if np.linalg.norm(M @ v - lam * v) <= 1e-10 * max(lam, 1e-300):
            return lam
    return float(np.linalg.eigvalsh(M)[-1])


def build_horizon(model: PlantModel, cfg: CostConfig, c_margin: float = 0.01) -> HorizonData:
    """Assemble the prediction matrices for (model, cfg).

    Phi gets block (i, l) = A^{i-1-l} B below the block diagonal and
    zeros above; Upsilon stacks A, A^2, ..., A^N; Qbar is
    blockdiag(Q, ..., Q, P) with N-1 copies of Q. The returned c equals
    (1 + c_margin) * lam_max(G^T G); the margin must be positive so the
    strict inequality c > lam_max(G^T G) holds.
    """
    if cfg.Q.shape[0] != model.n:
        raise ConstructionError(
            f"weight dimension {cfg.Q.shape[0]} does not match plant dimension {model.n}"
        )
    if c_margin <= 0:
        raise ConstructionError(f"c_margin must be > 0, got {c_margin}")
    n, N = model.n, cfg.N
    A, B = model.A, model.B

    Apow = [np.eye(n)]
    for _ in range(N):
        Apow.append(Apow[-1] @ A)

    Phi = np.zeros((n * N, N))
    Upsilon = np.zeros((n * N, n))
    for i in range(1, N + 1):
        rows = slice((i - 1) * n, i * n)
        Upsilon[rows, :] = Apow[i]
        for l in range(i):
            Phi[rows, l] = Apow[i - 1 - l] @ B

    Qbar = np.zeros((n * N, n * N))
    Qbar_sqrt = np.zeros((n * N, n * N))
    sqQ, sqP = _sym_sqrt(cfg.Q), _sym_sqrt(cfg.P)
    for bi in range(N):
        rows = slice(bi * n, (bi + 1) * n)
        Qbar[rows, rows] = cfg.Q if bi < N - 1 else cfg.P
        Qbar_sqrt[rows, rows] = sqQ if bi < N - 1 else sqP

    G = Qbar_sqrt @ Phi
    H = -Qbar_sqrt @ Upsilon

    # Left pseudo-inverse via economic QR for conditioning; G has full
    # column rank because B != 0 and Qbar > 0.
    Qf, Rf = np.linalg.qr(G)
    if np.min(np.abs(np.diag(Rf))) <= 0:
        raise ConstructionError("G is column rank deficient; cannot form the pseudo-inverse")
    Gplus = np.linalg.solve(Rf, Qf.T)

    lam_max = lipschitz_bound(G)
    GtG = G.T @ G
    lam_min = float(np.linalg.eigvalsh(GtG)[0])
    c = (1.0 + c_margin) * lam_max
    return HorizonData(
        Phi=Phi,
        Upsilon=Upsilon,
        Qbar=Qbar,
        G=G,
        H=H,
        Gplus=Gplus,
        c=c,
        cfg=cfg,
        GtG=GtG,
        GtH=G.T @ H,
        lam_max=lam_max,
        lam_min=lam_min,
    )


def least_squares_packet(hz: HorizonData, x: np.ndarray) -> np.ndarray:
    """Unconstrained minimizer of ||G U - H x||_2, i.e. Gplus H x."""
    x = np.asarray(x, dtype=float)
    return hz.Gplus @ (hz.H @ x)


def horizon_cost(hz: HorizonData, U: np.ndarray, x: np.ndarray, mu: float | None = None) -> float:
    """Evaluate ||G U - H x||_2^2 + mu ||U||_1 + ||x||_Q^2 from the stacked form.

    mu defaults to the configured l1 weight; pass an explicit value to
    price the same packet under a different weight.
    """
    U = np.asarray(U, dtype=float)
    x = np.asarray(x, dtype=float)
    if mu is None:
        mu = hz.cfg.mu
    resid = hz.G @ U - hz.H @ x
    return float(resid @ resid + mu * np.abs(U).sum() + x @ hz.cfg.Q @ x)
