"""LTI plant dynamics, the actuator-side packet buffer, and open-loop rollout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Return the n x n controllability matrix [B, AB, ..., A^{n-1}B]."""
    n = A.shape[0]
    cols = np.empty((n, n))
    v = B
    for i in range(n):
        cols[:, i] = v
        v = A @ v
    return cols


@dataclass(frozen=True)
class PlantModel:
    """Discrete-time plant x(k+1) = A x(k) + B u(k) with a scalar input u.

    A is n x n, B is a length-n column (accepted as 1-D or as an n x 1
    column). The pair (A, B) must be reachable; rank of the
    controllability matrix is checked at construction.
    """

    A: np.ndarray
    B: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ContractViolation(f"state matrix must be square, got shape {A.shape}")
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 2:
            if B.shape[1] != 1:
                raise ContractViolation(f"input gain must be a single column, got shape {B.shape}")
            B = B[:, 0]
        if B.shape != (n,):
            raise ContractViolation(f"input gain must have {n} entries, got shape {B.shape}")
        if np.linalg.matrix_rank(controllability_matrix(A, B)) < n:
            raise ContractViolation("(A, B) is not reachable (controllability matrix rank deficient)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "n", n)


def plant_step(model: PlantModel, x: np.ndarray, u: float) -> np.ndarray:
    """Advance the plant one step: returns A x + B u (no noise term)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise ContractViolation(f"state must have shape ({model.n},), got {x.shape}")
    return model.A @ x + model.B * float(u)


@dataclass(frozen=True)
class BufferState:
    """Actuator-side buffer holding the most recent received packet.

    Starts at the zero vector; a dropout shifts the contents left by one
    slot and appends a zero, a reception overwrites the whole buffer.
    """

    b: np.ndarray
    N: int = field(init=False)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 1 or b.size < 1:
            raise ContractViolation(f"buffer must be a nonempty vector, got shape {b.shape}")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "N", b.size)

    @classmethod
    def zeros(cls, N: int) -> "BufferState":
        if N < 1:
            raise ContractViolation("buffer length must be >= 1")
        return cls(np.zeros(int(N)))


def buffer_step(
    buf: BufferState, dropout: int, incoming: np.ndarray | None = None
) -> tuple[BufferState, float]:
    """Update the buffer for one time step and return the applied input.

    dropout = 1: the buffer is shifted left with a zero appended (the
    action of the N x N shift matrix, implemented as an index rotation).
    dropout = 0: the incoming packet overwrites the buffer; it must be
    present and have the buffer's length.

    Returns (new buffer, applied input = first entry of the new buffer).
    """
    if dropout not in (0, 1):
        raise ContractViolation(f"dropout must be 0 or 1, got {dropout!r}")
    if dropout:
        new_b = np.append(buf.b[1:], 0.0)
    else:
        if incoming is None:
            raise ContractViolation("reception step requires an incoming packet")
        incoming = np.asarray(incoming, dtype=float)
        if incoming.shape != (buf.N,):
            raise ContractViolation(
                f"incoming packet must have shape ({buf.N},), got {incoming.shape}"
            )
        new_b = incoming.copy()
    new_buf = BufferState(new_b)
    return new_buf, float(new_b[0])


def rollout(model: PlantModel, x: np.ndarray, packet: np.ndarray, i: int) -> np.ndarray:
    """State reached after applying the first i packet entries open loop.

    Computes A^i x + sum_{l<i} A^{i-1-l} B u_l directly from matrix
    powers; rollout(..., i=1) coincides with plant_step fed the first
    packet entry.
    """
    packet = np.asarray(packet, dtype=float)
    if packet.ndim != 1:
        raise ContractViolation(f"packet must be a vector, got shape {packet.shape}")
    if not 1 <= i <= packet.size:
        raise ContractViolation(f"rollout depth must be in [1, {packet.size}], got {i}")
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise ContractViolation(f"state must have shape ({model.n},), got {x.shape}")
    A, B = model.A, model.B
    out = np.linalg.matrix_power(A, i) @ x
    for l in range(i):
        out = out + np.linalg.matrix_power(A, i - 1 - l) @ (B * packet[l])
    return out
