"""Erasure-channel models: dropout traces and the bounded-dropout check.

A trace is a 0/1 sequence indexed by time; 1 means the packet sent at
that instant was lost. Traces are generated reproducibly from a seed
(numpy PCG64 behind default_rng) or supplied verbatim, and can be stored
as a single line of '0'/'1' characters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

DROPOUT_KINDS = ("none", "deterministic-trace", "bernoulli", "burst-uniform")


@dataclass(frozen=True)
class DropoutTrace:
    """Realized dropout sequence d(k) in {0, 1}; 1 = packet lost."""

    d: np.ndarray
    length: int = field(init=False)

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.int64)
        if d.ndim != 1 or d.size < 1:
            raise ContractViolation("trace must be a nonempty vector of bits")
        if not np.isin(d, (0, 1)).all():
            raise ContractViolation("trace entries must be 0 or 1")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "length", int(d.size))


@dataclass(frozen=True)
class DropoutModel:
    """Channel description: what to drop, and the seed that fixes it.

    kind "none": lossless. "bernoulli": i.i.d. losses with probability p.
    "burst-uniform": the first packet arrives, then after each reception
    a burst of m consecutive losses with m drawn uniformly from
    {lo, ..., hi}, then a reception, repeated. "deterministic-trace":
    replay the given bits.
    """

    kind: str = "none"
    seed: int = 0
    p: float | None = None
    lo: int | None = None
    hi: int | None = None
    trace: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in DROPOUT_KINDS:
            raise ContractViolation(f"kind must be one of {DROPOUT_KINDS}, got {self.kind!r}")
        if self.kind == "bernoulli":
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ContractViolation(f"bernoulli requires 0 <= p <= 1, got {self.p}")
        if self.kind == "burst-uniform":
            if self.lo is None or self.hi is None or not 0 <= self.lo <= self.hi:
                raise ContractViolation(
                    f"burst-uniform requires 0 <= lo <= hi, got lo={self.lo}, hi={self.hi}"
                )
        if self.kind == "deterministic-trace":
            if self.trace is None:
                raise ContractViolation("deterministic-trace requires the trace bits")
            object.__setattr__(self, "trace", DropoutTrace(self.trace).d)

    def reseeded(self, seed: int) -> "DropoutModel":
        return DropoutModel(
            kind=self.kind, seed=int(seed), p=self.p, lo=self.lo, hi=self.hi, trace=self.trace
        )


def generate_trace(model: DropoutModel, length: int) -> DropoutTrace:
    """Produce a dropout trace of the given length; deterministic per seed.

    burst-uniform traces always start with a reception (d(0) = 0, the
    first packet is assumed delivered); use deterministic-trace to model
    a lost first packet.
    """
    if length < 1:
        raise ContractViolation(f"length must be >= 1, got {length}")
    length = int(length)
    if model.kind == "none":
        return DropoutTrace(np.zeros(length, dtype=np.int64))
    if model.kind == "deterministic-trace":
        if model.trace.size < length:
            raise ContractViolation(
                f"deterministic trace has {model.trace.size} entries, {length} requested"
            )
        return DropoutTrace(model.trace[:length])
    rng = np.random.default_rng(model.seed)
    if model.kind == "bernoulli":
        return DropoutTrace((rng.random(length) < model.p).astype(np.int64))
    # burst-uniform
    d = np.zeros(length, dtype=np.int64)
    k = 1
    while k < length:
        m = int(rng.integers(model.lo, model.hi + 1))
        d[k : min(k + m, length)] = 1
        k += m + 1  # the burst is followed by one reception
    return DropoutTrace(d)


def consecutive_dropouts(trace: DropoutTrace) -> np.ndarray:
    """Dropout-run lengths m_i between successive receptions.

    m_i = k_{i+1} - k_i - 1 where k_0 < k_1 < ... are the reception
    instants. A trace with fewer than two receptions yields an empty
    sequence.
    """
    receptions = np.flatnonzero(trace.d == 0)
    if receptions.size < 2:
        return np.empty(0, dtype=np.int64)
    return np.diff(receptions) - 1


def reception_instants(trace: DropoutTrace) -> np.ndarray:
    """Time indices where d(k) = 0, in increasing order."""
    return np.flatnonzero(trace.d == 0)


def check_assumption1(trace: DropoutTrace, N: int) -> bool:
    """Whether every observed dropout run is at most N - 1 long.

    Checks the gaps between successive receptions and also the
    unfinished trailing run (a trace ending in N or more losses already
    contradicts the bound no matter how it would continue). Runs before
    the first reception are not counted: the buffer is still at its zero
    initial state there.
    """
    if N < 1:
        raise ContractViolation(f"N must be >= 1, got {N}")
    receptions = np.flatnonzero(trace.d == 0)
    if receptions.size == 0:
        return trace.length <= N - 1
    gaps = np.diff(receptions) - 1
    if gaps.size and int(gaps.max()) > N - 1:
        return False
    trailing = trace.length - 1 - int(receptions[-1])
    return trailing <= N - 1


def save_trace(path, trace: DropoutTrace) -> None:
    """Write the trace as one line of '0'/'1' characters, index k left to right."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("".join("1" if b else "0" for b in trace.d))
        fh.write("\n")


def load_trace(path) -> DropoutTrace:
    """Read a trace written by save_trace."""
    with open(path, "r", encoding="ascii") as fh:
        line = fh.readline().strip()
    if not line or set(line) - {"0", "1"}:
        raise ContractViolation(f"trace file must hold one line of 0/1 characters: {path}")
    return DropoutTrace(np.fromiter((int(ch) for ch in line), dtype=np.int64, count=len(line)))
