"""Quantization, entropy and sparsity metrics, and the stability certificate.

The certificate side packages the constants of the closed-loop analysis:
bounds a1, a2 on the optimal cost, the contraction factor rho, and the
ultimate-bound radius Delta. check_contraction verifies the underlying
cost inequalities pointwise and check_theorem1 verifies the resulting
state bound along a simulated trajectory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import CertificateError, ContractViolation
from .horizon import HorizonData
from .plant import PlantModel, rollout
from .riccati import RiccatiSolution, epsilon_from_r
from .solver import SolverConfig, solve_packet
from .network import check_assumption1, reception_instants

if TYPE_CHECKING:  # pragma: no cover
    from .sim import SimulationRecord


# ---------------------------------------------------------------------------
# quantization and coding metrics


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform midtread quantizer: zero is a reproduction level.

    Levels are step * l for integer l in [-2^(bits-1), 2^(bits-1) - 1];
    values outside that range saturate. Midtread matters here: it keeps
    exact zeros exactly zero, so sparse packets stay sparse after
    quantization.
    """

    bits: int = 8
    step: float = 0.25
    style: str = "midtread"

    def __post_init__(self):
        if int(self.bits) < 1:
            raise ContractViolation(f"bits must be >= 1, got {self.bits}")
        if not self.step > 0:
            raise ContractViolation(f"step must be > 0, got {self.step}")
        if self.style != "midtread":
            raise ContractViolation(f"only the midtread style is supported, got {self.style!r}")
        object.__setattr__(self, "bits", int(self.bits))
        object.__setattr__(self, "step", float(self.step))

    @property
    def level_min(self) -> float:
        return -(2 ** (self.bits - 1)) * self.step

    @property
    def level_max(self) -> float:
        return (2 ** (self.bits - 1) - 1) * self.step


def quantize(spec: QuantizerSpec, v):
    """Quantize a scalar or array to the midtread grid, saturating.

    Rounds half away from zero, so quantize(0) is exactly 0 and the map
    is odd everywhere except at the asymmetric saturation edge.
    """
    arr = np.asarray(v, dtype=float)
    levels = np.sign(arr) * np.floor(np.abs(arr) / spec.step + 0.5)
    levels = np.clip(levels, -(2 ** (spec.bits - 1)), 2 ** (spec.bits - 1) - 1)
    out = levels * spec.step + 0.0  # normalize -0.0
    return float(out) if np.isscalar(v) or np.asarray(v).ndim == 0 else out


@dataclass(frozen=True)
class EntropyReport:
    """Empirical entropy of a set of quantized scalar values.

    per_sample_entropy is the plug-in estimate -sum p log2 p from the
    value histogram; per_packet_entropy is N times that (the cost of
    coding a whole packet one scalar at a time). Both are reported
    because either accounting convention appears in practice.
    """

    per_sample_entropy: float
    per_packet_entropy: float
    zero_count: int
    total_values: int
    histogram: dict


def entropy(values, N: int) -> EntropyReport:
    """Histogram entropy of quantized scalars, with zero/total bookkeeping."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ContractViolation("entropy requires at least one value")
    if int(N) < 1:
        raise ContractViolation(f"packet length must be >= 1, got {N}")
    levels, counts = np.unique(arr, return_counts=True)
    p = counts / counts.sum()
    h = float(-(p * np.log2(p)).sum())  # 0 log 0 never occurs: counts >= 1
    return EntropyReport(
        per_sample_entropy=h,
        per_packet_entropy=float(N) * h,
        zero_count=int((arr == 0.0).sum()),
        total_values=int(arr.size),
        histogram={float(l): int(c) for l, c in zip(levels, counts)},
    )


def sparsity_stats(packets) -> tuple[float, float]:
    """(average nonzero count, average sparsity N - nonzeros) over packets.

    Zeros are counted exactly; the sparse solver produces literal 0.0
    entries, so no threshold is involved.
    """
    packets = [np.asarray(p, dtype=float) for p in packets]
    if not packets:
        raise ContractViolation("sparsity_stats requires at least one packet")
    N = packets[0].size
    if any(p.size != N for p in packets):
        raise ContractViolation("all packets must have the same length")
    avg_l0 = float(np.mean([(p != 0.0).sum() for p in packets]))
    return avg_l0, float(N) - avg_l0


def histogram_to_csv(report: EntropyReport, path) -> None:
    """Write the value histogram as (level, count) rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "count"])
        for level in sorted(report.histogram):
            writer.writerow([f"{level:.10g}", report.histogram[level]])


def entropy_report_to_dict(report: EntropyReport) -> dict:
    """JSON-ready representation (histogram keyed by level as text)."""
    return {
        "per_sample_entropy": report.per_sample_entropy,
        "per_packet_entropy": report.per_packet_entropy,
        "zero_count": report.zero_count,
        "total_values": report.total_values,
        "histogram": {f"{level:.10g}": count for level, count in sorted(report.histogram.items())},
    }


# ---------------------------------------------------------------------------
# stability certificate


@dataclass(frozen=True)
class StabilityCertificate:
    """Constants of the practical-stability bound.

    a1 and a2 bound the optimal cost from above via
    phi(s) = a1 s + (a2 + lam_max_Q) s^2; rho is the cost contraction
    factor over dropout bursts and Delta the radius of the ultimate
    bound. epsilon is the slack implied by the control weight r through
    eps = mu^2 / (4 r).
    """

    P: np.ndarray
    K: np.ndarray
    r: float
    epsilon: float
    a1: float
    a2: float
    rho: float
    Delta: float
    lam_min_Q: float
    lam_max_Q: float
    N: int
    mu: float

    @property
    def phi_coefficients(self) -> tuple[float, float]:
        """(linear, quadratic) coefficients of phi."""
        return self.a1, self.a2 + self.lam_max_Q


def _sigma_max_checked(M: np.ndarray) -> float:
    """Largest singular value, cross-checked via the Gram eigenvalue."""
    s = float(np.linalg.svd(M, compute_uv=False)[0])
    lam = float(np.linalg.eigvalsh(M.T @ M)[-1])
    s_gram = float(np.sqrt(max(lam, 0.0)))
    if abs(s - s_gram) > 1e-6 * max(1.0, s):
        raise CertificateError(
            f"singular-value cross-check failed: svd {s:.12e} vs gram {s_gram:.12e}"
        )
    return s


def stability_constants(
    hz: HorizonData, Q: np.ndarray, mu: float, ricc: RiccatiSolution, N: int
) -> StabilityCertificate:
    """Assemble the stability certificate for a horizon built on ricc.P.

    Requires ricc.r > 0 so the slack eps = mu^2/(4 r) is finite. The
    contraction factor rho = 1 - lam_min(Q) / (a1 + a2 + lam_max(Q))
    must land in (0, 1); anything else means an upstream invariant is
    broken and raises CertificateError.
    """
    Q = np.asarray(Q, dtype=float)
    eps = epsilon_from_r(mu, ricc.r)
    a1 = mu * np.sqrt(hz.n) * _sigma_max_checked(hz.Gplus @ hz.H)
    a2 = _sigma_max_checked((hz.G @ hz.Gplus - np.eye(hz.G.shape[0])) @ hz.H) ** 2
    w = np.linalg.eigvalsh(Q)
    lam_min_q, lam_max_q = float(w[0]), float(w[-1])
    rho = 1.0 - lam_min_q / (a1 + a2 + lam_max_q)
    if not 0.0 < rho < 1.0:
        raise CertificateError(f"contraction factor rho = {rho} is outside (0, 1)")
    delta = float(np.sqrt(rho / (1.0 - rho) * (eps / lam_min_q + N / 4.0)))
    return StabilityCertificate(
        P=ricc.P,
        K=ricc.K,
        r=ricc.r,
        epsilon=eps,
        a1=float(a1),
        a2=float(a2),
        rho=float(rho),
        Delta=delta,
        lam_min_Q=lam_min_q,
        lam_max_Q=lam_max_q,
        N=int(N),
        mu=float(mu),
    )


def phi(cert: StabilityCertificate, s: float) -> float:
    """Upper envelope of the optimal cost: a1 s + (a2 + lam_max(Q)) s^2."""
    if s < 0:
        raise ContractViolation(f"phi takes a nonnegative norm, got {s}")
    lin, quad = cert.phi_coefficients
    return lin * s + quad * s * s


def certificate_to_dict(cert: StabilityCertificate) -> dict:
    """JSON-ready representation of the certificate."""
    return {
        "P": cert.P.tolist(),
        "K": cert.K.tolist(),
        "r": cert.r,
        "epsilon": cert.epsilon,
        "a1": cert.a1,
        "a2": cert.a2,
        "rho": cert.rho,
        "Delta": cert.Delta,
        "lam_min_Q": cert.lam_min_Q,
        "lam_max_Q": cert.lam_max_Q,
        "N": cert.N,
        "mu": cert.mu,
        "phi_coefficients": list(cert.phi_coefficients),
    }


# ---------------------------------------------------------------------------
# pointwise and trajectory-level verification


@dataclass(frozen=True)
class ContractionReport:
    """Worst-case margins of the cost inequalities at one state.

    open_loop_margins[i-1] is slack in
        V(f^i(x)) - V(x) <= -lam_min(Q) ||x||^2 + eps
    and contraction_margins[i-1] slack in
        V(f^i(x)) <= rho V(x) + eps + N lam_min(Q) / 4
    for i = 1..N; nonnegative margins mean the inequality holds.
    """

    passed: bool
    open_loop_margins: np.ndarray
    contraction_margins: np.ndarray
    value_at_x: float


def check_contraction(
    model: PlantModel,
    hz: HorizonData,
    solver_cfg: SolverConfig,
    cert: StabilityCertificate,
    x: np.ndarray,
    atol: float = 1e-6,
) -> ContractionReport:
    """Verify the open-loop and contraction cost inequalities at state x.

    Solves for the optimal packet at x, rolls the plant forward i steps
    open loop on that packet for every i = 1..N, and compares the optimal
    costs at the reached states against both bounds. atol absorbs solver
    certificate error in the computed costs.
    """
    x = np.asarray(x, dtype=float)
    rep = solve_packet(hz, solver_cfg, x)
    if not rep.converged:
        raise CertificateError(f"packet solve at x failed (kkt {rep.kkt_residual:.3e})")
    v_x = rep.objective
    lam_min_q, eps, N = cert.lam_min_Q, cert.epsilon, cert.N
    open_m = np.empty(N)
    contr_m = np.empty(N)
    for i in range(1, N + 1):
        xi = rollout(model, x, rep.packet, i)
        rep_i = solve_packet(hz, solver_cfg, xi)
        if not rep_i.converged:
            raise CertificateError(
                f"packet solve at f^{i}(x) failed (kkt {rep_i.kkt_residual:.3e})"
            )
        v_i = rep_i.objective
        open_m[i - 1] = (-lam_min_q * float(x @ x) + eps) - (v_i - v_x)
        contr_m[i - 1] = (cert.rho * v_x + eps + N * lam_min_q / 4.0) - v_i
    passed = bool(open_m.min() >= -atol and contr_m.min() >= -atol)
    return ContractionReport(
        passed=passed,
        open_loop_margins=open_m,
        contraction_margins=contr_m,
        value_at_x=v_x,
    )


@dataclass(frozen=True)
class TheoremMarginReport:
    """Slack of the practical-stability state bound along one trajectory.

    applicable is False when the trace violates the bounded-dropout
    assumption (the bound then promises nothing). slacks[j] corresponds
    to time index first_k + j; pass requires every slack >= -1e-9.
    """

    applicable: bool
    passed: bool
    min_slack: float
    mean_slack: float
    first_k: int
    slacks: np.ndarray


def check_theorem1(record: "SimulationRecord", cert: StabilityCertificate) -> TheoremMarginReport:
    """Check ||x(k)|| <= rho^{(i+1)/2} sqrt(phi(||x(k0)||)/lam_min(Q)) + Delta.

    k0 is the first reception instant and i counts receptions: the bound
    with index i applies for k in {k_i + 1, ..., k_{i+1}}. Steps at or
    before k0 are outside the bound's scope. Recorded states after the
    final reception reuse the last index, which only makes the bound
    harder to meet.
    """
    trace = record.received
    if not check_assumption1(trace, cert.N):
        return TheoremMarginReport(
            applicable=False,
            passed=False,
            min_slack=np.nan,
            mean_slack=np.nan,
            first_k=-1,
            slacks=np.empty(0),
        )
    receptions = reception_instants(trace)
    if receptions.size == 0:
        return TheoremMarginReport(
            applicable=False,
            passed=False,
            min_slack=np.nan,
            mean_slack=np.nan,
            first_k=-1,
            slacks=np.empty(0),
        )
    states = np.asarray(record.states, dtype=float)
    norms = np.linalg.norm(states, axis=1)
    k0 = int(receptions[0])
    base = np.sqrt(phi(cert, float(norms[k0])) / cert.lam_min_Q)
    ks = np.arange(k0 + 1, norms.size)
    # index of the last reception strictly before k, capped at the final one
    idx = np.searchsorted(receptions, ks, side="left") - 1
    idx = np.clip(idx, 0, receptions.size - 1)
    rhs = np.sqrt(cert.rho) ** (idx + 1) * base + cert.Delta
    slacks = rhs - norms[ks]
    return TheoremMarginReport(
        applicable=True,
        passed=bool(slacks.min() >= -1e-9),
        min_slack=float(slacks.min()),
        mean_slack=float(slacks.mean()),
        first_k=k0,
        slacks=slacks,
    )
