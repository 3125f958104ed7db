"""Closed-loop orchestration: controller -> channel -> buffer -> plant.

run_closed_loop executes one seeded loop and records everything needed to
replay or audit it; run_trials fans independent loops out over trials
(optionally across processes), deriving per-trial randomness from a
single master seed via numpy SeedSequence spawning so results do not
depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import QuantizerSpec, entropy, quantize, sparsity_stats
from .controller import l2_packet
from .errors import ContractViolation, SolverAbort
from .horizon import HorizonData
from .network import DropoutModel, DropoutTrace, check_assumption1, generate_trace
from .plant import BufferState, PlantModel, buffer_step, plant_step
from .solver import SolverConfig, shift_packet, solve_packet

CONTROLLERS = ("l1l2", "l2")

RNG_DESCRIPTION = "numpy default_rng (PCG64); per-trial seeds via SeedSequence(master_seed).spawn"


@dataclass(frozen=True)
class SimulationRecord:
    """Full record of one closed-loop run.

    states has steps+1 rows (x(0) through x(steps)); inputs and the
    trace have one entry per step. packets holds what was actually
    transmitted each step (quantized when in-loop quantization was on),
    designed_packets the solver output before quantization; the two
    coincide when no quantizer is configured. solver_iterations is zero
    for the closed-form baseline controller.
    """

    states: np.ndarray
    inputs: np.ndarray
    packets: list
    designed_packets: list
    received: DropoutTrace
    config: dict
    solver_iterations: list


def run_closed_loop(
    model: PlantModel,
    hz: HorizonData,
    controller: str,
    solver_cfg: SolverConfig,
    channel: DropoutModel,
    x0: np.ndarray,
    steps: int,
    quantize_in_loop: QuantizerSpec | None = None,
) -> SimulationRecord:
    """Run the loop for `steps` steps from x0 and record the trajectory.

    Each step the selected controller computes a packet from the true
    plant state, the packet is (optionally) quantized, the channel
    decides whether it arrives, the buffer supplies the applied input,
    and the plant advances. The sparse controller warm-starts each solve
    from its previous packet shifted by one slot when the solver config
    asks for that (it cannot change the answer, only the iteration
    count).

    Raises SolverAbort carrying the partial record and the offending
    step index if a packet solve fails its optimality certificate.
    """
    if controller not in CONTROLLERS:
        raise ContractViolation(f"controller must be one of {CONTROLLERS}, got {controller!r}")
    if steps < 1:
        raise ContractViolation(f"steps must be >= 1, got {steps}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n,):
        raise ContractViolation(f"x0 must have shape ({model.n},), got {x0.shape}")

    trace = generate_trace(channel, steps)
    N = hz.N
    states = np.empty((steps + 1, model.n))
    states[0] = x0
    inputs = np.empty(steps)
    packets: list = []
    designed: list = []
    iterations: list = []

    buf = BufferState.zeros(N)
    prev_packet = None
    config_snapshot = {
        "controller": controller,
        "steps": int(steps),
        "channel": {"kind": channel.kind, "seed": channel.seed, "p": channel.p,
                    "lo": channel.lo, "hi": channel.hi},
        "quantizer": None
        if quantize_in_loop is None
        else {"bits": quantize_in_loop.bits, "step": quantize_in_loop.step},
        "solver": {
            "threshold_convention": solver_cfg.threshold_convention,
            "tol": solver_cfg.tol,
            "kkt_tol": solver_cfg.kkt_tol,
            "max_iters": solver_cfg.max_iters,
            "acceleration": solver_cfg.acceleration,
            "warm_start": solver_cfg.warm_start,
        },
        "rng": RNG_DESCRIPTION,
    }

    for k in range(steps):
        x = states[k]
        if controller == "l1l2":
            warm = None
            if solver_cfg.warm_start == "previous-packet" and prev_packet is not None:
                warm = shift_packet(prev_packet)
            report = solve_packet(hz, solver_cfg, x, warm=warm)
            if not report.converged:
                # the partial record keeps the whole planned trace; only
                # entries below k were consumed
                partial = SimulationRecord(
                    states=states[: k + 1].copy(),
                    inputs=inputs[:k].copy(),
                    packets=packets,
                    designed_packets=designed,
                    received=trace,
                    config=config_snapshot,
                    solver_iterations=iterations,
                )
                raise SolverAbort(
                    f"packet solve did not certify at step {k} "
                    f"(kkt {report.kkt_residual:.3e})",
                    step=k,
                    record=partial,
                )
            U_raw = report.packet
            iterations.append(report.iterations)
            prev_packet = U_raw
        else:
            U_raw = l2_packet(hz, hz.cfg.mu, x)
            iterations.append(0)

        U_tx = quantize(quantize_in_loop, U_raw) if quantize_in_loop is not None else U_raw
        designed.append((k, U_raw))
        packets.append((k, U_tx))

        dropped = int(trace.d[k])
        buf, u = buffer_step(buf, dropped, incoming=None if dropped else U_tx)
        inputs[k] = u
        states[k + 1] = plant_step(model, x, u)

    return SimulationRecord(
        states=states,
        inputs=inputs,
        packets=packets,
        designed_packets=designed,
        received=trace,
        config=config_snapshot,
        solver_iterations=iterations,
    )


# ---------------------------------------------------------------------------
# trial batches


@dataclass(frozen=True)
class TrialSummary:
    """Per-trial aggregates kept by run_trials (records themselves are not)."""

    trial: int
    status: str  # "ok" or "failed"
    error: str | None
    x0: np.ndarray | None
    zero_count: int | None
    total_values: int | None
    per_sample_entropy: float | None
    per_packet_entropy: float | None
    avg_l0: float | None
    avg_sparsity: float | None
    traj_norm: float | None
    max_state_norm: float | None
    assumption1_ok: bool | None
    solver_iters_total: int | None


def summarize_record(trial: int, record: SimulationRecord) -> TrialSummary:
    """Reduce a record to the aggregates used by the batch studies."""
    tx_values = np.concatenate([p for _, p in record.packets])
    rep = entropy(tx_values, N=len(record.packets[0][1]))
    avg_l0, avg_sparsity = sparsity_stats([p for _, p in record.packets])
    return TrialSummary(
        trial=trial,
        status="ok",
        error=None,
        x0=record.states[0].copy(),
        zero_count=rep.zero_count,
        total_values=rep.total_values,
        per_sample_entropy=rep.per_sample_entropy,
        per_packet_entropy=rep.per_packet_entropy,
        avg_l0=avg_l0,
        avg_sparsity=avg_sparsity,
        traj_norm=float(np.linalg.norm(record.states)),
        max_state_norm=float(np.linalg.norm(record.states, axis=1).max()),
        assumption1_ok=check_assumption1(record.received, len(record.packets[0][1])),
        solver_iters_total=int(sum(record.solver_iterations)),
    )


def trial_seeds(master_seed: int, trials: int) -> list[tuple[int, int]]:
    """Deterministic (x0_seed, channel_seed) pairs for each trial index.

    Trial t gets the t-th spawn of SeedSequence(master_seed); its two
    children seed the initial-state draw and the channel. The derivation
    depends only on (master_seed, t), never on execution order.
    """
    children = np.random.SeedSequence(master_seed).spawn(trials)
    out = []
    for child in children:
        g_x0, g_ch = child.spawn(2)
        out.append(
            (
                int(g_x0.generate_state(1, dtype=np.uint64)[0]),
                int(g_ch.generate_state(1, dtype=np.uint64)[0]),
            )
        )
    return out


def _one_trial(args) -> TrialSummary:
    (
        trial,
        x0_seed,
        ch_seed,
        model,
        hz,
        controller,
        solver_cfg,
        channel,
        steps,
        quantizer,
        x0_fixed,
    ) = args
    if x0_fixed is not None:
        x0 = np.asarray(x0_fixed, dtype=float)
    else:
        x0 = np.random.default_rng(x0_seed).standard_normal(model.n)
    try:
        record = run_closed_loop(
            model,
            hz,
            controller,
            solver_cfg,
            channel.reseeded(ch_seed),
            x0,
            steps,
            quantize_in_loop=quantizer,
        )
        return summarize_record(trial, record)
    except SolverAbort as exc:
        return TrialSummary(
            trial=trial,
            status="failed",
            error=str(exc),
            x0=x0,
            zero_count=None,
            total_values=None,
            per_sample_entropy=None,
            per_packet_entropy=None,
            avg_l0=None,
            avg_sparsity=None,
            traj_norm=None,
            max_state_norm=None,
            assumption1_ok=None,
            solver_iters_total=None,
        )


def run_trials(
    model: PlantModel,
    hz: HorizonData,
    controller: str,
    solver_cfg: SolverConfig,
    channel: DropoutModel,
    steps: int,
    trials: int,
    master_seed: int,
    quantizer: QuantizerSpec | None = None,
    x0: np.ndarray | None = None,
    n_jobs: int = 1,
) -> list[TrialSummary]:
    """Run `trials` independent closed loops and return their summaries.

    When x0 is None each trial draws its initial state from the standard
    normal using its own derived seed; otherwise all trials share the
    given x0 and differ only in channel realization. Individual trial
    failures are recorded in their summaries, not raised. Summaries come
    back sorted by trial index regardless of n_jobs.
    """
    if trials < 1:
        raise ContractViolation(f"trials must be >= 1, got {trials}")
    seeds = trial_seeds(master_seed, trials)
    jobs = [
        (t, seeds[t][0], seeds[t][1], model, hz, controller, solver_cfg,
         channel, steps, quantizer, x0)
        for t in range(trials)
    ]
    if n_jobs <= 1:
        results = [_one_trial(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_one_trial, jobs, chunksize=max(1, trials // (8 * n_jobs))))
    return sorted(results, key=lambda s: s.trial)


# ---------------------------------------------------------------------------
# serialization


def record_to_csv(record: SimulationRecord, path) -> None:
    """Per-step table: k, d(k), u(k), state components, ||x(k)||_2."""
    n = record.states.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "d", "u"] + [f"x{i}" for i in range(n)] + ["norm_x"])
        for k in range(record.inputs.size):
            x = record.states[k]
            writer.writerow(
                [k, int(record.received.d[k]), f"{record.inputs[k]:.12g}"]
                + [f"{xi:.12g}" for xi in x]
                + [f"{np.linalg.norm(x):.12g}"]
            )


def record_to_dict(record: SimulationRecord) -> dict:
    """JSON-ready full record (arrays as nested lists)."""
    return {
        "states": record.states.tolist(),
        "inputs": record.inputs.tolist(),
        "packets": [[int(k), p.tolist()] for k, p in record.packets],
        "designed_packets": [[int(k), p.tolist()] for k, p in record.designed_packets],
        "dropouts": record.received.d.tolist(),
        "config": record.config,
        "solver_iterations": [int(i) for i in record.solver_iterations],
    }


def record_to_json(record: SimulationRecord, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record_to_dict(record), fh, indent=2)
        fh.write("\n")


def summary_to_dict(s: TrialSummary) -> dict:
    return {
        "trial": s.trial,
        "status": s.status,
        "error": s.error,
        "x0": None if s.x0 is None else [float(v) for v in s.x0],
        "zero_count": s.zero_count,
        "total_values": s.total_values,
        "per_sample_entropy": s.per_sample_entropy,
        "per_packet_entropy": s.per_packet_entropy,
        "avg_l0": s.avg_l0,
        "avg_sparsity": s.avg_sparsity,
        "traj_norm": s.traj_norm,
        "max_state_norm": s.max_state_norm,
        "assumption1_ok": s.assumption1_ok,
        "solver_iters_total": s.solver_iters_total,
    }
