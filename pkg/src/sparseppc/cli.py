"""Command-line front end: certify | run | table1 | sweep-mu | entropy-study.

Every command reads one JSON config (see config.CONFIG_SCHEMA), writes
machine-readable outputs into the output directory, and prefixes them
with a metadata block (config hash, seeds, RNG description, artifact
version) sufficient to reproduce the run. Exit codes are stable:
0 success, 1 config error, 2 certification error, 3 runtime/solver
error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from .analysis import (
    certificate_to_dict,
    check_theorem1,
    entropy,
    entropy_report_to_dict,
    histogram_to_csv,
    sparsity_stats,
    stability_constants,
)
from .config import ConfigError, ExperimentConfig, __version__, load_config
from .controller import l2_packet
from .errors import CertificateError, ContractViolation, ConvergenceError, SolverAbort
from .horizon import CostConfig, build_horizon
from .riccati import solve_dare
from .sim import record_to_csv, record_to_dict, run_closed_loop, run_trials, summary_to_dict
from .solver import THRESHOLD_CONVENTIONS, solve_packet

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CERTIFY = 2
EXIT_RUNTIME = 3

_SWEEP_MU_FLOOR = 1e-9  # stands in for mu = 0, where the cost has no l1 term


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def resolve_convention(hz, solver_cfg, anchor: dict) -> dict:
    """Try every shrinkage convention against the anchor packet.

    A convention matches when its certified packet agrees with the
    reference elementwise within the anchor tolerance and reproduces the
    reference's exact-zero pattern. Returns per-convention deviations and
    the matching convention (smallest deviation if several match).
    """
    x0 = anchor["x0"]
    ref = anchor["l1l2"]
    tol = anchor["tolerance"]
    per = {}
    for conv in THRESHOLD_CONVENTIONS:
        cfg = dataclasses.replace(solver_cfg, threshold_convention=conv)
        rep = solve_packet(hz, cfg, x0)
        dev = float(np.max(np.abs(rep.packet - ref)))
        zeros_ok = bool(np.all(rep.packet[ref == 0.0] == 0.0))
        per[conv] = {
            "packet": rep.packet.tolist(),
            "max_deviation": dev,
            "zero_pattern_matches": zeros_ok,
            "kkt_residual": rep.kkt_residual,
            "certified": rep.converged,
            "matches": bool(rep.converged and dev <= tol and zeros_ok),
        }
    matching = [c for c in THRESHOLD_CONVENTIONS if per[c]["matches"]]
    resolved = min(matching, key=lambda c: per[c]["max_deviation"]) if matching else None
    return {"conventions": per, "matching": matching, "resolved": resolved}


def cmd_certify(cfg: ExperimentConfig, out_dir: str, quiet: bool) -> int:
    if cfg.r is None:
        print("certify: config fixes P explicitly; a certificate needs r or epsilon", file=sys.stderr)
        return EXIT_CERTIFY
    try:
        hz, ricc = cfg.horizon_data()
        cert = stability_constants(hz, cfg.Q, cfg.mu, ricc, cfg.N)
    except ConvergenceError as exc:
        print(f"certify: Riccati solve failed (defect {exc.defect})", file=sys.stderr)
        return EXIT_CERTIFY
    except CertificateError as exc:
        print(f"certify: {exc}", file=sys.stderr)
        return EXIT_CERTIFY
    payload = {
        "metadata": cfg.metadata("certify"),
        "certificate": certificate_to_dict(cert),
        "riccati_residual": ricc.residual,
    }
    if cfg.anchor is not None:
        payload["convention_resolution"] = resolve_convention(hz, cfg.solver_cfg, cfg.anchor)
    path = os.path.join(out_dir, "certificate.json")
    _write_json(path, payload)
    _say(quiet, f"epsilon = {cert.epsilon:.6g}, rho = {cert.rho:.6g}, Delta = {cert.Delta:.6g}")
    if cfg.anchor is not None:
        _say(quiet, f"resolved shrinkage convention: {payload['convention_resolution']['resolved']}")
    _say(quiet, f"wrote {path}")
    return EXIT_OK


def cmd_run(cfg: ExperimentConfig, out_dir: str, quiet: bool) -> int:
    hz, ricc = cfg.horizon_data()
    if cfg.x0 is not None:
        x0 = cfg.x0
    else:
        x0 = np.random.default_rng(np.random.SeedSequence(cfg.master_seed)).standard_normal(cfg.model.n)
    try:
        record = run_closed_loop(
            cfg.model, hz, "l1l2", cfg.solver_cfg, cfg.channel, x0, cfg.steps,
            quantize_in_loop=cfg.quantizer,
        )
    except SolverAbort as exc:
        print(f"run: aborted at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    meta = cfg.metadata("run")
    if "csv" in cfg.formats:
        record_to_csv(record, os.path.join(out_dir, "trajectory.csv"))
    _write_json(os.path.join(out_dir, "packets.json"),
                {"metadata": meta, **record_to_dict(record)})

    tx_values = np.concatenate([p for _, p in record.packets])
    rep = entropy(tx_values, N=hz.N)
    avg_l0, avg_sparsity = sparsity_stats([p for _, p in record.packets])
    report = {
        "metadata": meta,
        **entropy_report_to_dict(rep),
        "avg_l0": avg_l0,
        "avg_sparsity": avg_sparsity,
    }
    if ricc is not None:
        cert = stability_constants(hz, cfg.Q, cfg.mu, ricc, cfg.N)
        margin = check_theorem1(record, cert)
        report["state_bound"] = {
            "applicable": margin.applicable,
            "passed": margin.passed,
            "min_slack": margin.min_slack,
            "mean_slack": margin.mean_slack,
        }
    _write_json(os.path.join(out_dir, "report.json"), report)
    if "csv" in cfg.formats:
        histogram_to_csv(rep, os.path.join(out_dir, "histogram.csv"))
    _say(quiet, f"ran {cfg.steps} steps; zeros {rep.zero_count}/{rep.total_values}, "
                f"per-packet entropy {rep.per_packet_entropy:.4f}")
    _say(quiet, f"wrote outputs to {out_dir}")
    return EXIT_OK


def cmd_table1(cfg: ExperimentConfig, out_dir: str, quiet: bool) -> int:
    if cfg.anchor is None:
        raise ConfigError("table1 requires an 'anchor' block with reference packets")
    hz, _ = cfg.horizon_data()
    x0 = cfg.anchor["x0"]
    resolution = resolve_convention(hz, cfg.solver_cfg, cfg.anchor)
    u_l2 = l2_packet(hz, cfg.mu, x0)
    l2_dev = float(np.max(np.abs(u_l2 - cfg.anchor["l2"])))

    payload = {
        "metadata": cfg.metadata("table1"),
        "x0": x0.tolist(),
        "reference": {"l1l2": cfg.anchor["l1l2"].tolist(), "l2": cfg.anchor["l2"].tolist()},
        "l2": {"packet": u_l2.tolist(), "max_deviation": l2_dev},
        **resolution,
    }
    _write_json(os.path.join(out_dir, "table1.json"), payload)

    with open(os.path.join(out_dir, "table1.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["design", "entry", "packet", "reference", "deviation"])
        for conv in THRESHOLD_CONVENTIONS:
            pk = resolution["conventions"][conv]["packet"]
            for i, (a, b) in enumerate(zip(pk, cfg.anchor["l1l2"])):
                writer.writerow([f"l1l2:{conv}", i, f"{a:.6f}", f"{b:.6f}", f"{a - b:.6f}"])
        for i, (a, b) in enumerate(zip(u_l2, cfg.anchor["l2"])):
            writer.writerow(["l2", i, f"{a:.6f}", f"{b:.6f}", f"{a - b:.6f}"])

    if not quiet:
        print(f"{'design':<24}{'packet':<52}max dev")
        for conv in THRESHOLD_CONVENTIONS:
            info = resolution["conventions"][conv]
            pk = " ".join(f"{v:8.3f}" for v in info["packet"])
            star = " *" if info["matches"] else ""
            print(f"l1l2 {conv:<19}{pk:<52}{info['max_deviation']:.2e}{star}")
        pk = " ".join(f"{v:8.3f}" for v in u_l2)
        print(f"{'l2':<24}{pk:<52}{l2_dev:.2e}")
        print(f"resolved convention: {resolution['resolved']}")
    return EXIT_OK


def cmd_sweep_mu(cfg: ExperimentConfig, out_dir: str, mu_grid, quiet: bool) -> int:
    if len(mu_grid) == 0 or any(m < 0 for m in mu_grid):
        raise ConfigError("mu grid must be nonempty and nonnegative")
    x0 = cfg.x0 if cfg.x0 is not None else np.ones(cfg.model.n)
    rows = []
    for mu in mu_grid:
        mu_solve = mu if mu > 0 else _SWEEP_MU_FLOOR
        status = "ok" if mu > 0 else f"ok (mu clamped to {_SWEEP_MU_FLOOR:g} for the solve)"
        try:
            if cfg.P_explicit is not None:
                P = cfg.P_explicit
            elif cfg.epsilon is not None and cfg.r is None:
                P = solve_dare(cfg.model, cfg.Q, mu_solve**2 / (4.0 * cfg.epsilon)).P
            else:
                # control weight tracks the l1 weight across the sweep
                P = solve_dare(cfg.model, cfg.Q, mu).P
            hz = build_horizon(cfg.model, CostConfig(N=cfg.N, Q=cfg.Q, P=P, mu=mu_solve))
            record = run_closed_loop(
                cfg.model, hz, "l1l2", cfg.solver_cfg, cfg.channel, x0, cfg.steps,
                quantize_in_loop=None,
            )
            _, avg_sparsity = sparsity_stats([p for _, p in record.designed_packets])
            traj_norm = float(np.linalg.norm(record.states))
            rows.append((mu, avg_sparsity, traj_norm, status))
        except (SolverAbort, ConvergenceError, CertificateError) as exc:
            rows.append((mu, float("nan"), float("nan"), f"failed: {exc}"))
    path = os.path.join(out_dir, "sweep_mu.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mu", "avg_sparsity", "traj_norm", "status"])
        for mu, sp, tn, status in rows:
            writer.writerow([f"{mu:.10g}", f"{sp:.10g}", f"{tn:.10g}", status])
    _write_json(
        os.path.join(out_dir, "sweep_mu.json"),
        {
            "metadata": cfg.metadata("sweep-mu"),
            "rows": [
                {"mu": mu, "avg_sparsity": sp, "traj_norm": tn, "status": status}
                for mu, sp, tn, status in rows
            ],
        },
    )
    if not quiet:
        for mu, sp, tn, status in rows:
            print(f"mu={mu:<10g} sparsity={sp:<10.4g} traj_norm={tn:<12.6g} {status}")
        print(f"wrote {path}")
    return EXIT_OK


def _mean(values) -> float:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else float("nan")


def cmd_entropy_study(cfg: ExperimentConfig, out_dir: str, trials: int, jobs: int, quiet: bool) -> int:
    hz, _ = cfg.horizon_data()
    results = {}
    for controller in ("l1l2", "l2"):
        results[controller] = run_trials(
            cfg.model, hz, controller, cfg.solver_cfg, cfg.channel,
            steps=cfg.steps, trials=trials, master_seed=cfg.master_seed,
            quantizer=cfg.quantizer, x0=None, n_jobs=jobs,
        )
    summary = {"metadata": cfg.metadata("entropy-study"), "trials": trials, "controllers": {}}
    for controller, res in results.items():
        ok = [s for s in res if s.status == "ok"]
        summary["controllers"][controller] = {
            "ok_trials": len(ok),
            "failed_trials": len(res) - len(ok),
            "mean_per_sample_entropy": _mean([s.per_sample_entropy for s in ok]),
            "mean_per_packet_entropy": _mean([s.per_packet_entropy for s in ok]),
            "mean_zero_count": _mean([s.zero_count for s in ok]),
            "mean_avg_sparsity": _mean([s.avg_sparsity for s in ok]),
        }
    pairs = [
        (a, b)
        for a, b in zip(results["l1l2"], results["l2"])
        if a.status == "ok" and b.status == "ok"
    ]
    c1 = summary["controllers"]["l1l2"]
    c2 = summary["controllers"]["l2"]
    summary["orderings"] = {
        "mean_per_packet_entropy_l1l2_below_l2":
            bool(c1["mean_per_packet_entropy"] < c2["mean_per_packet_entropy"]),
        "mean_per_sample_entropy_l1l2_below_l2":
            bool(c1["mean_per_sample_entropy"] < c2["mean_per_sample_entropy"]),
        "zero_count_win_fraction":
            float(np.mean([a.zero_count > b.zero_count for a, b in pairs])) if pairs else float("nan"),
        "entropy_win_fraction":
            float(np.mean([a.per_packet_entropy < b.per_packet_entropy for a, b in pairs])) if pairs else float("nan"),
    }
    path = os.path.join(out_dir, "entropy_study.json")
    _write_json(path, summary)
    if not quiet:
        for controller in ("l1l2", "l2"):
            c = summary["controllers"][controller]
            print(
                f"{controller}: mean per-packet entropy {c['mean_per_packet_entropy']:.4f}, "
                f"mean zeros {c['mean_zero_count']:.1f}, failures {c['failed_trials']}"
            )
        print(f"orderings: {summary['orderings']}")
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparseppc",
        description="Sparse packetized predictive control: certification, simulation, and studies.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (default: config output.directory)")
        p.add_argument("--seed", type=int, default=None, help="override the channel seed")
        p.add_argument("--trials", type=int, default=None,
                       help="override sim.trials (used by entropy-study)")
        p.add_argument("--convention", choices=list(THRESHOLD_CONVENTIONS), default=None,
                       help="override the shrinkage convention")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = sub.add_parser("certify", help="solve the Riccati equation and emit the stability certificate")
    common(p)
    p = sub.add_parser("run", help="one closed-loop run with full trajectory outputs")
    common(p)
    p = sub.add_parser("table1", help="compare designed packets against the config's reference packets")
    common(p)
    p = sub.add_parser("sweep-mu", help="sparsity/performance tradeoff across l1 weights")
    common(p)
    p.add_argument("--mu-grid", default="0,1,5,10,20,50,100",
                   help="comma-separated nonnegative l1 weights")
    p = sub.add_parser("entropy-study", help="many-trial entropy comparison of both controllers")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for the trials")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse prints its own message; fold usage errors into the
        # stable exit contract (--help/--version keep exiting 0)
        code = exc.code if isinstance(exc.code, int) else 1
        return EXIT_OK if code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.channel = cfg.channel.reseeded(args.seed)
        if args.convention is not None:
            cfg.solver_cfg = dataclasses.replace(cfg.solver_cfg, threshold_convention=args.convention)
        out_dir = args.out if args.out is not None else cfg.output_dir
        os.makedirs(out_dir, exist_ok=True)

        if args.command == "certify":
            return cmd_certify(cfg, out_dir, args.quiet)
        if args.command == "run":
            return cmd_run(cfg, out_dir, args.quiet)
        if args.command == "table1":
            return cmd_table1(cfg, out_dir, args.quiet)
        if args.command == "sweep-mu":
            try:
                grid = [float(tok) for tok in args.mu_grid.split(",") if tok.strip() != ""]
            except ValueError as exc:
                raise ConfigError(f"bad --mu-grid: {exc}") from exc
            return cmd_sweep_mu(cfg, out_dir, grid, args.quiet)
        if args.command == "entropy-study":
            trials = args.trials if args.trials is not None else cfg.trials
            return cmd_entropy_study(cfg, out_dir, trials, args.jobs, args.quiet)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, ContractViolation) as exc:
        # contract violations here come from config-derived values
        # (e.g. a replayed trace shorter than sim.steps)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, CertificateError) as exc:
        print(f"certification error: {exc}", file=sys.stderr)
        return EXIT_CERTIFY
    except SolverAbort as exc:
        print(f"solver error at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
