"""Experiment configuration: JSON schema, validation, and object wiring.

A config file fully describes one experiment: the plant, the horizon and
weights (with exactly one way of fixing the terminal weight: the control
weight r, the slack epsilon, or an explicit matrix P), the solver, the
channel, the simulation block, the quantizer, and output options. An
optional "anchor" block carries known reference packets used by the
table1 command and for shrinkage-convention resolution.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from .analysis import QuantizerSpec
from .horizon import CostConfig, HorizonData, _check_spd, build_horizon
from .network import DropoutModel
from .plant import PlantModel
from .riccati import RiccatiSolution, epsilon_from_r, r_from_epsilon, solve_dare
from .solver import THRESHOLD_CONVENTIONS, SolverConfig

__version__ = "0.1.0"


class ConfigError(ValueError):
    """The configuration file is missing, malformed, or inconsistent."""


_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_vector = {"type": "array", "minItems": 1, "items": {"type": "number"}}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["plant", "horizon", "weights"],
    "additionalProperties": False,
    "properties": {
        "plant": {
            "type": "object",
            "required": ["A", "B"],
            "additionalProperties": False,
            "properties": {"A": _matrix, "B": _vector},
        },
        "horizon": {
            "type": "object",
            "required": ["N"],
            "additionalProperties": False,
            "properties": {"N": {"type": "integer", "minimum": 1}},
        },
        "weights": {
            "type": "object",
            "required": ["Q", "mu"],
            "additionalProperties": False,
            "properties": {
                "Q": _matrix,
                "mu": {"type": "number", "exclusiveMinimum": 0},
                "r": {"type": "number", "exclusiveMinimum": 0},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "P": _matrix,
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "convention": {"enum": list(THRESHOLD_CONVENTIONS)},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "kkt_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "acceleration": {"enum": ["none", "momentum"]},
                "warm_start": {"enum": ["zero", "least-squares", "previous-packet"]},
            },
        },
        "network": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["none", "bernoulli", "burst-uniform", "deterministic-trace"]},
                "seed": {"type": "integer", "minimum": 0},
                "p": {"type": "number", "minimum": 0, "maximum": 1},
                "lo": {"type": "integer", "minimum": 0},
                "hi": {"type": "integer", "minimum": 0},
                "trace_file": {"type": "string"},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "steps": {"type": "integer", "minimum": 1},
                "x0": _vector,
                "x0_distribution": {"enum": ["standard-normal"]},
                "trials": {"type": "integer", "minimum": 1},
                "master_seed": {"type": "integer", "minimum": 0},
            },
        },
        "quantizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "bits": {"type": "integer", "minimum": 1},
                "step": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
            },
        },
        "anchor": {
            "type": "object",
            "required": ["x0", "l1l2", "l2"],
            "additionalProperties": False,
            "properties": {
                "x0": _vector,
                "l1l2": _vector,
                "l2": _vector,
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


@dataclass
class ExperimentConfig:
    """Validated configuration plus the objects it wires together.

    The terminal weight P is not solved at load time; call
    terminal_weight() (may run the Riccati iteration) or horizon_data()
    when needed, so schema problems and numerical problems surface at
    different exit codes in the CLI.
    """

    raw: dict
    model: PlantModel
    N: int
    Q: np.ndarray
    mu: float
    r: float | None
    epsilon: float | None
    P_explicit: np.ndarray | None
    solver_cfg: SolverConfig
    channel: DropoutModel
    quantizer: QuantizerSpec | None
    steps: int
    x0: np.ndarray | None
    trials: int
    master_seed: int
    output_dir: str
    formats: tuple
    anchor: dict | None

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def terminal_weight(self) -> tuple[np.ndarray, RiccatiSolution | None]:
        """P and, when it came from the Riccati solve, the full solution."""
        if self.P_explicit is not None:
            return self.P_explicit, None
        ricc = solve_dare(self.model, self.Q, self.r)
        return ricc.P, ricc

    def horizon_data(self) -> tuple[HorizonData, RiccatiSolution | None]:
        P, ricc = self.terminal_weight()
        hz = build_horizon(self.model, CostConfig(N=self.N, Q=self.Q, P=P, mu=self.mu))
        return hz, ricc

    def metadata(self, command: str) -> dict:
        from .sim import RNG_DESCRIPTION

        return {
            "command": command,
            "artifact": "sparseppc",
            "version": __version__,
            "config_hash": self.config_hash(),
            "seed": self.channel.seed,
            "master_seed": self.master_seed,
            "rng": RNG_DESCRIPTION,
            "threshold_convention": self.solver_cfg.threshold_convention,
        }


def _build(raw: dict) -> ExperimentConfig:
    weights = raw["weights"]
    given = [k for k in ("r", "epsilon", "P") if k in weights]
    if len(given) != 1:
        raise ConfigError(
            f"weights must fix the terminal weight exactly one way (r, epsilon, or P); got {given or 'none'}"
        )
    mu = float(weights["mu"])
    r = weights.get("r")
    eps = weights.get("epsilon")
    if r is not None:
        eps = epsilon_from_r(mu, float(r))
    elif eps is not None:
        r = r_from_epsilon(mu, float(eps))

    try:
        model = PlantModel(np.array(raw["plant"]["A"], dtype=float),
                           np.array(raw["plant"]["B"], dtype=float))
    except ValueError as exc:
        raise ConfigError(f"invalid plant: {exc}") from exc

    solver = raw.get("solver", {})
    solver_cfg = SolverConfig(
        threshold_convention=solver.get("convention", "prox-standard"),
        max_iters=solver.get("max_iters", 10**5),
        tol=solver.get("tol", 1e-10),
        acceleration=solver.get("acceleration", "none"),
        warm_start=solver.get("warm_start", "previous-packet"),
        kkt_tol=solver.get("kkt_tol", 1e-6),
    )

    net = raw.get("network", {"kind": "none"})
    kind = net.get("kind", "none")
    trace = None
    if kind == "deterministic-trace":
        from .network import load_trace

        if "trace_file" not in net:
            raise ConfigError("deterministic-trace network requires trace_file")
        trace = load_trace(net["trace_file"]).d
    try:
        channel = DropoutModel(
            kind=kind,
            seed=int(net.get("seed", 0)),
            p=net.get("p"),
            lo=net.get("lo"),
            hi=net.get("hi"),
            trace=trace,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid network block: {exc}") from exc

    quant_block = raw.get("quantizer", {})
    quantizer = None
    if quant_block.get("enabled", False):
        quantizer = QuantizerSpec(bits=quant_block.get("bits", 8), step=quant_block.get("step", 0.25))

    sim = raw.get("sim", {})
    x0 = sim.get("x0")
    if x0 is not None:
        x0 = np.array(x0, dtype=float)
        if x0.shape != (model.n,):
            raise ConfigError(f"sim.x0 must have {model.n} entries, got {x0.size}")

    out = raw.get("output", {})
    try:
        Q = _check_spd(np.array(weights["Q"], dtype=float), "Q", model.n)
    except ValueError as exc:
        raise ConfigError(f"invalid weights: {exc}") from exc
    P_explicit = None
    if "P" in weights:
        try:
            P_explicit = _check_spd(np.array(weights["P"], dtype=float), "P", model.n)
        except ValueError as exc:
            raise ConfigError(f"invalid weights: {exc}") from exc

    anchor = raw.get("anchor")
    if anchor is not None:
        anchor = {
            "x0": np.array(anchor["x0"], dtype=float),
            "l1l2": np.array(anchor["l1l2"], dtype=float),
            "l2": np.array(anchor["l2"], dtype=float),
            "tolerance": float(anchor.get("tolerance", 5e-3)),
        }
        if anchor["x0"].shape != (model.n,):
            raise ConfigError("anchor.x0 dimension does not match the plant")

    return ExperimentConfig(
        raw=raw,
        model=model,
        N=int(raw["horizon"]["N"]),
        Q=Q,
        mu=mu,
        r=None if r is None else float(r),
        epsilon=None if eps is None else float(eps),
        P_explicit=P_explicit,
        solver_cfg=solver_cfg,
        channel=channel,
        quantizer=quantizer,
        steps=int(sim.get("steps", 100)),
        x0=x0,
        trials=int(sim.get("trials", 1)),
        master_seed=int(sim.get("master_seed", 0)),
        output_dir=out.get("directory", "out"),
        formats=tuple(out.get("formats", ["csv", "json"])),
        anchor=anchor,
    )


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a config dict against the schema and wire the objects."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation at {list(exc.absolute_path)}: {exc.message}") from exc
    return _build(raw)


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(raw)


def benchmark_config_dict() -> dict:
    """The bundled 4-state benchmark configuration, as a plain dict."""
    with resources.files("sparseppc.data").joinpath("benchmark.json").open("r") as fh:
        return json.load(fh)


def benchmark_config() -> ExperimentConfig:
    """Parsed form of the bundled benchmark configuration."""
    return parse_config(benchmark_config_dict())
