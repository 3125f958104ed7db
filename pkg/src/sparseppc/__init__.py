"""Sparse packetized predictive control over erasure channels.

Design sparse control packets by l1-penalized horizon optimization,
certify practical stability of the closed loop under bounded packet
dropouts, and run reproducible dropout simulations and coding studies.
"""

from .analysis import (
    ContractionReport,
    EntropyReport,
    QuantizerSpec,
    StabilityCertificate,
    TheoremMarginReport,
    check_contraction,
    check_theorem1,
    entropy,
    phi,
    quantize,
    sparsity_stats,
    stability_constants,
)
from .config import ConfigError, ExperimentConfig, benchmark_config, load_config, parse_config
from .controller import as_packet, l1l2_packet, l2_packet
from .errors import (
    CertificateError,
    ConstructionError,
    ContractViolation,
    ConvergenceError,
    SolverAbort,
)
from .horizon import CostConfig, HorizonData, build_horizon, horizon_cost, least_squares_packet, lipschitz_bound
from .network import (
    DropoutModel,
    DropoutTrace,
    check_assumption1,
    consecutive_dropouts,
    generate_trace,
    load_trace,
    save_trace,
)
from .plant import BufferState, PlantModel, buffer_step, plant_step, rollout
from .riccati import (
    RiccatiSolution,
    closed_loop_identity_residual,
    epsilon_from_r,
    r_from_epsilon,
    solve_dare,
)
from .sim import SimulationRecord, TrialSummary, run_closed_loop, run_trials, summarize_record
from .solver import (
    SolveReport,
    SolverConfig,
    certify_optimal,
    effective_weight,
    in_dead_zone,
    shift_packet,
    soft_threshold,
    solve_packet,
    threshold_level,
    value_function,
)

__version__ = "0.1.0"
