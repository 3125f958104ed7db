"""Shared fixtures and generators for the test suite."""

from types import SimpleNamespace

import numpy as np
import pytest

from sparseppc.analysis import stability_constants
from sparseppc.config import benchmark_config
from sparseppc.horizon import CostConfig, HorizonData, build_horizon
from sparseppc.plant import PlantModel, controllability_matrix
from sparseppc.solver import SolverConfig


@pytest.fixture(scope="session")
def benchmark():
    """The bundled 4-state benchmark system with everything pre-built."""
    cfg = benchmark_config()
    hz, ricc = cfg.horizon_data()
    cert = stability_constants(hz, cfg.Q, cfg.mu, ricc, cfg.N)
    return SimpleNamespace(
        cfg=cfg,
        model=cfg.model,
        hz=hz,
        ricc=ricc,
        cert=cert,
        solver_cfg=cfg.solver_cfg,
        x0=np.ones(4),
    )


@pytest.fixture(scope="session")
def ista_cfg():
    return SolverConfig(acceleration="none")


@pytest.fixture(scope="session")
def fista_cfg():
    return SolverConfig(acceleration="momentum")


def random_reachable(rng, n_max=4, allow_n1=True):
    """Random reachable (A, B) with sane conditioning of the controllability matrix."""
    while True:
        n = int(rng.integers(1 if allow_n1 else 2, n_max + 1))
        A = rng.standard_normal((n, n))
        B = rng.standard_normal(n)
        s = np.linalg.svd(controllability_matrix(A, B), compute_uv=False)
        if s[-1] >= 1e-4 * s[0]:
            return PlantModel(A, B)


def random_spd(rng, n):
    R = rng.standard_normal((n, n))
    return R @ R.T + 0.2 * np.eye(n)


def random_horizon(rng, n_max=4, N_max=6, mu_range=(0.1, 10.0)) -> HorizonData:
    """Random horizon problem for solver property tests.

    Rejects Gram conditioning worse than ~2000 (the benchmark's level):
    the solver's certified-tail iteration bound scales with
    lam_max/lam_min, so pathological instances would only test the
    iteration cap.
    """
    while True:
        model = random_reachable(rng, n_max=n_max)
        N = int(rng.integers(1, N_max + 1))
        mu = float(rng.uniform(*mu_range))
        cfg = CostConfig(N=N, Q=random_spd(rng, model.n), P=random_spd(rng, model.n), mu=mu)
        hz = build_horizon(model, cfg)
        if hz.lam_min >= 5e-4 * hz.lam_max:
            return hz


def cost_by_recursion(model, cfg, U, x):
    """Independent cost oracle: run the prediction recursion step by step.

    Accumulates ||x(i)||_Q^2 for i = 0..N-1, the terminal ||x(N)||_P^2,
    and the weighted l1 input penalty, never touching the stacked
    matrices.
    """
    z = np.asarray(x, dtype=float).copy()
    total = 0.0
    for i in range(cfg.N):
        total += float(z @ cfg.Q @ z) + cfg.mu * abs(float(U[i]))
        z = model.A @ z + model.B * float(U[i])
    total += float(z @ cfg.P @ z)
    return total
