import numpy as np
import pytest
import scipy.linalg

from conftest import cost_by_recursion, random_reachable, random_spd
from sparseppc.errors import ConstructionError
from sparseppc.horizon import (
    CostConfig,
    build_horizon,
    horizon_cost,
    least_squares_packet,
    lipschitz_bound,
)
from sparseppc.plant import PlantModel


def scalar_model(a):
    return PlantModel(np.array([[float(a)]]), np.array([1.0]))


def test_build_scalar_integrator():
    hz = build_horizon(scalar_model(1.0), CostConfig(N=2, Q=[[1.0]], P=[[1.0]], mu=1.0))
    np.testing.assert_allclose(hz.Phi, [[1.0, 0.0], [1.0, 1.0]], atol=1e-15)
    np.testing.assert_allclose(hz.Upsilon, [[1.0], [1.0]], atol=1e-15)
    np.testing.assert_allclose(hz.Qbar, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(hz.G, hz.Phi, atol=1e-15)
    np.testing.assert_allclose(hz.H, -hz.Upsilon, atol=1e-15)


def test_build_scalar_double():
    hz = build_horizon(scalar_model(2.0), CostConfig(N=2, Q=[[1.0]], P=[[1.0]], mu=1.0))
    np.testing.assert_allclose(hz.Phi, [[1.0, 0.0], [2.0, 1.0]], atol=1e-15)
    np.testing.assert_allclose(hz.Upsilon, [[2.0], [4.0]], atol=1e-15)


def test_benchmark_shapes_and_eigenvalue_oracle(benchmark):
    hz = benchmark.hz
    assert hz.G.shape == (20, 5)
    assert hz.H.shape == (20, 4)
    # two-method oracle: power iteration against the dense eigensolver
    dense = float(np.linalg.eigvalsh(hz.G.T @ hz.G)[-1])
    assert lipschitz_bound(hz.G) == pytest.approx(dense, rel=1e-8)


def test_weighted_forms_reverifiable(benchmark):
    # independent square root (scipy.linalg.sqrtm) reproduces G and H
    hz = benchmark.hz
    sq = scipy.linalg.sqrtm(hz.Qbar).real
    np.testing.assert_allclose(sq @ hz.Phi, hz.G, atol=1e-12 * np.abs(hz.G).max())
    np.testing.assert_allclose(-sq @ hz.Upsilon, hz.H, atol=1e-12 * np.abs(hz.H).max())


def test_g_full_column_rank_and_strict_c(benchmark):
    hz = benchmark.hz
    assert np.linalg.matrix_rank(hz.G) == hz.N
    assert hz.c > hz.lam_max


def test_lipschitz_bound_identity():
    assert lipschitz_bound(np.eye(3)) == pytest.approx(1.0, rel=1e-10)


def test_lipschitz_bound_diag():
    assert lipschitz_bound(np.diag([1.0, 2.0, 3.0])) == pytest.approx(9.0, rel=1e-10)


def test_lipschitz_bound_degenerate_start():
    # ones vector is orthogonal to the dominant eigenvector: falls back cleanly
    G = np.diag([2.0, -2.0])  # G^T G = 4 I, any vector is dominant
    assert lipschitz_bound(G) == pytest.approx(4.0, rel=1e-10)
    M = np.array([[1.0, -1.0], [-1.0, 1.0]])  # dominant eigvec (1,-1), ones in null space
    assert lipschitz_bound(M) == pytest.approx(float(np.linalg.eigvalsh(M.T @ M)[-1]), rel=1e-8)


def test_least_squares_packet_zero_state(benchmark):
    np.testing.assert_array_equal(least_squares_packet(benchmark.hz, np.zeros(4)), np.zeros(5))


def test_least_squares_packet_scalar_deadbeat():
    hz = build_horizon(scalar_model(1.0), CostConfig(N=1, Q=[[1.0]], P=[[1.0]], mu=1.0))
    np.testing.assert_allclose(hz.G, [[1.0]], atol=1e-15)
    np.testing.assert_allclose(hz.H, [[-1.0]], atol=1e-15)
    assert least_squares_packet(hz, np.array([1.0])) == pytest.approx([-1.0])


def test_least_squares_packet_against_normal_equations(benchmark):
    # oracle: solve the normal equations by Cholesky instead of QR
    hz = benchmark.hz
    x = np.ones(4)
    u_qr = least_squares_packet(hz, x)
    u_ne = scipy.linalg.solve(hz.G.T @ hz.G, hz.G.T @ (hz.H @ x), assume_a="pos")
    np.testing.assert_allclose(u_qr, u_ne, rtol=1e-9, atol=1e-12)


def test_least_squares_residual_orthogonality(benchmark):
    rng = np.random.default_rng(5)
    hz = benchmark.hz
    for _ in range(20):
        x = rng.standard_normal(4) * rng.uniform(0.1, 10)
        u = least_squares_packet(hz, x)
        resid = hz.G.T @ (hz.G @ u - hz.H @ x)
        assert np.max(np.abs(resid)) <= 1e-9


def test_recursive_and_vector_costs_agree():
    # module master test: the stacked form equals the recursion
    rng = np.random.default_rng(42)
    for _ in range(100):
        model = random_reachable(rng)
        N = int(rng.integers(1, 7))
        cfg = CostConfig(
            N=N, Q=random_spd(rng, model.n), P=random_spd(rng, model.n),
            mu=float(rng.uniform(0.1, 10)),
        )
        hz = build_horizon(model, cfg)
        U = rng.standard_normal(N)
        x = rng.standard_normal(model.n)
        expected = cost_by_recursion(model, cfg, U, x)
        got = horizon_cost(hz, U, x)
        assert got == pytest.approx(expected, rel=1e-10)


def test_rebuild_is_bit_identical(benchmark):
    hz2 = build_horizon(benchmark.model, benchmark.hz.cfg)
    for name in ("Phi", "Upsilon", "Qbar", "G", "H", "Gplus", "GtG", "GtH"):
        assert np.array_equal(getattr(benchmark.hz, name), getattr(hz2, name))
    assert benchmark.hz.c == hz2.c


def test_construction_errors_name_the_matrix():
    model = scalar_model(1.0)
    with pytest.raises(ConstructionError, match="Q"):
        CostConfig(N=2, Q=[[-1.0]], P=[[1.0]], mu=1.0)
    with pytest.raises(ConstructionError, match="P"):
        CostConfig(N=2, Q=[[1.0]], P=[[0.0]], mu=1.0)
    with pytest.raises(ConstructionError):
        CostConfig(N=0, Q=[[1.0]], P=[[1.0]], mu=1.0)
    with pytest.raises(ConstructionError):
        CostConfig(N=2, Q=[[1.0]], P=[[1.0]], mu=0.0)
    with pytest.raises(ConstructionError):
        build_horizon(model, CostConfig(N=2, Q=np.eye(2), P=np.eye(2), mu=1.0))
