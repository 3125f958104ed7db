import numpy as np
import pytest

from sparseppc.analysis import (
    QuantizerSpec,
    StabilityCertificate,
    certificate_to_dict,
    check_contraction,
    check_theorem1,
    entropy,
    histogram_to_csv,
    phi,
    quantize,
    sparsity_stats,
    stability_constants,
)
from sparseppc.errors import ContractViolation
from sparseppc.horizon import CostConfig, build_horizon
from sparseppc.network import DropoutTrace
from sparseppc.riccati import r_from_epsilon, solve_dare
from sparseppc.sim import SimulationRecord

Q8 = QuantizerSpec(bits=8, step=0.25)


def test_quantize_midtread_rounding():
    assert quantize(Q8, 0.13) == 0.25
    assert quantize(Q8, -0.12) == 0.0
    assert quantize(Q8, 0.125) == 0.25  # half rounds away from zero
    assert quantize(Q8, -0.125) == -0.25


def test_quantize_saturates():
    assert quantize(Q8, 100.0) == 31.75
    assert quantize(Q8, -100.0) == -32.0


def test_quantize_zero_is_exact_and_unsigned():
    q = quantize(Q8, 0.0)
    assert q == 0.0 and not np.signbit(q)
    v = quantize(Q8, np.array([0.0, -0.1, 0.1]))
    assert v[0] == 0.0 and v[1] == 0.0 and not np.signbit(v).any()


def test_quantize_idempotent():
    rng = np.random.default_rng(4)
    v = rng.uniform(-40, 40, size=500)
    once = quantize(Q8, v)
    np.testing.assert_array_equal(quantize(Q8, once), once)


def test_quantize_shape_preserved():
    v = np.array([[0.3, -0.3], [40.0, 0.0]])
    out = quantize(Q8, v)
    assert out.shape == v.shape
    assert isinstance(quantize(Q8, 0.3), float)


def test_quantizer_spec_validation():
    assert Q8.level_min == -32.0 and Q8.level_max == 31.75
    with pytest.raises(ContractViolation):
        QuantizerSpec(bits=0)
    with pytest.raises(ContractViolation):
        QuantizerSpec(step=0.0)
    with pytest.raises(ContractViolation):
        QuantizerSpec(style="midrise")


def test_entropy_two_equal_symbols():
    rep = entropy([0.0, 0.25, 0.0, 0.25], N=5)
    assert rep.per_sample_entropy == pytest.approx(1.0)
    assert rep.per_packet_entropy == pytest.approx(5.0)
    assert rep.zero_count == 2 and rep.total_values == 4


def test_entropy_degenerate_and_uniform():
    assert entropy([1.0] * 10, N=3).per_sample_entropy == 0.0
    rep = entropy([0.0, 0.25, 0.5, 0.75], N=1)
    assert rep.per_sample_entropy == pytest.approx(2.0)


def test_entropy_bounds_random():
    rng = np.random.default_rng(2)
    vals = quantize(Q8, rng.standard_normal(4000) * 3)
    rep = entropy(vals, N=5)
    assert 0.0 <= rep.per_sample_entropy <= 8.0
    assert sum(rep.histogram.values()) == rep.total_values


def test_entropy_rejects_empty():
    with pytest.raises(ContractViolation):
        entropy([], N=5)


def test_sparsity_stats():
    zeros = [np.zeros(5)] * 3
    assert sparsity_stats(zeros) == (0.0, 5.0)
    dense = [np.ones(5), np.full(5, 2.0)]
    assert sparsity_stats(dense) == (5.0, 0.0)
    mixed = [np.array([1.0, 0.0, 0.0, 2.0, 0.0]), np.array([0.0, 0.0, 0.0, 0.0, 3.0])]
    assert sparsity_stats(mixed) == (1.5, 3.5)


def test_histogram_csv(tmp_path):
    rep = entropy([0.0, 0.25, 0.0], N=2)
    path = tmp_path / "hist.csv"
    histogram_to_csv(rep, path)
    assert path.read_text().splitlines() == ["level,count", "0,2", "0.25,1"]


def test_stability_constants_identity_weight_formula(benchmark):
    cert = benchmark.cert
    # Q = I: rho = 1 - 1/(a1 + a2 + 1)
    assert cert.rho == pytest.approx(1.0 - 1.0 / (cert.a1 + cert.a2 + 1.0), rel=1e-12)
    assert 0.0 < cert.rho < 1.0
    assert cert.epsilon == 25.0
    assert cert.a1 > 0 and cert.a2 >= 0 and cert.Delta > 0


def test_delta_recompute_consistency(benchmark):
    cert = benchmark.cert
    delta = np.sqrt(
        cert.rho / (1.0 - cert.rho) * (cert.epsilon / cert.lam_min_Q + cert.N / 4.0)
    )
    assert cert.Delta == pytest.approx(delta, abs=1e-12)


def test_smaller_mu_tightens_contraction(benchmark):
    # mu -> 0 at fixed epsilon: a1 shrinks with mu, so rho decreases
    mu_small = 1.0
    ricc_small = solve_dare(benchmark.model, benchmark.cfg.Q, r_from_epsilon(mu_small, 25.0))
    hz_small = build_horizon(
        benchmark.model,
        CostConfig(N=5, Q=benchmark.cfg.Q, P=ricc_small.P, mu=mu_small),
    )
    cert_small = stability_constants(hz_small, benchmark.cfg.Q, mu_small, ricc_small, 5)
    assert cert_small.epsilon == 25.0
    assert cert_small.a1 < benchmark.cert.a1
    assert cert_small.rho < benchmark.cert.rho


def test_phi_values(benchmark):
    cert = benchmark.cert
    assert phi(cert, 0.0) == 0.0
    assert phi(cert, 1.0) == pytest.approx(cert.a1 + cert.a2 + cert.lam_max_Q)
    s1, s2 = 0.7, 3.1
    assert phi(cert, (s1 + s2) / 2) <= (phi(cert, s1) + phi(cert, s2)) / 2 + 1e-12
    with pytest.raises(ContractViolation):
        phi(cert, -1.0)


def _synthetic_record(norms, dropout_bits):
    states = np.zeros((len(norms), 3))
    states[:, 0] = norms
    return SimulationRecord(
        states=states,
        inputs=np.zeros(len(norms) - 1),
        packets=[],
        designed_packets=[],
        received=DropoutTrace(dropout_bits),
        config={},
        solver_iterations=[],
    )


def _synthetic_cert(rho=0.25, delta=0.5):
    return StabilityCertificate(
        P=np.eye(3), K=np.zeros(3), r=1.0, epsilon=1.0, a1=0.0, a2=0.0,
        rho=rho, Delta=delta, lam_min_Q=1.0, lam_max_Q=1.0, N=3, mu=1.0,
    )


def test_theorem_check_index_bookkeeping():
    # receptions at k=0 and k=2: k=1,2 use i=0 (RHS 1.5), k=3 uses i=1 (RHS 1.0)
    cert = _synthetic_cert()  # phi(s) = s^2, base = sqrt(phi(2)) = 2
    rec = _synthetic_record([2.0, 1.4, 1.4, 0.9], [0, 1, 0])
    rep = check_theorem1(rec, cert)
    assert rep.applicable and rep.first_k == 0
    assert rep.passed
    np.testing.assert_allclose(rep.slacks, [0.1, 0.1, 0.1], atol=1e-12)

    # k=3 violating its i=1 bound is caught even though i=0 would allow it
    rec_bad = _synthetic_record([2.0, 1.4, 1.4, 1.2], [0, 1, 0])
    rep_bad = check_theorem1(rec_bad, cert)
    assert rep_bad.applicable and not rep_bad.passed
    assert rep_bad.min_slack == pytest.approx(-0.2)


def test_theorem_check_zero_trajectory(benchmark):
    steps = 10
    states = np.zeros((steps + 1, 4))
    rec = SimulationRecord(
        states=states, inputs=np.zeros(steps), packets=[], designed_packets=[],
        received=DropoutTrace(np.zeros(steps, dtype=int)), config={}, solver_iterations=[],
    )
    rep = check_theorem1(rec, benchmark.cert)
    assert rep.applicable and rep.passed
    assert rep.min_slack >= benchmark.cert.Delta - 1e-9


def test_theorem_check_inapplicable_when_assumption_fails():
    cert = _synthetic_cert()
    rec = _synthetic_record([1.0, 1.0, 1.0, 1.0, 1.0], [0, 1, 1, 1])  # N=3, gap 3 > 2
    rep = check_theorem1(rec, cert)
    assert not rep.applicable and not rep.passed


def test_contraction_at_origin(benchmark):
    rep = check_contraction(
        benchmark.model, benchmark.hz, benchmark.solver_cfg, benchmark.cert, np.zeros(4)
    )
    assert rep.passed and rep.value_at_x == 0.0
    np.testing.assert_allclose(rep.open_loop_margins, benchmark.cert.epsilon, atol=1e-12)
    expected = benchmark.cert.epsilon + benchmark.cert.N * benchmark.cert.lam_min_Q / 4.0
    np.testing.assert_allclose(rep.contraction_margins, expected, atol=1e-12)


def test_contraction_random_states(benchmark):
    rng = np.random.default_rng(3)
    for _ in range(25):
        x = rng.standard_normal(4)
        rep = check_contraction(
            benchmark.model, benchmark.hz, benchmark.solver_cfg, benchmark.cert, x
        )
        assert rep.passed, (rep.open_loop_margins.min(), rep.contraction_margins.min())


def test_contraction_falsification_probe(benchmark):
    # wrong terminal weight: P = Q instead of the Riccati solution
    wrong_hz = build_horizon(
        benchmark.model, CostConfig(N=5, Q=benchmark.cfg.Q, P=benchmark.cfg.Q, mu=100.0)
    )
    wrong_cert = stability_constants(wrong_hz, benchmark.cfg.Q, 100.0, benchmark.ricc, 5)
    rng = np.random.default_rng(3)
    violations = 0
    for _ in range(25):
        x = rng.standard_normal(4)
        rep = check_contraction(
            benchmark.model, wrong_hz, benchmark.solver_cfg, wrong_cert, x
        )
        if not rep.passed:
            violations += 1
    assert violations > 0


def test_certificate_serialization(benchmark):
    d = certificate_to_dict(benchmark.cert)
    assert set(d) == {
        "P", "K", "r", "epsilon", "a1", "a2", "rho", "Delta",
        "lam_min_Q", "lam_max_Q", "N", "mu", "phi_coefficients",
    }
    assert d["epsilon"] == 25.0
    np.testing.assert_allclose(np.array(d["P"]), benchmark.cert.P)
