import numpy as np
import pytest

from oracles import depolarizing_chi, nearest_state_grid
from w4reset import qcore, tomography as tomo
from w4reset.protocol import ProtocolConfig, build_protocol_circuit, run_protocol, success_projector

INPUTS = [qcore.BLOCH_STATES[s] for s in tomo.QPT_INPUTS]


def random_channel_chi(rng, n_kraus=3):
    """chi of a random CPTP map built from a random isometry."""
    v = qcore.haar_unitary(2 * n_kraus, rng)[:, :2]
    kraus = [v[2 * k : 2 * k + 2, :] for k in range(n_kraus)]
    outs = [sum(k @ qcore.ket_to_dm(s) @ k.conj().T for k in kraus) for s in INPUTS]
    return tomo.qpt_chi(INPUTS, outs).elements


def naive_clip_rescale(m):
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    out = (v * np.clip(w, 0, None)) @ v.conj().T
    return out / np.trace(out).real


def test_sampling_basics():
    recs = tomo.sample_measurements(qcore.ket_to_dm(qcore.KET_0), shots=500, seed=1, settings=["Z"])
    assert recs[0].counts.tolist() == [500, 0]
    recs = tomo.sample_measurements(qcore.ket_to_dm(qcore.KET_PLUS), shots=10_000, seed=2, settings=["Z"])
    assert abs(recs[0].counts[0] - 5000) <= 5 * np.sqrt(10_000 * 0.25)
    a = tomo.sample_measurements(np.eye(4) / 4, shots=100, seed=3)
    b = tomo.sample_measurements(np.eye(4) / 4, shots=100, seed=3)
    assert all(np.array_equal(x.counts, y.counts) for x, y in zip(a, b))
    assert len(a) == 9


def test_measurement_record_validation():
    with pytest.raises(ValueError):
        tomo.MeasurementRecord("ZI", 10, np.array([10, 0, 0, 0]))
    with pytest.raises(ValueError):
        tomo.MeasurementRecord("Z", 10, np.array([3, 3]))


def test_qst_exact_round_trip():
    assert np.allclose(tomo.qst_linear_inversion(tomo.sample_measurements(qcore.ket_to_dm(qcore.KET_0), None)),
                       qcore.ket_to_dm(qcore.KET_0), atol=1e-14)
    rng = np.random.default_rng(4)
    for n in (1, 2, 3):
        rho = qcore.random_density_matrix(n, rng)
        back = tomo.qst_linear_inversion(tomo.sample_measurements(rho, None))
        assert np.max(np.abs(back - rho)) < 1e-12


def test_qst_finite_shots_is_hermitian_unit_trace():
    rho = qcore.ket_to_dm(qcore.random_state_vector(2, np.random.default_rng(5)))
    est = tomo.qst_linear_inversion(tomo.sample_measurements(rho, shots=200, seed=5))
    assert np.allclose(est, est.conj().T)
    assert np.trace(est).real == pytest.approx(1.0)


def test_qst_requires_all_settings():
    recs = tomo.sample_measurements(np.eye(4) / 4, None)
    with pytest.raises(ValueError):
        tomo.qst_linear_inversion(recs[:-1])


def test_cp_project_cases():
    rho = qcore.random_density_matrix(2, np.random.default_rng(6))
    assert np.allclose(tomo.cp_project(rho), rho, atol=1e-12)
    assert np.allclose(tomo.cp_project(np.diag([1.2, -0.2])), np.diag([1.0, 0.0]), atol=1e-12)


def test_cp_project_idempotent():
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        m = (a + a.conj().T) / 2
        m = m / np.trace(m).real if abs(np.trace(m)) > 0.1 else m + np.eye(4)
        once = tomo.cp_project(m)
        assert np.max(np.abs(tomo.cp_project(once) - once)) < 1e-12
        assert np.linalg.eigvalsh(once).min() > -1e-12


def test_cp_project_matches_grid_search():
    rng = np.random.default_rng(8)
    for _ in range(3):
        x = rng.normal(size=3) * 1.2
        m = 0.5 * (np.eye(2) + x[0] * qcore.X + x[1] * qcore.Y + x[2] * qcore.Z)
        best, best_d = nearest_state_grid(m, steps=61)
        ours = tomo.cp_project(m)
        d = np.linalg.norm(ours - m)
        assert d <= best_d + 1e-12
        # the grid optimum is within one cell of ours, and obeys the projection inequality
        assert best_d - d < 2 / 60
        assert np.linalg.norm(ours - best) ** 2 <= best_d**2 - d**2 + 1e-12


def test_chi_analytic_cases():
    rhos = [qcore.ket_to_dm(s) for s in INPUTS]
    chi = tomo.qpt_chi(INPUTS, rhos).elements
    assert np.allclose(chi, np.diag([1, 0, 0, 0]), atol=1e-10)
    chi = tomo.qpt_chi(INPUTS, [qcore.X @ r @ qcore.X for r in rhos]).elements
    expect = np.zeros((4, 4))
    expect[1, 1] = 1
    assert np.allclose(chi, expect, atol=1e-10)
    for p in (0.1, 0.4):
        outs = [(1 - p) * r + p * np.eye(2) / 2 for r in rhos]
        chi = tomo.qpt_chi(INPUTS, outs)
        assert np.allclose(chi.elements, depolarizing_chi(p), atol=1e-10)
        assert tomo.process_fidelity(chi) == pytest.approx(1 - 3 * p / 4)
        assert np.allclose(chi.apply(rhos[2]), outs[2])


def test_process_fidelity_pure_x():
    rhos = [qcore.ket_to_dm(s) for s in INPUTS]
    chi = tomo.qpt_chi(INPUTS, [qcore.X @ r @ qcore.X for r in rhos])
    assert tomo.process_fidelity(chi) == pytest.approx(0.0, abs=1e-12)


def test_qpt_rejects_dependent_inputs():
    with pytest.raises(ValueError):
        tomo.qpt_chi([qcore.KET_0] * 4, [np.eye(2) / 2] * 4)


def test_cptp_project_keeps_valid_chi():
    rng = np.random.default_rng(9)
    chi = random_channel_chi(rng)
    out = tomo.cptp_project(chi)
    assert np.max(np.abs(out.elements - chi)) < 1e-9
    assert out.cptp_projected


def test_cptp_project_constraints():
    out = tomo.cptp_project(np.diag([1.1, -0.1, 0, 0]).astype(complex))
    assert out.min_eigenvalue >= -1e-9
    assert out.tp_residual <= 1e-6


def _perturbed_chi(rng, scale=0.1):
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    return random_channel_chi(rng) + scale * (a + a.conj().T) / 2


def test_cptp_projection_is_nearest_feasible_point():
    rng = np.random.default_rng(10)
    for _ in range(20):
        raw = _perturbed_chi(rng)
        proj = tomo.cptp_project(raw).elements
        d = np.linalg.norm(proj - raw)
        for _ in range(10):
            other = random_channel_chi(rng)
            assert d <= np.linalg.norm(other - raw) + 1e-9
            # variational inequality of a convex projection
            assert np.real(np.vdot(raw - proj, other - proj)) <= 1e-6


def test_cptp_projection_against_naive_clip_rescale():
    rng = np.random.default_rng(11)
    for _ in range(20):
        raw = _perturbed_chi(rng)
        d = np.linalg.norm(tomo.cptp_project(raw).elements - raw)
        naive = naive_clip_rescale(raw)
        # the naive map can only come out closer by leaving the trace-preserving set
        if d > np.linalg.norm(naive - raw) + 1e-9:
            assert tomo.tp_residual(naive) > 1e-6
    # Pauli-diagonal inputs keep the naive map trace preserving, so it is a fair competitor
    for _ in range(20):
        raw = np.diag(rng.dirichlet(np.ones(4)) + rng.normal(scale=0.1, size=4)).astype(complex)
        naive = naive_clip_rescale(raw)
        assert tomo.tp_residual(naive) < 1e-9
        d = np.linalg.norm(tomo.cptp_project(raw).elements - raw)
        assert d <= np.linalg.norm(naive - raw) + 1e-9


def test_cptp_non_convergence_reports_residuals():
    with pytest.raises(tomo.ConvergenceError) as exc:
        tomo.cptp_project(_perturbed_chi(np.random.default_rng(12), scale=0.5), tol=0.0, max_iter=3)
    assert "tp_residual" in exc.value.residuals


def _final_states(noise=None):
    finals = []
    for label in tomo.QPT_INPUTS:
        cfg = ProtocolConfig(label, "z", 0.0, noise=noise)
        finals.append(run_protocol(cfg).rho_final)
    pc = build_protocol_circuit(cfg)
    return finals, success_projector(cfg.mode).lifted(pc.probe_devices)


def test_bootstrap_exact_mode_has_zero_error_bar():
    finals, proj = _final_states()
    rep = tomo.bootstrap_qpt(finals, proj, n_sets=3, shots=None)
    assert rep.error_bar == 0.0
    assert np.allclose(rep.fidelity_samples, rep.fidelity_samples[0])
    assert rep.mean == pytest.approx(1.0, abs=1e-9)


def test_bootstrap_deterministic_and_worker_independent():
    finals, proj = _final_states()
    a = tomo.bootstrap_qpt(finals, proj, n_sets=3, shots=2000, seed=4)
    b = tomo.bootstrap_qpt(finals, proj, n_sets=3, shots=2000, seed=4, workers=2)
    assert np.array_equal(a.fidelity_samples, b.fidelity_samples)
    assert a.error_bar > 0
    assert a.error_bar == pytest.approx(1.96 * np.std(a.fidelity_samples))
    c = tomo.bootstrap_qpt(finals, proj, n_sets=3, shots=2000, seed=4, order="subspace_first")
    assert np.all(np.abs(c.fidelity_samples - a.fidelity_samples) < 0.05)


def test_bootstrap_input_checks():
    finals, proj = _final_states()
    with pytest.raises(ValueError):
        tomo.bootstrap_qpt(finals[:3], proj)
    with pytest.raises(ValueError):
        tomo.bootstrap_qpt(finals, proj, order="sideways")


def test_records_csv_round_trip():
    rho = qcore.random_density_matrix(2, np.random.default_rng(13))
    for shots in (1000, None):
        recs = tomo.sample_measurements(rho, shots=shots, seed=1)
        back = tomo.records_from_csv(tomo.records_to_csv(recs))
        assert [r.setting for r in back] == [r.setting for r in recs]
        for x, y in zip(back, recs):
            assert x.shots == y.shots
            assert np.allclose(x.counts, y.counts, atol=1e-11)
