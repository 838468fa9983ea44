import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pplo.errors import CoverageError, TruncationError, ValidationError
from pplo.lindblad import (DensityMatrix, QGrid, SimSettings, SweepResult, build_hamiltonian,
                           coherent_amplitudes, evolve, fock_operators, lindblad_rhs,
                           lock_probability, modulation_depth, non_locking_error, prob_zero_pi,
                           q_function, stationarity_residual, sweep_theta, theta_grid)
from pplo.semiclassical import PploConfig, fixed_points

from conftest import SMALL_GAMMA, SMALL_N_MAX


def random_density(n_max, rng):
    m = rng.normal(size=(n_max + 1, n_max + 1)) + 1j * rng.normal(size=(n_max + 1, n_max + 1))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


def test_operators():
    ops = fock_operators(6)
    for m in range(6):
        assert ops.a[m, m + 1] == pytest.approx(math.sqrt(m + 1))
    assert np.count_nonzero(ops.a) == 6
    assert np.allclose(ops.a_dag_a, np.diag(np.arange(7)))
    assert np.allclose(ops.kerr, ops.a_dag @ ops.a_dag @ ops.a @ ops.a)
    assert np.allclose(ops.kerr, np.diag(np.arange(7) * (np.arange(7) - 1)))
    assert not ops.a.flags.writeable
    with pytest.raises(ValidationError):
        fock_operators(1)


def test_hamiltonian_examples():
    ops = fock_operators(8)
    assert not np.any(build_hamiltonian(PploConfig(0.0, 0.0), ops))
    h = build_hamiltonian(PploConfig(1.0, 0.0), fock_operators(2))
    expected = np.zeros((3, 3))
    expected[0, 2] = expected[2, 0] = 0.5 * math.sqrt(2)
    assert np.allclose(h, expected, atol=1e-15)


@given(st.floats(0, 3), st.floats(-1, 1), st.floats(0, 2), st.floats(0, 2 * math.pi))
def test_hamiltonian_hermitian(p, g, n, th):
    h = build_hamiltonian(PploConfig(p, g, n, th), fock_operators(10))
    assert np.max(np.abs(h - h.conj().T)) < 1e-12


def test_rhs_examples():
    ops = fock_operators(5)
    zero = np.zeros((6, 6), complex)
    assert not np.any(lindblad_rhs(ops, zero, DensityMatrix.vacuum(5)))
    d = lindblad_rhs(ops, zero, DensityMatrix.fock(5, 1))
    expected = np.zeros((6, 6))
    expected[0, 0], expected[1, 1] = 2.0, -2.0
    assert np.allclose(d, expected)


@given(st.integers(0, 2**32 - 1))
def test_rhs_trace_free_and_hermitian(seed):
    rng = np.random.default_rng(seed)
    ops = fock_operators(8)
    cfg = PploConfig(rng.uniform(0, 3), -rng.uniform(0, 1), rng.uniform(0, 2), rng.uniform(0, 6.3))
    rho = random_density(8, rng)
    d = lindblad_rhs(ops, build_hamiltonian(cfg, ops), rho)
    assert abs(np.trace(d)) < 1e-12
    assert np.max(np.abs(d - d.conj().T)) < 1e-12


def test_density_constructors():
    c = DensityMatrix.coherent(40, 1.0)
    assert c.trace_error() < 1e-14
    assert c.mean_photon_number() == pytest.approx(1.0, abs=1e-12)
    assert c.min_eigenvalue() > -1e-12
    with pytest.raises(ValidationError):
        DensityMatrix(np.zeros((3, 4)))


def test_dissipator_decay():
    cfg = PploConfig(0.0, 0.0)
    rho = evolve(cfg, DensityMatrix.fock(6, 1), tau_end=2.0, checkpoint_every=100)
    for tau, _, n in rho.info.checkpoints:
        assert n == pytest.approx(math.exp(-2 * tau), abs=1e-6)


def test_coherent_decay():
    # a coherent state stays coherent under pure loss, alpha(tau) = alpha0 exp(-tau)
    rho = evolve(PploConfig(0.0, 0.0), DensityMatrix.coherent(30, 2.0), tau_end=1.0)
    assert rho.mean_photon_number() == pytest.approx(4 * math.exp(-2), abs=1e-6)
    assert rho.expect(fock_operators(30).a) == pytest.approx(2 * math.exp(-1), abs=1e-6)


def test_mean_field_matches_semiclassical_when_linear():
    # gamma' = 0, below threshold: the master equation mean field is exactly linear
    from pplo.semiclassical import QuadratureState, integrate_trajectory
    cfg = PploConfig(0.5, 0.0, 0.2, 0.7)
    rho = evolve(cfg, tau_end=3.0, n_max=40)
    a = rho.expect(fock_operators(40).a)
    end = integrate_trajectory(cfg, QuadratureState(0, 0), 3.0)[-1][1]
    assert a == pytest.approx(end.amplitude, abs=1e-7)


def test_evolve_invariants_and_info(small_cfg):
    rho = evolve(small_cfg, tau_end=5.0, n_max=SMALL_N_MAX)
    info = rho.info
    assert info.max_trace_error < 1e-8
    assert info.max_hermiticity_error < 1e-10
    assert info.min_eigenvalue > -1e-6
    assert info.richardson_error < 1e-8
    assert info.n_steps == 5000 and info.tau == pytest.approx(5.0)
    assert len(info.checkpoints) == 50


def test_stop_when_stationary(small_cfg):
    rho = evolve(small_cfg.replace(n_po=1.0), tau_end=50.0, n_max=SMALL_N_MAX,
                 stop_when_stationary=True)
    assert rho.info.tau < 50.0 and rho.info.residual < 1e-4
    assert stationarity_residual(small_cfg.replace(n_po=1.0), rho) == pytest.approx(rho.info.residual)


def test_truncation_diagnostic():
    with pytest.raises(TruncationError, match="n_max"):
        evolve(PploConfig(1.66, -0.0124), tau_end=5.0, n_max=10)


def test_evolve_input_checks():
    with pytest.raises(ValidationError):
        evolve(PploConfig(1.0, 0.0), tau_end=0.0)
    with pytest.raises(ValidationError):
        evolve(PploConfig(1.0, 0.0), n_max=1)


def test_vacuum_q_function():
    q = q_function(DensityMatrix.vacuum(20), extent=6.0, resolution=121)
    x, y = np.meshgrid(q.q_x, q.q_y, indexing="ij")
    mask = x**2 + y**2 <= 9
    assert np.max(np.abs(q.values - np.exp(-(x**2 + y**2)) / math.pi)[mask]) < 1e-10
    assert q.values[60, 60] == pytest.approx(1 / math.pi, abs=1e-12)


def test_grid_is_mirror_symmetric():
    q = q_function(DensityMatrix.vacuum(10), extent=5.3, resolution=101)
    assert q.q_x[50] == 0.0
    assert np.array_equal(q.q_x, -q.q_x[::-1])


def test_coherent_q_peak():
    alpha = complex(1.0, 0.0)
    q = q_function(DensityMatrix.coherent(40, alpha), resolution=201)
    peak = q.peaks()[0]
    assert abs(peak[0] - alpha.real) <= q.cell and abs(peak[1] + alpha.imag) <= q.cell
    # z = q_x - i q_y, so alpha = i sits at q_y = -1
    q = q_function(DensityMatrix.coherent(40, 1j), resolution=201)
    assert q.peaks()[0][1] == pytest.approx(-1.0, abs=q.cell)


def test_q_normalization_and_positivity(small_cfg):
    rho = evolve(small_cfg, tau_end=10.0, n_max=SMALL_N_MAX)
    q = q_function(rho)
    assert q.extent == pytest.approx(2 * math.sqrt(SMALL_N_MAX))
    assert q.normalization() == pytest.approx(1.0, abs=1e-3)
    assert q.values.min() >= -1e-12


def test_prob_zero_pi_examples():
    assert prob_zero_pi(q_function(DensityMatrix.vacuum(20), resolution=101)) == pytest.approx(0.5, abs=1e-12)
    assert prob_zero_pi(q_function(DensityMatrix.coherent(40, -2.0))) < 0.003
    # marginal of exp(-|z - alpha|^2)/pi in q_x has variance 1/2; the half-plane
    # sum is a trapezoid rule with endpoint error h^2 f'(0)/12 ~ 6e-5
    exact = 1 - 0.5 * math.erfc(2.0)
    assert prob_zero_pi(q_function(DensityMatrix.coherent(40, 2.0))) == pytest.approx(exact, abs=1e-4)


def test_prob_zero_pi_coverage():
    with pytest.raises(CoverageError):
        prob_zero_pi(q_function(DensityMatrix.coherent(40, 3.0), extent=2.0, resolution=51))


def test_mirror_phases_sum_to_one(small_cfg, small_settings):
    for th in (0.3, 1.2, 2.0):
        p = lock_probability(small_cfg.replace(theta_s=th), small_settings)
        p_pi = lock_probability(small_cfg.replace(theta_s=th + math.pi), small_settings)
        assert p + p_pi == pytest.approx(1.0, abs=2e-3)


def test_bimodal_without_signal(small_settings):
    cfg = PploConfig(1.66, SMALL_GAMMA)
    rho = evolve(cfg, tau_end=20.0, n_max=SMALL_N_MAX)
    q = q_function(rho)
    peaks = q.peaks()
    assert len(peaks) == 2
    (x1, y1, _), (x2, y2, _) = peaks
    assert abs(x1 + x2) <= q.cell + 1e-12 and abs(y1 + y2) <= q.cell + 1e-12
    well = [fp.state for fp in fixed_points(cfg) if fp.stable][0]
    # peaks lie along the classical well axis
    cross = abs(x1 * well.q_y - y1 * well.q_x) / math.hypot(x1, y1) / math.sqrt(well.photon_number)
    assert cross < 0.1


def test_lock_follows_semiclassical_tilt(small_cfg, small_settings):
    assert lock_probability(small_cfg, small_settings) > 0.5
    assert lock_probability(small_cfg.replace(theta_s=3 * math.pi / 2), small_settings) < 0.5


def test_sweep_theta_and_result(tmp_path, small_cfg, small_settings):
    thetas = theta_grid(8)
    sweep = sweep_theta(small_cfg, thetas, small_settings, threads=2)
    serial = sweep_theta(small_cfg, thetas, small_settings, threads=1)
    assert np.array_equal(sweep.column("p_zero_pi"), serial.column("p_zero_pi"))
    path = sweep.write(tmp_path / "sweep.csv")
    assert path.read_text().splitlines()[0] == "theta_s,p_zero_pi"
    with pytest.raises(ValidationError):
        sweep_theta(small_cfg, [], small_settings)


def test_non_locking_error_trend(small_cfg, small_settings):
    res = non_locking_error(small_cfg, [0.0, 0.01, 0.1, 1.0], n_theta=8, settings=small_settings,
                            refine=False)
    err = res.column("non_locking_error")
    assert err[0] == pytest.approx(0.5)
    assert np.all(np.diff(err) <= 0)
    with pytest.raises(ValidationError):
        non_locking_error(small_cfg, [], settings=small_settings)


def test_modulation_refinement(small_cfg, small_settings):
    depth, sweep = modulation_depth(small_cfg, n_theta=6, settings=small_settings, refine=True,
                                    max_refinements=1)
    assert len(sweep.values) == 12
    assert np.all(np.diff(sweep.values) > 0)
    assert depth == pytest.approx(np.ptp(sweep.column("p_zero_pi")))


def test_coherent_amplitudes_large_n():
    amps = coherent_amplitudes(np.array([15.0]), 400)
    assert np.all(np.isfinite(amps))
    assert np.sum(np.abs(amps) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_qgrid_peaks_threshold():
    x = np.linspace(-1, 1, 5)
    v = np.zeros((5, 5))
    v[1, 1], v[3, 3] = 1.0, 0.01
    q = QGrid(x, x, v)
    assert len(q.peaks()) == 1 and len(q.peaks(rel_threshold=0.001)) == 2


def test_sweep_result_write(tmp_path):
    r = SweepResult("n_po", np.array([0.1, 0.2]), {"a": np.array([1.0, 2.0])})
    text = r.write(tmp_path / "r.csv").read_text()
    assert text == "n_po,a\n0.10000000000000001,1\n0.20000000000000001,2\n"
