"""The three experiments built on the dynamics layers.

* phase-locking statistics live in :mod:`pplo.lindblad` (sweeps over theta_s / N);
* BPSK demodulation: a Monte-Carlo of per-bit latch errors;
* dispersive qubit readout: the qubit state sets the phase of the reflected
  readout tone, which the oscillator then latches onto.

Also holds the exponential fits used for the T1 and rise-time analyses.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateFitError, NoRootError, ValidationError
from .fitting import simplex_minimize
from .lindblad import SimSettings, SweepResult, _map, lock_probability
from .semiclassical import PploConfig
from .units import loaded_q

BPSK_CHUNK = 4096


@dataclass(frozen=True)
class ReadoutResonator:
    """Readout resonator probed in reflection.

    ``chi`` is half the dispersive pull: the resonance sits at omega0 + chi with
    the qubit in |0> and at omega0 - chi with the qubit in |1>.
    """

    omega0: float = 2 * math.pi * 10.193e9
    q_internal: float = 2.5e4
    q_external: float = 630.0
    chi: float = 0.0

    def __post_init__(self):
        for name in ("omega0", "q_internal", "q_external"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"ReadoutResonator.{name} must be positive")
        if not math.isfinite(self.chi):
            raise ValidationError("chi must be finite")

    @property
    def q_loaded(self) -> float:
        return loaded_q(self.q_internal, self.q_external)

    @property
    def kappa(self) -> float:
        return self.omega0 / self.q_loaded

    @property
    def kappa_external(self) -> float:
        return self.omega0 / self.q_external

    @property
    def kappa_internal(self) -> float:
        return self.omega0 / self.q_internal


@dataclass(frozen=True)
class QubitModel:
    """Two-level qubit reduced to its readout error budget.

    ``init_error`` is the contrast lost to residual excitation: the qubit starts
    in |1> with probability ``init_error / 2``, which contaminates both readout
    curves. Relaxation during the wait ``t_wait`` removes a further fraction
    1 - exp(-t_wait / t1) of the excited population.
    """

    t1: float = 690e-9
    init_error: float = 0.0

    def __post_init__(self):
        if not self.t1 > 0:
            raise ValidationError("t1 must be positive")
        if not 0 <= self.init_error <= 1:
            raise ValidationError("init_error must lie in [0, 1]")

    @property
    def excited_fraction(self) -> float:
        return 0.5 * self.init_error

    def relaxation_loss(self, t_wait: float) -> float:
        if t_wait < 0:
            raise ValidationError("t_wait must be >= 0")
        return 1.0 - math.exp(-t_wait / self.t1)

    @staticmethod
    def wait_for_loss(t1: float, loss: float) -> float:
        """Wait time giving relaxation loss ``loss`` for a given T1."""
        return -t1 * math.log1p(-loss)


def reflection_coefficient(res: ReadoutResonator, omega: float, qubit_state: int) -> complex:
    """Gamma = 1 - kappa_1 / (kappa/2 + i Delta), Delta = omega - (omega0 +/- chi)."""
    if not omega > 0:
        raise ValidationError("omega must be positive")
    if qubit_state not in (0, 1):
        raise ValidationError("qubit_state must be 0 or 1")
    center = res.omega0 + (res.chi if qubit_state == 0 else -res.chi)
    delta = omega - center
    return 1.0 - res.kappa_external / (0.5 * res.kappa + 1j * delta)


def phase_contrast(res: ReadoutResonator, omega: float) -> float:
    """arg Gamma(|0>) - arg Gamma(|1>), wrapped to (-pi, pi]."""
    g0 = reflection_coefficient(res, omega, 0)
    g1 = reflection_coefficient(res, omega, 1)
    return float(np.angle(g0 * np.conj(g1)))


def solve_chi_for_pi_contrast(res: ReadoutResonator, omega_s: float | None = None) -> float:
    """Smallest chi > 0 for which the two qubit states reflect with opposite phase at ``omega_s``."""
    omega_s = res.omega0 if omega_s is None else omega_s
    kappa = res.kappa

    def cross(chi):
        r = ReadoutResonator(res.omega0, res.q_internal, res.q_external, chi)
        return reflection_coefficient(r, omega_s, 0) * np.conj(reflection_coefficient(r, omega_s, 1))

    grid = kappa * np.logspace(-4, 2, 2000)
    vals = np.array([cross(c) for c in grid])
    for i in range(len(grid) - 1):
        if np.sign(vals[i].imag) != np.sign(vals[i + 1].imag) and vals[i].real < 0 and vals[i + 1].real < 0:
            return brentq(lambda c: cross(c).imag, grid[i], grid[i + 1], xtol=1e-12 * kappa)
        if vals[i].imag == 0 and vals[i].real < 0:
            return float(grid[i])
    raise NoRootError("no dispersive shift gives pi phase contrast (resonator under-coupled?)")


def apply_readout_budget(p_ground, p_excited, qubit: QubitModel, t_wait: float = 0.0):
    """Mix ideal per-state P(0pi) curves into the pi-pulse-off / pi-pulse-on curves."""
    survive = 1.0 - qubit.relaxation_loss(t_wait)
    w = qubit.excited_fraction
    e_off = w * survive
    e_on = (1.0 - w) * survive
    p_ground = np.asarray(p_ground)
    p_excited = np.asarray(p_excited)
    p_off = (1 - e_off) * p_ground + e_off * p_excited
    p_on = (1 - e_on) * p_ground + e_on * p_excited
    return p_off, p_on


def readout_fidelity(res: ReadoutResonator, qubit: QubitModel, cfg: PploConfig, theta_grid,
                     *, omega_s: float | None = None, t_wait: float = 0.0,
                     scale_power: bool = True, settings: SimSettings = SimSettings(),
                     threads: int | None = None) -> SweepResult:
    """Lock probability versus readout phase with the pi pulse off and on.

    For each qubit state the oscillator sees the locking signal with phase
    theta_s + arg Gamma(state) and, if ``scale_power``, photon number
    cfg.n_po |Gamma(state)|^2. The fidelity is max over theta of |P_on - P_off|.
    """
    if not cfg.above_threshold:
        raise ValidationError("readout needs the pump above threshold")
    thetas = np.asarray(list(theta_grid), dtype=float)
    if thetas.size == 0:
        raise ValidationError("theta grid is empty")
    omega_s = res.omega0 if omega_s is None else omega_s
    gammas = [reflection_coefficient(res, omega_s, s) for s in (0, 1)]
    if res.chi == 0:
        warnings.warn("chi = 0: both qubit states reflect identically, fidelity is zero",
                      stacklevel=2)

    jobs = {}
    for g in gammas:
        n_eff = cfg.n_po * abs(g) ** 2 if scale_power else cfg.n_po
        for th in thetas:
            eff = float(np.mod(th + np.angle(g), 2 * math.pi))
            jobs.setdefault((round(eff, 12), round(n_eff, 12)), (eff, n_eff))
    keys = list(jobs)
    probs = _map(lambda k: lock_probability(cfg.replace(theta_s=jobs[k][0], n_po=jobs[k][1]), settings),
                 keys, threads)
    table = dict(zip(keys, probs))

    curves = []
    for g in gammas:
        n_eff = cfg.n_po * abs(g) ** 2 if scale_power else cfg.n_po
        curves.append(np.array([
            table[(round(float(np.mod(th + np.angle(g), 2 * math.pi)), 12), round(n_eff, 12))]
            for th in thetas]))
    p_ground, p_excited = curves
    p_off, p_on = apply_readout_budget(p_ground, p_excited, qubit, t_wait)
    diff = np.abs(p_on - p_off)
    ideal = np.abs(p_excited - p_ground)
    best = int(np.argmax(diff))
    return SweepResult(
        "theta_s", thetas,
        {"p_ground": p_ground, "p_excited": p_excited, "p_pi_off": p_off, "p_pi_on": p_on},
        meta={
            "fidelity": float(diff[best]),
            "fidelity_ideal": float(ideal.max()),
            "best_theta": float(thetas[best]),
            "phase_ground": float(np.angle(gammas[0])),
            "phase_excited": float(np.angle(gammas[1])),
            "phase_contrast": phase_contrast(res, omega_s),
            "relaxation_loss": qubit.relaxation_loss(t_wait),
            "init_error": qubit.init_error,
        },
    )


@dataclass(frozen=True)
class BpskConfig:
    n_bits: int = 24_000
    bit_period: float = 500e-9
    flip_probability: float = 1.7e-4
    rng_seed: int = 0
    pattern: str = "alternating"

    def __post_init__(self):
        if int(self.n_bits) != self.n_bits or self.n_bits < 1:
            raise ValidationError("n_bits must be a positive integer")
        if not 0 <= self.flip_probability <= 0.5:
            raise ValidationError("flip_probability must lie in [0, 0.5]")
        if not self.bit_period > 0:
            raise ValidationError("bit_period must be positive")
        if self.pattern not in ("alternating", "random"):
            raise ValidationError("pattern must be 'alternating' or 'random'")
        if not 0 <= self.rng_seed < 2**64:
            raise ValidationError("rng_seed must be an unsigned 64-bit integer")


@dataclass
class BpskResult:
    bitstream: np.ndarray
    decoded: np.ndarray
    n_errors: int
    error_rate: float
    seed: int = field(default=0)


def _chunk_rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream, chunk))))


def simulate_bpsk(cfg: BpskConfig) -> BpskResult:
    """Latch each bit with probability 1 - flip_probability of being right.

    Random numbers come from independent streams per 4096-bit chunk, so the
    outcome depends only on the seed.
    """
    n = int(cfg.n_bits)
    if cfg.pattern == "alternating":
        bits = (np.arange(n) % 2).astype(np.uint8)
    else:
        bits = np.concatenate([
            _chunk_rng(cfg.rng_seed, 1, c).integers(0, 2, size=min(BPSK_CHUNK, n - start), dtype=np.uint8)
            for c, start in enumerate(range(0, n, BPSK_CHUNK))])
    flips = np.concatenate([
        _chunk_rng(cfg.rng_seed, 0, c).random(min(BPSK_CHUNK, n - start)) < cfg.flip_probability
        for c, start in enumerate(range(0, n, BPSK_CHUNK))])
    decoded = bits ^ flips.astype(np.uint8)
    n_err = int(np.count_nonzero(flips))
    return BpskResult(bits, decoded, n_err, n_err / n, seed=cfg.rng_seed)


def bpsk_error_counts(cfg: BpskConfig, seeds, threads: int | None = None) -> np.ndarray:
    from dataclasses import replace

    return np.array(_map(lambda s: simulate_bpsk(replace(cfg, rng_seed=int(s))).n_errors,
                         list(seeds), threads))


def flip_probability_from_lock(cfg: PploConfig, settings: SimSettings = SimSettings()) -> float:
    """Per-bit error when the oscillator reads a BPSK tone at phase ``cfg.theta_s`` / +pi."""
    p = lock_probability(cfg, settings)
    return min(p, 1.0 - p)


@dataclass
class ExpFit:
    model: str
    params: dict
    rms_residual: float
    n_iter: int


def _decay_model(t, a, tau, b):
    return a * np.exp(-t / tau) + b


def _rise_model(t, a, tau, phi0, omega_if, t0):
    return a * (1 - np.exp(-(t - t0) / tau)) * np.cos(omega_if * t + phi0)


def fit_exponential(t, y, model: str = "decay", *, omega_if: float | None = None,
                    t0: float = 0.0, max_iter: int = 2000) -> ExpFit:
    """Least-squares fit of ``decay`` (A exp(-t/tau) + B) or ``rise_cos``
    (A (1 - exp(-(t - t0)/tau)) cos(omega_if t + phi0), fitted for t > t0).

    A coarse scan over tau with the linear parameters solved exactly provides
    the starting point; the simplex then polishes all parameters together.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValidationError("t and y must be 1-D arrays of equal length")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("t must be strictly increasing")
    if model == "decay":
        if t.size < 4:
            raise ValidationError("decay fit needs >= 4 points")
    elif model == "rise_cos":
        if omega_if is None:
            raise ValidationError("rise_cos fit needs omega_if")
        keep = t > t0
        t, y = t[keep], y[keep]
        if t.size < 8:
            raise ValidationError("rise_cos fit needs >= 8 points after t0")
    else:
        raise ValidationError(f"unknown model {model!r}")

    scale = float(np.max(np.abs(y)))
    if scale == 0 or np.ptp(y) <= 1e-12 * scale:
        raise DegenerateFitError("data are constant; the time constant is not identifiable")
    span = t[-1] - t[0]
    dt_min = float(np.min(np.diff(t)))
    taus = np.geomspace(dt_min / 4, 20 * span, 400)

    if model == "decay":
        def linear(tau):
            basis = np.column_stack([np.exp(-t / tau), np.ones_like(t)])
            coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
            return coef, float(np.sum((basis @ coef - y) ** 2))

        best = min(taus, key=lambda tau: linear(tau)[1])
        (a, b), _ = linear(best)
        t_ref = t[0]  # anchor amplitudes at the first sample for conditioning

        def objective(v):
            tau = math.exp(v[0])
            return float(np.sum((_decay_model(t - t_ref, v[1] * scale, tau, v[2] * scale) - y) ** 2)) / scale**2

        x0 = [math.log(best), a * math.exp(-t_ref / best) / scale, b / scale]
        res = simplex_minimize(objective, x0, max_iter=max_iter, xtol=1e-11, restarts=3)
        tau = math.exp(res.x[0])
        a_fit = res.x[1] * scale * math.exp(t_ref / tau)
        b_fit = res.x[2] * scale
        if abs(res.x[1]) < 1e-9 or tau > 1e3 * span:
            raise DegenerateFitError("decay amplitude vanishes; the time constant is not identifiable")
        params = {"amplitude": a_fit, "tau": tau, "offset": b_fit}
        resid = _decay_model(t, a_fit, tau, b_fit) - y
    else:
        def linear(tau):
            env = 1 - np.exp(-(t - t0) / tau)
            basis = np.column_stack([env * np.cos(omega_if * t), -env * np.sin(omega_if * t)])
            coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
            return coef, float(np.sum((basis @ coef - y) ** 2))

        best = min(taus, key=lambda tau: linear(tau)[1])
        (c1, c2), _ = linear(best)

        def objective(v):
            return float(np.sum((_rise_model(t, v[1] * scale, math.exp(v[0]), v[2], omega_if, t0) - y) ** 2)) / scale**2

        x0 = [math.log(best), math.hypot(c1, c2) / scale, math.atan2(c2, c1)]
        res = simplex_minimize(objective, x0, max_iter=max_iter, xtol=1e-11, restarts=3)
        a_fit = res.x[1] * scale
        phi0 = res.x[2]
        if a_fit < 0:
            a_fit, phi0 = -a_fit, phi0 + math.pi
        phi0 = (phi0 + math.pi) % (2 * math.pi) - math.pi
        tau = math.exp(res.x[0])
        params = {"amplitude": a_fit, "tau": tau, "phi0": phi0, "omega_if": omega_if, "t0": t0}
        resid = _rise_model(t, a_fit, tau, phi0, omega_if, t0) - y
    return ExpFit(model=model, params=params, rms_residual=float(np.sqrt(np.mean(resid**2))),
                  n_iter=res.n_iter)
