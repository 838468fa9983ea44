"""Rotating-frame quadrature dynamics of the pumped Kerr resonator.

Time is dimensionless, tau = t kappa / 2, so every rate below is in units of
kappa/2. The classical amplitude is <a> = q_x - i q_y and the "0pi" state is
the q_x > 0 half-plane.

Dimensionless quasi-potential, obtained by dividing the SI one by kappa/2::

    g'(q_x, q_y) = (sqrt(p)/2) (q_y^2 - q_x^2) - (gamma'/2) (q_x^2 + q_y^2)^2
                   + sqrt(N) (q_y cos(theta) - q_x sin(theta))

with p = P_p/P_p0 = (2 epsilon omega0 / kappa)^2, gamma' = 12 gamma / kappa and
sqrt(N) = sqrt(kappa_1) |E_s| / (kappa/2). The equations of motion are
dq_x/dtau = -q_x + dg'/dq_y and dq_y/dtau = -q_y - dg'/dq_x.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from ._core import kernels as _kernels
from .errors import DivergenceError, ValidationError

MAX_STEPS = 100_000_000


@dataclass(frozen=True)
class PploConfig:
    """Dimensionless operating point of the oscillator.

    ``kappa`` (rad/s) is only needed to convert tau back to seconds.
    """

    pump_ratio: float
    gamma_prime: float
    n_po: float = 0.0
    theta_s: float = 0.0
    kappa: float | None = None

    def __post_init__(self):
        for name in ("pump_ratio", "gamma_prime", "n_po", "theta_s"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValidationError(f"PploConfig.{name} must be a finite number, got {value!r}")
        if self.pump_ratio < 0:
            raise ValidationError("pump_ratio must be >= 0")
        if self.n_po < 0:
            raise ValidationError("n_po must be >= 0")
        if self.kappa is not None and not self.kappa > 0:
            raise ValidationError("kappa must be positive when given")
        if self.gamma_prime > 0:
            warnings.warn("gamma_prime > 0: Josephson resonators have a negative Kerr term",
                          stacklevel=3)

    @property
    def sqrt_pump(self) -> float:
        return math.sqrt(self.pump_ratio)

    @property
    def drive(self) -> complex:
        """Coherent drive on d<a>/dtau: sqrt(N) exp(-i theta)."""
        return math.sqrt(self.n_po) * complex(math.cos(self.theta_s), -math.sin(self.theta_s))

    @property
    def above_threshold(self) -> bool:
        return self.pump_ratio > 1.0

    def replace(self, **changes) -> "PploConfig":
        return replace(self, **changes)

    def to_seconds(self, tau: float) -> float:
        if self.kappa is None:
            raise ValidationError("kappa is required to convert tau to seconds")
        return 2.0 * tau / self.kappa

    @classmethod
    def from_device(cls, params, flux_ratio: float, pump_ratio: float,
                    n_po: float = 0.0, theta_s: float = 0.0) -> "PploConfig":
        from .device import operating_point

        op = operating_point(params, flux_ratio)
        return cls(pump_ratio=pump_ratio, gamma_prime=op.gamma_prime, n_po=n_po,
                   theta_s=theta_s, kappa=op.kappa)


@dataclass(frozen=True)
class QuadratureState:
    q_x: float
    q_y: float

    @property
    def amplitude(self) -> complex:
        return complex(self.q_x, -self.q_y)

    @property
    def photon_number(self) -> float:
        return self.q_x**2 + self.q_y**2

    def __neg__(self):
        return QuadratureState(-self.q_x, -self.q_y)

    @classmethod
    def from_amplitude(cls, alpha: complex) -> "QuadratureState":
        return cls(alpha.real, -alpha.imag)


class Basin(enum.Enum):
    ZERO_PI = "0pi"
    ONE_PI = "1pi"

    def flipped(self) -> "Basin":
        return Basin.ONE_PI if self is Basin.ZERO_PI else Basin.ZERO_PI


@dataclass(frozen=True)
class FixedPoint:
    state: QuadratureState
    stable: bool
    eigenvalues: tuple

    @property
    def stability(self) -> str:
        return "stable" if self.stable else "unstable"


def quasi_potential(cfg: PploConfig, s: QuadratureState) -> float:
    x, y = s.q_x, s.q_y
    r2 = x * x + y * y
    sn = math.sqrt(cfg.n_po)
    return (0.5 * cfg.sqrt_pump * (y * y - x * x)
            - 0.5 * cfg.gamma_prime * r2 * r2
            + sn * (y * math.cos(cfg.theta_s) - x * math.sin(cfg.theta_s)))


def quasi_potential_si(q_x, q_y, *, epsilon, omega0, gamma, kappa_external, e_s, theta_s):
    """Quasi-potential in rad/s, before rescaling time by kappa/2.

    ``e_s`` is the locking-signal amplitude |E_s| = sqrt(P_s / (hbar omega0)).
    """
    r2 = q_x**2 + q_y**2
    return (0.5 * epsilon * omega0 * (q_y**2 - q_x**2) - 3 * gamma * r2**2
            + math.sqrt(kappa_external) * e_s * (q_y * np.cos(theta_s) - q_x * np.sin(theta_s)))


def potential_gradient(cfg: PploConfig, s: QuadratureState) -> tuple[float, float]:
    """(dg'/dq_x, dg'/dq_y), analytic."""
    x, y = s.q_x, s.q_y
    r2 = x * x + y * y
    sn = math.sqrt(cfg.n_po)
    gx = -cfg.sqrt_pump * x - 2 * cfg.gamma_prime * r2 * x - sn * math.sin(cfg.theta_s)
    gy = cfg.sqrt_pump * y - 2 * cfg.gamma_prime * r2 * y + sn * math.cos(cfg.theta_s)
    return gx, gy


def eom_rhs(cfg: PploConfig, s: QuadratureState) -> tuple[float, float]:
    gx, gy = potential_gradient(cfg, s)
    return -s.q_x + gy, -s.q_y - gx


def jacobian(cfg: PploConfig, s: QuadratureState) -> np.ndarray:
    x, y = s.q_x, s.q_y
    k = cfg.gamma_prime
    r2 = x * x + y * y
    sp = cfg.sqrt_pump
    return np.array([
        [-1 - 4 * k * x * y, sp - 2 * k * (r2 + 2 * y * y)],
        [sp + 2 * k * (r2 + 2 * x * x), -1 + 4 * k * x * y],
    ])


def _forcing(cfg: PploConfig):
    sn = math.sqrt(cfg.n_po)
    return sn * math.cos(cfg.theta_s), sn * math.sin(cfg.theta_s)


def _n_steps(tau: float, dtau: float) -> int:
    if not (tau > 0 and dtau > 0):
        raise ValidationError("tau_end and dtau must be positive")
    n = math.ceil(tau / dtau - 1e-9)
    if n > MAX_STEPS:
        raise ValidationError(f"{n} integration steps requested; limit is {MAX_STEPS}")
    return n


def integrate_trajectory(cfg: PploConfig, s0: QuadratureState, tau_end: float,
                         dtau: float = 1e-3, sample_every: int = 1):
    """Fixed-step RK4 trajectory, returned as ``[(tau, QuadratureState), ...]``.

    The step is shrunk slightly if needed so that ``tau_end`` is hit exactly;
    both endpoints are always included.
    """
    n = _n_steps(tau_end, dtau)
    h = tau_end / n
    fx, fy = _forcing(cfg)
    x, y = float(s0.q_x), float(s0.q_y)
    out = [(0.0, QuadratureState(x, y))]
    done = 0
    while done < n:
        chunk = min(sample_every, n - done)
        x, y = _kernels.rk4_quadrature(x, y, chunk, h, cfg.sqrt_pump, cfg.gamma_prime, fx, fy)
        done += chunk
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DivergenceError(f"trajectory blew up at tau = {done * h:.6g}")
        out.append((done * h, QuadratureState(x, y)))
    return out


def _analytic_fixed_points(cfg: PploConfig):
    origin = QuadratureState(0.0, 0.0)
    if not cfg.above_threshold or cfg.gamma_prime == 0:
        return [origin]
    root = math.sqrt(cfg.pump_ratio - 1)
    n = root / (2 * abs(cfg.gamma_prime))
    # a (1 + 2i gamma' n) = -i sqrt(p) a*  =>  exp(2i phi) = -i sqrt(p) / (1 + 2i gamma' n)
    two_phi = -math.pi / 2 - math.atan2(2 * cfg.gamma_prime * n, 1.0)
    alpha = math.sqrt(n) * complex(math.cos(two_phi / 2), math.sin(two_phi / 2))
    s = QuadratureState.from_amplitude(alpha)
    return [origin, s, -s]


def _newton(cfg: PploConfig, s: QuadratureState, tol: float = 1e-13, max_iter: int = 100):
    v = np.array([s.q_x, s.q_y])
    f = np.array(eom_rhs(cfg, QuadratureState(*v)))
    for _ in range(max_iter):
        norm = np.linalg.norm(f)
        if norm < tol:
            return QuadratureState(float(v[0]), float(v[1]))
        try:
            step = np.linalg.solve(jacobian(cfg, QuadratureState(*v)), -f)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while lam > 1e-6:
            trial = v + lam * step
            f_trial = np.array(eom_rhs(cfg, QuadratureState(*trial)))
            if np.linalg.norm(f_trial) < norm:
                break
            lam *= 0.5
        else:
            return None
        v, f = trial, f_trial
    return QuadratureState(float(v[0]), float(v[1])) if np.linalg.norm(f) < 1e-9 else None


def _classify(cfg: PploConfig, s: QuadratureState) -> FixedPoint:
    eig = np.linalg.eigvals(jacobian(cfg, s))
    stable = bool(np.all(eig.real < 0))
    if not cfg.above_threshold and s.photon_number == 0 and cfg.n_po == 0:
        stable = True  # pump_ratio == 1 counts as below threshold
    return FixedPoint(state=s, stable=stable, eigenvalues=tuple(complex(e) for e in eig))


def fixed_points(cfg: PploConfig) -> list[FixedPoint]:
    """Stationary points of the quadrature flow with their linear stability.

    Without a locking signal the points are known in closed form; otherwise a
    damped Newton iteration is started from a polar grid of seeds.
    """
    if cfg.n_po == 0:
        return [_classify(cfg, s) for s in _analytic_fixed_points(cfg)]

    if cfg.gamma_prime != 0:
        r_scale = math.sqrt((cfg.sqrt_pump + 1 + math.sqrt(cfg.n_po)) / (2 * abs(cfg.gamma_prime)))
    else:
        r_scale = 4 * math.sqrt(cfg.n_po) + 1
    seeds = list(_analytic_fixed_points(cfg))
    for r in r_scale * np.array([0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5]):
        for phi in np.linspace(0, 2 * math.pi, 16, endpoint=False):
            seeds.append(QuadratureState(r * math.cos(phi), r * math.sin(phi)))
    found: list[QuadratureState] = []
    for seed in seeds:
        s = _newton(cfg, seed)
        if s is None:
            continue
        if any(math.hypot(s.q_x - t.q_x, s.q_y - t.q_y) < 1e-6 * (1 + r_scale) for t in found):
            continue
        found.append(s)
    found.sort(key=lambda s: (s.q_x, s.q_y))
    return [_classify(cfg, s) for s in found]


def classify_basin(cfg: PploConfig, s0: QuadratureState | None = None, dtau: float = 1e-2,
                   tau_max: float = 1000.0, tol: float = 1e-9) -> Basin:
    """Integrate until the flow settles and report which half-plane it ends in."""
    if not cfg.above_threshold:
        raise ValidationError("basin classification needs pump_ratio > 1")
    s = s0 if s0 is not None else QuadratureState(0.0, 0.0)
    fx, fy = _forcing(cfg)
    x, y = float(s.q_x), float(s.q_y)
    tau = 0.0
    chunk = 100
    while True:
        if math.hypot(*eom_rhs(cfg, QuadratureState(x, y))) < tol:
            return Basin.ZERO_PI if x > 0 else Basin.ONE_PI
        if tau >= tau_max:
            raise DivergenceError(f"flow did not settle by tau = {tau_max}")
        x, y = _kernels.rk4_quadrature(x, y, chunk, dtau, cfg.sqrt_pump, cfg.gamma_prime, fx, fy)
        tau += chunk * dtau
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DivergenceError("trajectory blew up")


def initial_state(noise_std: float = 0.0, rng: np.random.Generator | None = None) -> QuadratureState:
    """Origin, optionally with isotropic Gaussian jitter."""
    if noise_std == 0:
        return QuadratureState(0.0, 0.0)
    if rng is None:
        raise ValidationError("an explicit rng is required for a noisy initial state")
    dx, dy = rng.normal(0.0, noise_std, size=2)
    return QuadratureState(float(dx), float(dy))


def write_trajectory(path, trajectory):
    """Write ``[(tau, QuadratureState), ...]`` as a tau, q_x, q_y table."""
    from .io import write_table

    taus = [t for t, _ in trajectory]
    return write_table(path, ["tau", "q_x", "q_y"],
                       [taus, [s.q_x for _, s in trajectory], [s.q_y for _, s in trajectory]])
