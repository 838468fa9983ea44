"""Circuit model of the SQUID-terminated quarter-wave resonator.

Gives the flux-dependent fundamental frequency and the Kerr coefficient of the
first mode, plus a two-parameter fit of (I0, C_cav) to a measured flux curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import NoRootError, ValidationError
from .fitting import simplex_minimize
from .units import FLUX_QUANTUM, HBAR, loaded_q

_KD_LO = 1e-9
_KD_HI = math.pi / 2 - 1e-9
TWO_PI_OVER_PHI0 = 2 * math.pi / FLUX_QUANTUM


@dataclass(frozen=True)
class DeviceParams:
    """Lumped circuit constants, SI units throughout.

    ``mutual_inductance`` (pump line to SQUID loop) is carried as metadata only.
    """

    l_cav: float = 1.08e-9
    c_cav: float = 410e-15
    c_j: float = 50e-15
    c_in: float = 15e-15
    i0: float = 3.1e-6
    q_internal: float = 5200.0
    q_external: float = 340.0
    mutual_inductance: float = 1.0e-12

    def __post_init__(self):
        for name in ("l_cav", "c_cav", "c_j", "c_in", "i0", "q_internal", "q_external"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"DeviceParams.{name} must be positive, got {value!r}")
        if not (math.isfinite(self.mutual_inductance) and self.mutual_inductance >= 0):
            raise ValidationError("DeviceParams.mutual_inductance must be non-negative")

    @property
    def q_loaded(self) -> float:
        return loaded_q(self.q_internal, self.q_external)

    def kappa(self, omega0: float) -> float:
        """Total field decay rate omega0/Q_L (rad/s)."""
        return omega0 / self.q_loaded

    def kappa_external(self, omega0: float) -> float:
        return omega0 / self.q_external

    def kappa_internal(self, omega0: float) -> float:
        return omega0 / self.q_internal


@dataclass(frozen=True)
class FluxPoint:
    flux_ratio: float  # Phi_sq / Phi_0
    omega0: float  # rad/s


def _check_flux(flux_ratio):
    x = np.asarray(flux_ratio, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) >= 0.5):
        raise ValidationError(f"|flux_ratio| must be < 0.5, got {flux_ratio!r}")
    return x


def _kd_rhs(params: DeviceParams, x):
    return TWO_PI_OVER_PHI0 * params.l_cav * 2 * params.i0 * np.abs(np.cos(np.pi * x))


def _kd_residual(params: DeviceParams, kd, rhs):
    return kd * np.tan(kd) + (params.c_j / params.c_cav) * kd**2 - rhs


def _solve_kd_array(params: DeviceParams, x: np.ndarray) -> np.ndarray:
    """Vectorised bisection, run until the bracket stops shrinking."""
    rhs = _kd_rhs(params, x)
    lo = np.full_like(rhs, _KD_LO)
    hi = np.full_like(rhs, _KD_HI)
    f_lo = _kd_residual(params, lo, rhs)
    f_hi = _kd_residual(params, hi, rhs)
    if np.any(f_lo > 0) or np.any(f_hi < 0):
        raise NoRootError(
            "kd equation has no root in (0, pi/2); check I0, L_cav and the flux bias"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        below = _kd_residual(params, mid, rhs) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    f_lo = np.abs(_kd_residual(params, lo, rhs))
    f_hi = np.abs(_kd_residual(params, hi, rhs))
    return np.where(f_lo <= f_hi, lo, hi)


def solve_kd(params: DeviceParams, flux_ratio: float) -> float:
    """Smallest positive root of kd tan(kd) = (2pi/Phi0) L_cav 2 I0 |cos(pi x)| - (C_J/C_cav) kd^2."""
    x = _check_flux(flux_ratio)
    return float(_solve_kd_array(params, np.atleast_1d(x))[0])


def _mode_terms(params: DeviceParams, kd):
    sinc = np.sin(2 * kd) / (2 * kd)
    cos2 = np.cos(kd) ** 2
    c_k = 0.5 * params.c_cav * (1 + sinc) + params.c_j * cos2
    inv_l_k = kd**2 / (2 * params.l_cav) * (1 + sinc + 2 * params.c_j / params.c_cav * cos2)
    b_k = 0.25 * cos2 / (1 + 2 * kd / np.sin(2 * kd))
    return c_k, inv_l_k, b_k


def resonant_frequency(params: DeviceParams, flux_ratio):
    """Angular frequency of the first mode at flux bias ``flux_ratio`` = Phi/Phi0.

    Accepts a scalar or an array of flux ratios.
    """
    x = _check_flux(flux_ratio)
    kd = _solve_kd_array(params, np.atleast_1d(x))
    c_k, inv_l_k, _ = _mode_terms(params, kd)
    omega = np.sqrt(inv_l_k / (c_k + params.c_in))
    return float(omega[0]) if np.ndim(x) == 0 else omega.reshape(x.shape)


def kerr_coefficient(params: DeviceParams, flux_ratio):
    """Kerr coefficient gamma of the Hamiltonian term gamma (a + a^dag)^4.

    Returned in s^-1 (the coefficient of H/hbar); negative on the whole domain.
    """
    x = _check_flux(flux_ratio)
    kd = _solve_kd_array(params, np.atleast_1d(x))
    c_k, _, b_k = _mode_terms(params, kd)
    gamma = -(TWO_PI_OVER_PHI0**2) * HBAR * b_k / (8 * c_k)
    return float(gamma[0]) if np.ndim(x) == 0 else gamma.reshape(x.shape)


def flux_for_frequency(params: DeviceParams, omega_target: float, x_max: float = 0.499) -> float:
    """Non-negative flux ratio at which the resonator sits at ``omega_target``."""
    f0 = resonant_frequency(params, 0.0)
    f1 = resonant_frequency(params, x_max)
    if not f1 <= omega_target <= f0:
        raise NoRootError(
            f"target {omega_target / 2 / math.pi:.6g} Hz outside tuning range "
            f"[{f1 / 2 / math.pi:.6g}, {f0 / 2 / math.pi:.6g}] Hz"
        )
    return brentq(lambda x: resonant_frequency(params, x) - omega_target, 0.0, x_max, xtol=1e-15)


def pump_ratio_from_epsilon(epsilon: float, kappa: float, omega0: float) -> float:
    """P_p/P_p0 = (epsilon/epsilon_0)^2 with threshold epsilon_0 = kappa/(2 omega0)."""
    if not kappa > 0 or not omega0 > 0:
        raise ValidationError("kappa and omega0 must be positive")
    eps0 = kappa / (2 * omega0)
    return (epsilon / eps0) ** 2


@dataclass(frozen=True)
class OperatingPoint:
    flux_ratio: float
    omega0: float
    gamma: float
    kappa: float
    kappa_external: float

    @property
    def gamma_prime(self) -> float:
        return 12 * self.gamma / self.kappa


def operating_point(params: DeviceParams, flux_ratio: float) -> OperatingPoint:
    omega0 = resonant_frequency(params, flux_ratio)
    return OperatingPoint(
        flux_ratio=float(flux_ratio),
        omega0=omega0,
        gamma=kerr_coefficient(params, flux_ratio),
        kappa=params.kappa(omega0),
        kappa_external=params.kappa_external(omega0),
    )


@dataclass
class FluxFit:
    i0: float
    c_cav: float
    rms_residual: float  # rad/s
    n_iter: int
    n_points: int

    def params(self, base: DeviceParams) -> DeviceParams:
        return replace(base, i0=self.i0, c_cav=self.c_cav)


def fit_flux_curve(
    data,
    fixed: DeviceParams,
    initial: tuple[float, float] | None = None,
    flux_window: float = 0.32,
    max_iter: int = 500,
) -> FluxFit:
    """Fit (I0, C_cav) to flux-frequency points with |flux_ratio| <= ``flux_window``.

    L_cav, C_J and C_in are taken from ``fixed``; ``initial`` defaults to the
    values in ``fixed``. The simplex runs on log-parameters.
    """
    pts = [p for p in data if abs(p.flux_ratio) <= flux_window]
    if len(pts) < 3:
        raise ValidationError(
            f"need >= 3 flux points within |flux_ratio| <= {flux_window}, got {len(pts)}"
        )
    x = np.array([p.flux_ratio for p in pts])
    w = np.array([p.omega0 for p in pts])
    if initial is None:
        initial = (fixed.i0, fixed.c_cav)
    if min(initial) <= 0:
        raise ValidationError("initial guesses must be positive")
    scale = float(np.mean(w))

    def objective(logp):
        i0, c_cav = np.exp(logp)
        try:
            trial = replace(fixed, i0=i0, c_cav=c_cav)
            model = resonant_frequency(trial, x)
        except (NoRootError, ValidationError):
            return np.inf
        return float(np.sum(((model - w) / scale) ** 2))

    res = simplex_minimize(objective, np.log(initial), max_iter=max_iter, xtol=1e-10)
    i0, c_cav = np.exp(res.x)
    rms = scale * math.sqrt(res.fun / len(pts))
    return FluxFit(i0=float(i0), c_cav=float(c_cav), rms_residual=rms, n_iter=res.n_iter, n_points=len(pts))


def load_flux_data(path) -> list[FluxPoint]:
    """Read ``flux_ratio, frequency_Hz`` rows (comma or whitespace separated, ``#`` comments)."""
    points = []
    first = True
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        header_allowed, first = first, False
        fields = line.replace(",", " ").split()
        if len(fields) != 2:
            raise ValidationError(f"{path}:{lineno}: expected 2 columns, got {len(fields)}")
        try:
            flux, freq = float(fields[0]), float(fields[1])
        except ValueError:
            if header_allowed:
                continue  # header row
            raise ValidationError(f"{path}:{lineno}: non-numeric field") from None
        points.append(FluxPoint(flux_ratio=flux, omega0=2 * math.pi * freq))
    return points
