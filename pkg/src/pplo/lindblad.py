"""Truncated-Fock master-equation simulation of the phase-locked oscillator.

The density matrix obeys, in dimensionless time tau = t kappa / 2,

    d rho / d tau = -i [H', rho] + 2 a rho a^dag - a^dag a rho - rho a^dag a

with H' = gamma' a^dag a^dag a a + (sqrt(p)/2)(a^2 + a^dag^2)
          + i (beta a^dag - beta^* a),    beta = sqrt(N) exp(-i theta_s).

The drive phase convention matches :mod:`pplo.semiclassical`: the mean field
of this equation is exactly the classical quadrature flow, so both layers
agree on which half-plane a given locking phase favours.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.special import gammaln

from . import _core
from .errors import CoverageError, TruncationError, ValidationError
from .io import write_table
from .semiclassical import PploConfig

log = logging.getLogger(__name__)

DEFAULT_N_MAX = 80
DEFAULT_TAU_END = 20.0
DEFAULT_DTAU = 1e-3
STATIONARY_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class FockOperators:
    n_max: int
    a: np.ndarray
    a_dag: np.ndarray
    a_dag_a: np.ndarray
    a2: np.ndarray
    a_dag2: np.ndarray
    kerr: np.ndarray  # a^dag a^dag a a


@lru_cache(maxsize=16)
def fock_operators(n_max: int) -> FockOperators:
    if n_max < 2:
        raise ValidationError("n_max must be >= 2")
    d = n_max + 1
    a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)
    a_dag = a.conj().T
    a2 = a @ a
    a_dag2 = a_dag @ a_dag
    ops = FockOperators(n_max=n_max, a=a, a_dag=a_dag, a_dag_a=a_dag @ a, a2=a2,
                        a_dag2=a_dag2, kerr=a_dag2 @ a2)
    for arr in (ops.a, ops.a_dag, ops.a_dag_a, ops.a2, ops.a_dag2, ops.kerr):
        arr.setflags(write=False)
    return ops


@dataclass
class EvolveInfo:
    tau: float
    n_steps: int
    residual: float  # ||d rho/d tau||_F / ||rho||_F at the end
    max_trace_error: float
    max_hermiticity_error: float
    min_eigenvalue: float
    max_edge_population: float
    richardson_error: float
    backend: str
    checkpoints: list = field(default_factory=list, repr=False)


@dataclass
class DensityMatrix:
    rho: np.ndarray
    info: EvolveInfo | None = field(default=None, repr=False)

    def __post_init__(self):
        self.rho = np.ascontiguousarray(self.rho, dtype=np.complex128)
        if self.rho.ndim != 2 or self.rho.shape[0] != self.rho.shape[1]:
            raise ValidationError(f"rho must be square, got shape {self.rho.shape}")

    @property
    def n_max(self) -> int:
        return self.rho.shape[0] - 1

    @classmethod
    def vacuum(cls, n_max: int) -> "DensityMatrix":
        return cls.fock(n_max, 0)

    @classmethod
    def fock(cls, n_max: int, k: int) -> "DensityMatrix":
        rho = np.zeros((n_max + 1, n_max + 1), dtype=complex)
        rho[k, k] = 1.0
        return cls(rho)

    @classmethod
    def coherent(cls, n_max: int, alpha: complex) -> "DensityMatrix":
        psi = coherent_amplitudes(np.array([alpha]), n_max)[0]
        psi /= np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    def trace_error(self) -> float:
        return abs(np.trace(self.rho) - 1.0)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))[0])

    def mean_photon_number(self) -> float:
        return float(np.real(np.sum(np.arange(self.n_max + 1) * np.diag(self.rho))))

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(op @ self.rho))

    def edge_population(self, levels: int = 2) -> float:
        """Weight in the top ``levels`` Fock states, a truncation indicator."""
        return float(np.real(np.diag(self.rho)[-levels:].sum()))


def build_hamiltonian(cfg: PploConfig, ops: FockOperators) -> np.ndarray:
    beta = cfg.drive
    return (cfg.gamma_prime * ops.kerr
            + 0.5 * cfg.sqrt_pump * (ops.a2 + ops.a_dag2)
            + 1j * (beta * ops.a_dag - np.conj(beta) * ops.a))


def lindblad_rhs(ops: FockOperators, h: np.ndarray, rho) -> np.ndarray:
    """Dense matrix form of the right-hand side, for any H and any rho."""
    r = rho.rho if isinstance(rho, DensityMatrix) else np.asarray(rho)
    comm = h @ r - r @ h
    n = ops.a_dag_a
    return -1j * comm + 2 * ops.a @ r @ ops.a_dag - n @ r - r @ n


def _backend(name):
    if name is None:
        return _core.kernels, _core.BACKEND
    return _core.load_backend(name), name


def stationarity_residual(cfg: PploConfig, rho: DensityMatrix, backend: str | None = None) -> float:
    kern, _ = _backend(backend)
    d = kern.lindblad_rhs(rho.rho, cfg.sqrt_pump, cfg.gamma_prime, cfg.drive)
    return float(np.linalg.norm(d) / np.linalg.norm(rho.rho))


def evolve(cfg: PploConfig, rho0: DensityMatrix | None = None, tau_end: float = DEFAULT_TAU_END,
           dtau: float = DEFAULT_DTAU, n_max: int = DEFAULT_N_MAX, *,
           checkpoint_every: int = 100, stop_when_stationary: bool = False,
           stationary_tol: float = STATIONARY_TOL, edge_tol: float = 1e-3,
           positivity_tol: float = 1e-6, backend: str | None = None) -> DensityMatrix:
    """Integrate the master equation with fixed-step RK4 from ``rho0`` (vacuum by default).

    Every ``checkpoint_every`` steps the state is checked for trace, Hermiticity,
    positivity and weight in the top two Fock levels, and a step-doubling
    (Richardson) estimate of the local error is taken. A negative eigenvalue
    below ``-positivity_tol`` or an edge population above ``edge_tol`` raises
    :class:`TruncationError`. The returned matrix carries an :class:`EvolveInfo`.
    """
    if rho0 is None:
        rho0 = DensityMatrix.vacuum(n_max)
    if rho0.n_max < 2:
        raise ValidationError("n_max must be >= 2")
    if not (tau_end > 0 and dtau > 0):
        raise ValidationError("tau_end and dtau must be positive")
    kern, backend_name = _backend(backend)
    n_steps = math.ceil(tau_end / dtau - 1e-9)
    h = tau_end / n_steps
    args = (cfg.sqrt_pump, cfg.gamma_prime, cfg.drive)
    rho = rho0.rho.copy()
    state = DensityMatrix(rho)
    worst = dict(trace=state.trace_error(), herm=state.hermiticity_error(),
                 eig=state.min_eigenvalue(), edge=state.edge_population(), rich=0.0)
    checkpoints = []
    done = 0
    residual = math.inf
    while done < n_steps:
        chunk = min(checkpoint_every, n_steps - done)
        # step-doubling estimate on a copy; RK4 local error ~ (full - half) * 16/15
        full = rho.copy()
        kern.rk4_steps(full, 1, h, *args)
        half = rho.copy()
        kern.rk4_steps(half, 2, 0.5 * h, *args)
        worst["rich"] = max(worst["rich"], float(np.max(np.abs(full - half))) * 16 / 15)

        kern.rk4_steps(rho, chunk, h, *args)
        done += chunk
        tau = done * h
        state = DensityMatrix(rho)
        eig = state.min_eigenvalue()
        edge = state.edge_population()
        tr, herm = state.trace_error(), state.hermiticity_error()
        worst["trace"] = max(worst["trace"], tr)
        worst["herm"] = max(worst["herm"], herm)
        worst["eig"] = min(worst["eig"], eig)
        worst["edge"] = max(worst["edge"], edge)
        if not np.all(np.isfinite(rho)):
            raise TruncationError(f"state became non-finite at tau = {tau:.4g}; "
                                  "reduce dtau or raise n_max")
        if eig < -positivity_tol:
            raise TruncationError(
                f"density matrix lost positivity (min eigenvalue {eig:.3g}) at tau = {tau:.4g}; "
                f"truncation n_max = {state.n_max} is too small or dtau too large")
        if edge > edge_tol:
            raise TruncationError(
                f"population {edge:.3g} in the top Fock levels at tau = {tau:.4g}; "
                f"truncation n_max = {state.n_max} is too small")
        residual = stationarity_residual(cfg, state, backend_name)
        checkpoints.append((tau, residual, state.mean_photon_number()))
        if stop_when_stationary and residual < stationary_tol:
            break
    if worst["rich"] > 1e-6:
        log.warning("RK4 local error estimate %.3g exceeds 1e-6; consider a smaller dtau",
                    worst["rich"])
    info = EvolveInfo(tau=done * h, n_steps=done, residual=residual,
                      max_trace_error=worst["trace"], max_hermiticity_error=worst["herm"],
                      min_eigenvalue=worst["eig"], max_edge_population=worst["edge"],
                      richardson_error=worst["rich"], backend=backend_name,
                      checkpoints=checkpoints)
    return DensityMatrix(rho, info=info)


def coherent_amplitudes(z: np.ndarray, n_max: int) -> np.ndarray:
    """<n|z> for every z and n <= n_max, accumulated in log space."""
    z = np.asarray(z, dtype=complex).ravel()
    n = np.arange(n_max + 1)
    r = np.abs(z)
    safe = np.where(r > 0, r, 1.0)
    log_mag = -0.5 * r[:, None] ** 2 + n[None, :] * np.log(safe)[:, None] - 0.5 * gammaln(n + 1)[None, :]
    out = np.exp(log_mag + 1j * n[None, :] * np.angle(z)[:, None])
    out[r == 0, 1:] = 0.0
    return out


@dataclass
class QGrid:
    """Husimi function sampled on a square grid; ``values[i, j]`` is at (q_x[i], q_y[j])."""

    q_x: np.ndarray
    q_y: np.ndarray
    values: np.ndarray

    @property
    def extent(self) -> float:
        return float(self.q_x[-1])

    @property
    def resolution(self) -> int:
        return len(self.q_x)

    @property
    def cell(self) -> float:
        return float(self.q_x[1] - self.q_x[0])

    def normalization(self) -> float:
        return float(self.values.sum() * self.cell**2)

    def peaks(self, rel_threshold: float = 0.05) -> list[tuple[float, float, float]]:
        """Local maxima (3x3 neighbourhood) above ``rel_threshold`` of the global max."""
        v = self.values
        mask = (v == maximum_filter(v, size=3, mode="nearest")) & (v > rel_threshold * v.max())
        idx = np.argwhere(mask)
        found = [(float(self.q_x[i]), float(self.q_y[j]), float(v[i, j])) for i, j in idx]
        return sorted(found, key=lambda p: -p[2])

    def write(self, path):
        qx, qy = np.meshgrid(self.q_x, self.q_y, indexing="ij")
        return write_table(path, ["q_x", "q_y", "Q"], [qx.ravel(), qy.ravel(), self.values.ravel()])


def q_function(rho: DensityMatrix, extent: float | None = None, resolution: int = 201) -> QGrid:
    """Q(z) = <z|rho|z>/pi on a grid with z = q_x - i q_y.

    ``extent`` defaults to 2 sqrt(n_max); odd ``resolution`` puts a node on q_x = 0.
    """
    if extent is None:
        extent = 2 * math.sqrt(rho.n_max)
    if resolution < 3:
        raise ValidationError("resolution must be >= 3")
    # integer multiples of the cell keep the grid exactly mirror-symmetric
    cell = 2 * extent / (resolution - 1)
    axis = (np.arange(resolution) - (resolution - 1) / 2) * cell
    qx, qy = np.meshgrid(axis, axis, indexing="ij")
    z = (qx - 1j * qy).ravel()
    values = np.empty(z.size)
    r = rho.rho
    chunk = 4096
    for start in range(0, z.size, chunk):
        c = coherent_amplitudes(z[start:start + chunk], rho.n_max)
        values[start:start + chunk] = np.real(np.einsum("im,im->i", c.conj(), c @ r.T))
    return QGrid(q_x=axis, q_y=axis.copy(), values=values.reshape(qx.shape) / math.pi)


def prob_zero_pi(q: QGrid, boundary_tol: float = 1e-8) -> float:
    """Share of the Q-function weight in the q_x > 0 half-plane.

    The q_x = 0 column counts half, so mirror-image states sum to exactly one.
    """
    v = q.values
    vmax = v.max()
    edge = max(v[0, :].max(), v[-1, :].max(), v[:, 0].max(), v[:, -1].max())
    if edge >= boundary_tol * vmax:
        raise CoverageError(f"Q grid too small: boundary value {edge:.3g} vs peak {vmax:.3g}")
    w = np.where(q.q_x > 0, 1.0, np.where(q.q_x == 0, 0.5, 0.0))
    return float((w[:, None] * v).sum() / v.sum())


@dataclass
class SweepResult:
    """Swept parameter values versus derived columns, plus run metadata."""

    parameter: str
    values: np.ndarray
    columns: dict
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def write(self, path):
        names = [self.parameter] + list(self.columns)
        return write_table(path, names, [self.values] + [self.columns[c] for c in self.columns])


def _map(fn, items, threads):
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SimSettings:
    """Numerical knobs shared by all lock-probability computations."""

    n_max: int = DEFAULT_N_MAX
    tau_end: float = DEFAULT_TAU_END
    dtau: float = DEFAULT_DTAU
    resolution: int = 201
    extent: float | None = None
    stop_when_stationary: bool = True
    backend: str | None = None


def lock_probability(cfg: PploConfig, settings: SimSettings = SimSettings()) -> float:
    """P(0pi) after evolving from vacuum to stationarity (or ``tau_end``)."""
    rho = evolve(cfg, None, settings.tau_end, settings.dtau, settings.n_max,
                 stop_when_stationary=settings.stop_when_stationary, backend=settings.backend)
    return prob_zero_pi(q_function(rho, settings.extent, settings.resolution))


def sweep_theta(cfg_base: PploConfig, thetas, settings: SimSettings = SimSettings(),
                threads: int | None = None) -> SweepResult:
    thetas = np.asarray(list(thetas), dtype=float)
    if thetas.size == 0:
        raise ValidationError("theta list is empty")
    probs = _map(lambda th: lock_probability(cfg_base.replace(theta_s=float(th)), settings),
                 thetas, threads)
    return SweepResult("theta_s", thetas, {"p_zero_pi": np.array(probs)},
                       meta={"n_po": cfg_base.n_po, "pump_ratio": cfg_base.pump_ratio,
                             "gamma_prime": cfg_base.gamma_prime})


def theta_grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 2 * math.pi, n, endpoint=False)


def modulation_depth(cfg_base: PploConfig, n_theta: int = 24, settings: SimSettings = SimSettings(),
                     refine: bool = True, refine_tol: float = 1e-3, max_refinements: int = 2,
                     threads: int | None = None) -> tuple[float, SweepResult]:
    """Peak-to-peak modulation of P(0pi) over theta, doubling the grid until it settles."""
    if cfg_base.n_po == 0:
        # H' does not depend on theta without a locking signal
        p = lock_probability(cfg_base, settings)
        thetas = theta_grid(n_theta)
        return 0.0, SweepResult("theta_s", thetas, {"p_zero_pi": np.full(n_theta, p)})
    sweep = sweep_theta(cfg_base, theta_grid(n_theta), settings, threads)
    depth = float(np.ptp(sweep.column("p_zero_pi")))
    n = n_theta
    for _ in range(max_refinements if refine else 0):
        mids = theta_grid(n) + math.pi / n
        extra = sweep_theta(cfg_base, mids, settings, threads)
        values = np.concatenate([sweep.values, extra.values])
        probs = np.concatenate([sweep.column("p_zero_pi"), extra.column("p_zero_pi")])
        order = np.argsort(values)
        sweep = SweepResult("theta_s", values[order], {"p_zero_pi": probs[order]}, sweep.meta)
        n *= 2
        new_depth = float(np.ptp(probs))
        converged = abs(new_depth - depth) < refine_tol
        depth = new_depth
        if converged:
            break
    return depth, sweep


def non_locking_error(cfg_base: PploConfig, n_po_values, n_theta: int = 24,
                      settings: SimSettings = SimSettings(), refine: bool = True,
                      threads: int | None = None) -> SweepResult:
    """(1 - Delta P_0pi)/2 for each locking-signal photon number."""
    n_po_values = np.asarray(list(n_po_values), dtype=float)
    if n_po_values.size == 0:
        raise ValidationError("n_po list is empty")
    depths, used = [], []
    for n_po in n_po_values:
        depth, sweep = modulation_depth(cfg_base.replace(n_po=float(n_po)), n_theta, settings,
                                        refine=refine, threads=threads)
        depths.append(depth)
        used.append(len(sweep.values))
    depths = np.array(depths)
    return SweepResult("n_po", n_po_values,
                       {"delta_p_zero_pi": depths, "non_locking_error": (1 - depths) / 2,
                        "n_theta": np.array(used)},
                       meta={"pump_ratio": cfg_base.pump_ratio, "gamma_prime": cfg_base.gamma_prime})
