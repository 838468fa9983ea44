"""Pure numpy versions of the compiled kernels (same signatures, same results)."""
import numpy as np


def _tables(d, sqrt_pump, kerr):
    k = np.arange(d, dtype=np.float64)
    sq = np.sqrt(k)
    c2 = np.zeros(d)
    c2[2:] = 0.5 * sqrt_pump * np.sqrt(k[2:] * (k[2:] - 1))
    diag = kerr * k * (k - 1)
    return sq, c2, diag


def _rhs(rho, sq, c2, diag, beta):
    d = rho.shape[0]
    k = np.arange(d)
    ham = (diag[:, None] - diag[None, :]) * rho
    ham[2:, :] += c2[2:, None] * rho[:-2, :]
    ham[:-2, :] += c2[2:, None] * rho[2:, :]
    ham[:, 2:] -= c2[None, 2:] * rho[:, :-2]
    ham[:, :-2] -= c2[None, 2:] * rho[:, 2:]
    out = -1j * ham
    bc = np.conj(beta)
    out[1:, :] += beta * sq[1:, None] * rho[:-1, :]
    out[:-1, :] -= bc * sq[1:, None] * rho[1:, :]
    out[:, 1:] += bc * sq[None, 1:] * rho[:, :-1]
    out[:, :-1] -= beta * sq[None, 1:] * rho[:, 1:]
    out[:-1, :-1] += 2.0 * np.outer(sq[1:], sq[1:]) * rho[1:, 1:]
    out -= (k[:, None] + k[None, :]) * rho
    return out


def lindblad_rhs(rho, sqrt_pump, kerr, beta):
    rho = np.asarray(rho, dtype=np.complex128)
    sq, c2, diag = _tables(rho.shape[0], sqrt_pump, kerr)
    return _rhs(rho, sq, c2, diag, complex(beta))


def rk4_steps(rho, n_steps, dtau, sqrt_pump, kerr, beta):
    sq, c2, diag = _tables(rho.shape[0], sqrt_pump, kerr)
    beta = complex(beta)
    r = np.array(rho, dtype=np.complex128)
    for _ in range(n_steps):
        k1 = _rhs(r, sq, c2, diag, beta)
        k2 = _rhs(r + 0.5 * dtau * k1, sq, c2, diag, beta)
        k3 = _rhs(r + 0.5 * dtau * k2, sq, c2, diag, beta)
        k4 = _rhs(r + dtau * k3, sq, c2, diag, beta)
        r = r + dtau / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        r = 0.5 * (r + r.conj().T)
        r /= np.trace(r).real
    rho[...] = r


def _quad_rhs(x, y, sqrt_pump, kerr, fx, fy):
    r2 = x * x + y * y
    return (-x + sqrt_pump * y - 2.0 * kerr * r2 * y + fx,
            -y + sqrt_pump * x + 2.0 * kerr * r2 * x + fy)


def rk4_quadrature(x, y, n_steps, dtau, sqrt_pump, kerr, fx, fy):
    h2 = 0.5 * dtau
    for _ in range(n_steps):
        ax, ay = _quad_rhs(x, y, sqrt_pump, kerr, fx, fy)
        bx, by = _quad_rhs(x + h2 * ax, y + h2 * ay, sqrt_pump, kerr, fx, fy)
        cx, cy = _quad_rhs(x + h2 * bx, y + h2 * by, sqrt_pump, kerr, fx, fy)
        ex, ey = _quad_rhs(x + dtau * cx, y + dtau * cy, sqrt_pump, kerr, fx, fy)
        x = x + dtau / 6.0 * (ax + 2 * bx + 2 * cx + ex)
        y = y + dtau / 6.0 * (ay + 2 * by + 2 * cy + ey)
    return x, y
