# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the rotating-frame master equation and quadrature flow.

The master-equation right-hand side is evaluated element by element in the
Fock basis: each rho[m, n] couples to at most ten neighbours, so one call costs
O(d^2) instead of the O(d^3) of dense matrix products. The state is kept
zero-padded by two rows/columns on every side so the inner loop has no
boundary branches. Only the upper triangle is computed and the lower triangle
is filled with its conjugate, which is exact for Hermitian input.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef double complex cplx


cdef class _Tables:
    # column coefficients, indexed by the unpadded column n
    cdef public object sq, c2, e, g2m, g2p, g1m, g1p, gd

    def __init__(self, Py_ssize_t d, double sqrt_pump, double kerr, cplx beta):
        k = np.arange(d + 2, dtype=np.float64)
        self.sq = np.sqrt(k)
        self.c2 = np.zeros(d + 2)
        self.c2[2:] = 0.5 * sqrt_pump * np.sqrt(k[2:] * (k[2:] - 1))
        n = np.arange(d)
        self.e = (1j * kerr * n * (n - 1) - n).astype(np.complex128)
        self.g2m = (1j * self.c2[n]).astype(np.complex128)
        self.g2p = (1j * self.c2[n + 2]).astype(np.complex128)
        self.g1m = (np.conj(beta) * self.sq[n]).astype(np.complex128)
        self.g1p = (-beta * self.sq[n + 1]).astype(np.complex128)
        self.gd = self.sq[n + 1].astype(np.complex128)


cdef void _rhs_upper(const cplx[:, ::1] p, cplx[:, ::1] out,
                     const double[::1] sq, const double[::1] c2, double kerr,
                     const cplx[::1] e, const cplx[::1] g2m, const cplx[::1] g2p,
                     const cplx[::1] g1m, const cplx[::1] g1p, const cplx[::1] gd,
                     cplx beta) noexcept nogil:
    # p: padded Hermitian state; out: d x d derivative
    cdef Py_ssize_t d = out.shape[0]
    cdef Py_ssize_t m, n, M, N
    cdef cplx fm, ca, cb, cc, cd, ce, acc
    cdef cplx beta_c = beta.conjugate()
    for m in range(d):
        M = m + 2
        fm = -1j * kerr * m * (m - 1) - m
        ca = -1j * c2[m]
        cb = -1j * c2[m + 2]
        cc = beta * sq[m]
        cd = -beta_c * sq[m + 1]
        ce = 2.0 * sq[m + 1]
        for n in range(m, d):
            N = n + 2
            acc = ((e[n] + fm) * p[M, N]
                   + ca * p[M - 2, N] + cb * p[M + 2, N]
                   + g2m[n] * p[M, N - 2] + g2p[n] * p[M, N + 2]
                   + cc * p[M - 1, N] + cd * p[M + 1, N]
                   + g1m[n] * p[M, N - 1] + g1p[n] * p[M, N + 1]
                   + ce * gd[n] * p[M + 1, N + 1])
            out[m, n] = acc
            out[n, m] = acc.conjugate()


def lindblad_rhs(cplx[:, ::1] rho, double sqrt_pump, double kerr, cplx beta):
    """d rho/d tau for H' = kerr a+a+aa + (sqrt_pump/2)(a^2 + a+^2) + i(beta a+ - beta* a).

    ``rho`` must be Hermitian.
    """
    cdef Py_ssize_t d = rho.shape[0]
    t = _Tables(d, sqrt_pump, kerr, beta)
    padded = np.zeros((d + 4, d + 4), dtype=np.complex128)
    padded[2:d + 2, 2:d + 2] = rho
    out = np.empty((d, d), dtype=np.complex128)
    cdef cplx[:, ::1] pv = padded, ov = out
    cdef double[::1] sq = t.sq, c2 = t.c2
    cdef cplx[::1] e = t.e, g2m = t.g2m, g2p = t.g2p, g1m = t.g1m, g1p = t.g1p, gd = t.gd
    with nogil:
        _rhs_upper(pv, ov, sq, c2, kerr, e, g2m, g2p, g1m, g1p, gd, beta)
    return out


cdef inline void _stage(cplx[:, ::1] dst, const cplx[:, ::1] src, const cplx[:, ::1] k,
                        double h) noexcept nogil:
    # dst <- src + h k (both padded), upper triangle mirrored below
    cdef Py_ssize_t d = k.shape[0]
    cdef Py_ssize_t i, j
    cdef cplx v
    for i in range(d):
        for j in range(i, d):
            v = src[i + 2, j + 2] + h * k[i, j]
            dst[i + 2, j + 2] = v
            dst[j + 2, i + 2] = v.conjugate()


def rk4_steps(cplx[:, ::1] rho, Py_ssize_t n_steps, double dtau,
              double sqrt_pump, double kerr, cplx beta):
    """Advance Hermitian ``rho`` in place by ``n_steps`` RK4 steps.

    After each step the matrix is re-Hermitised and its trace renormalised to 1.
    """
    cdef Py_ssize_t d = rho.shape[0]
    cdef Py_ssize_t s, i, j
    cdef double tr
    cdef cplx v
    t = _Tables(d, sqrt_pump, kerr, beta)
    cdef double[::1] sq = t.sq, c2 = t.c2
    cdef cplx[::1] e = t.e, g2m = t.g2m, g2p = t.g2p, g1m = t.g1m, g1p = t.g1p, gd = t.gd
    state = np.zeros((d + 4, d + 4), dtype=np.complex128)
    state[2:d + 2, 2:d + 2] = rho
    stage = np.zeros_like(state)
    k1 = np.empty((d, d), dtype=np.complex128)
    k2 = np.empty_like(k1)
    k3 = np.empty_like(k1)
    k4 = np.empty_like(k1)
    cdef cplx[:, ::1] sv = state, tv = stage, k1v = k1, k2v = k2, k3v = k3, k4v = k4
    cdef double h2 = 0.5 * dtau, h6 = dtau / 6.0
    with nogil:
        for s in range(n_steps):
            _rhs_upper(sv, k1v, sq, c2, kerr, e, g2m, g2p, g1m, g1p, gd, beta)
            _stage(tv, sv, k1v, h2)
            _rhs_upper(tv, k2v, sq, c2, kerr, e, g2m, g2p, g1m, g1p, gd, beta)
            _stage(tv, sv, k2v, h2)
            _rhs_upper(tv, k3v, sq, c2, kerr, e, g2m, g2p, g1m, g1p, gd, beta)
            _stage(tv, sv, k3v, dtau)
            _rhs_upper(tv, k4v, sq, c2, kerr, e, g2m, g2p, g1m, g1p, gd, beta)
            tr = 0.0
            for i in range(d):
                for j in range(i, d):
                    sv[i + 2, j + 2] = sv[i + 2, j + 2] + h6 * (
                        k1v[i, j] + 2.0 * k2v[i, j] + 2.0 * k3v[i, j] + k4v[i, j])
                sv[i + 2, i + 2] = sv[i + 2, i + 2].real
                tr = tr + sv[i + 2, i + 2].real
            for i in range(d):
                for j in range(i, d):
                    v = sv[i + 2, j + 2] / tr
                    sv[i + 2, j + 2] = v
                    sv[j + 2, i + 2] = v.conjugate()
    cdef cplx[:, ::1] inner = state[2:d + 2, 2:d + 2].copy()
    rho[:, :] = inner


cdef inline void _quad_rhs(double x, double y, double sqrt_pump, double kerr,
                           double fx, double fy, double* dx, double* dy) noexcept nogil:
    cdef double r2 = x * x + y * y
    dx[0] = -x + sqrt_pump * y - 2.0 * kerr * r2 * y + fx
    dy[0] = -y + sqrt_pump * x + 2.0 * kerr * r2 * x + fy


def rk4_quadrature(double x, double y, Py_ssize_t n_steps, double dtau,
                   double sqrt_pump, double kerr, double fx, double fy):
    """Advance (q_x, q_y) by ``n_steps`` RK4 steps of the quadrature flow."""
    cdef Py_ssize_t s
    cdef double ax, ay, bx, by, cx, cy, ex, ey
    cdef double h2 = 0.5 * dtau, h6 = dtau / 6.0
    with nogil:
        for s in range(n_steps):
            _quad_rhs(x, y, sqrt_pump, kerr, fx, fy, &ax, &ay)
            _quad_rhs(x + h2 * ax, y + h2 * ay, sqrt_pump, kerr, fx, fy, &bx, &by)
            _quad_rhs(x + h2 * bx, y + h2 * by, sqrt_pump, kerr, fx, fy, &cx, &cy)
            _quad_rhs(x + dtau * cx, y + dtau * cy, sqrt_pump, kerr, fx, fy, &ex, &ey)
            x = x + h6 * (ax + 2.0 * bx + 2.0 * cx + ex)
            y = y + h6 * (ay + 2.0 * by + 2.0 * cy + ey)
    return x, y
