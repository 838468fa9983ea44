"""Time one RK4 step of the master equation with each backend.

    python benchmarks/bench_kernels.py [--sizes 20 40 80] [--steps 200]

Compares the compiled element-wise kernel, its numpy fallback and the dense
matrix-product right-hand side (fed through the same RK4 stages).
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from pplo import _core
from pplo.lindblad import DensityMatrix, build_hamiltonian, fock_operators, lindblad_rhs
from pplo.semiclassical import PploConfig

CFG = PploConfig(1.66, -0.0124, 0.09, np.pi / 2)


def _dense_steps(rho, n, h, ops, ham):
    for _ in range(n):
        k1 = lindblad_rhs(ops, ham, rho)
        k2 = lindblad_rhs(ops, ham, rho + 0.5 * h * k1)
        k3 = lindblad_rhs(ops, ham, rho + 0.5 * h * k2)
        k4 = lindblad_rhs(ops, ham, rho + h * k3)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        rho /= np.trace(rho).real
    return rho


def time_backend(name: str, n_max: int, steps: int) -> float:
    """Seconds per RK4 step."""
    rho = DensityMatrix.coherent(n_max, 2.0).rho.copy()
    if name == "dense":
        ops = fock_operators(n_max)
        ham = build_hamiltonian(CFG, ops)
        t = time.perf_counter()
        _dense_steps(rho, steps, 1e-3, ops, ham)
        return (time.perf_counter() - t) / steps
    kern = _core.load_backend(name)
    kern.rk4_steps(rho, 2, 1e-3, CFG.sqrt_pump, CFG.gamma_prime, CFG.drive)  # warm-up
    t = time.perf_counter()
    kern.rk4_steps(rho, steps, 1e-3, CFG.sqrt_pump, CFG.gamma_prime, CFG.drive)
    return (time.perf_counter() - t) / steps


def run(sizes, steps):
    names = ["dense", "python"] + (["cython"] if _core.BACKEND == "cython" else [])
    rows = []
    for n_max in sizes:
        row = {"n_max": n_max}
        for name in names:
            row[name] = time_backend(name, n_max, steps)
        rows.append(row)
    return names, rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 40, 80])
    ap.add_argument("--steps", type=int, default=200)
    args = ap.parse_args(argv)
    names, rows = run(args.sizes, args.steps)
    print("n_max " + " ".join(f"{n + ' ms/step':>18}" for n in names)
          + ("  speedup(cython/python)" if "cython" in names else ""))
    for row in rows:
        line = f"{row['n_max']:5d} " + " ".join(f"{1e3 * row[n]:18.4f}" for n in names)
        if "cython" in names:
            line += f"  {row['python'] / row['cython']:10.1f}x"
        print(line)


if __name__ == "__main__":
    main()
