import math
import os
import subprocess
import sys

import numpy as np
import pytest

from pplo import _core
from pplo.errors import ValidationError
from pplo.lindblad import DensityMatrix, build_hamiltonian, fock_operators, lindblad_rhs
from pplo.semiclassical import PploConfig

BACKENDS = ["python"] + (["cython"] if _core.BACKEND == "cython" else [])


def random_density(n_max, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n_max + 1, n_max + 1)) + 1j * rng.normal(size=(n_max + 1, n_max + 1))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("n_max", [2, 3, 12, 30])
def test_rhs_matches_dense(backend, n_max):
    kern = _core.load_backend(backend)
    cfg = PploConfig(1.7, -0.3, 0.4, 0.9)
    rho = random_density(n_max, n_max)
    ops = fock_operators(n_max)
    dense = lindblad_rhs(ops, build_hamiltonian(cfg, ops), rho)
    fast = kern.lindblad_rhs(np.ascontiguousarray(rho), cfg.sqrt_pump, cfg.gamma_prime, cfg.drive)
    assert np.max(np.abs(fast - dense)) < 1e-12 * max(1.0, np.max(np.abs(dense)))


def test_backends_agree_on_rk4():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    cfg = PploConfig(1.66, -0.2, 0.3, 1.0)
    out = []
    for name in BACKENDS:
        rho = DensityMatrix.vacuum(15).rho.copy()
        _core.load_backend(name).rk4_steps(rho, 500, 1e-3, cfg.sqrt_pump, cfg.gamma_prime, cfg.drive)
        out.append(rho)
    assert np.max(np.abs(out[0] - out[1])) < 1e-13


def test_backends_agree_on_quadrature():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    res = [_core.load_backend(n).rk4_quadrature(0.1, -0.2, 1000, 1e-3, 1.3, -0.1, 0.2, 0.1)
           for n in BACKENDS]
    assert res[0] == pytest.approx(res[1], abs=1e-13)


def test_rk4_keeps_unit_trace():
    rho = random_density(10, 1)
    for name in BACKENDS:
        r = rho.copy()
        _core.load_backend(name).rk4_steps(r, 10, 1e-3, 1.2, -0.2, 0.5 + 0.1j)
        assert abs(np.trace(r) - 1) < 1e-14
        assert np.max(np.abs(r - r.conj().T)) == 0.0


def test_unknown_backend():
    with pytest.raises(ValidationError):
        _core.load_backend("fortran")


def test_env_var_forces_fallback():
    env = dict(os.environ, PPLO_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import pplo; print(pplo.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"
