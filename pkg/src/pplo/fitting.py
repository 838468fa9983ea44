"""Derivative-free least-squares engine shared by the device and timing fits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    n_iter: int
    n_eval: int
    history: list = field(default_factory=list, repr=False)


def simplex_minimize(fun, x0, *, max_iter=500, xtol=1e-8, ftol=np.inf, step=0.2, restarts=1):
    """Nelder-Mead minimisation with a restart from the converged point.

    ``xtol`` bounds the simplex diameter in the coordinates ``fun`` receives, so
    callers pass log-scaled or normalised parameters to make it relative.
    Raises :class:`ConvergenceError` when the iteration budget runs out.
    """
    x = np.asarray(x0, dtype=float)
    n_iter = n_eval = 0
    for attempt in range(restarts + 1):
        simplex = np.vstack([x] + [x + step * e for e in np.eye(x.size)])
        res = minimize(
            fun,
            x,
            method="Nelder-Mead",
            options={
                "maxiter": max_iter,
                "maxfev": 4 * max_iter,
                "xatol": xtol,
                "fatol": ftol,
                "initial_simplex": simplex,
            },
        )
        n_iter += res.nit
        n_eval += res.nfev
        if not res.success:
            raise ConvergenceError(
                f"simplex did not converge in {max_iter} iterations ({res.message})"
            )
        moved = np.max(np.abs(res.x - x)) if attempt else np.inf
        x = res.x
        # restart with a shrunken simplex to escape premature collapse
        step = max(100 * xtol, 1e-4)
        if moved < 10 * xtol:
            break
    return SimplexResult(x=x, fun=float(fun(x)), n_iter=n_iter, n_eval=n_eval)
