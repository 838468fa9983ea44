"""Physical constants and the few unit conversions the experiments need.

Everything in the library is SI; dBm only shows up at the CLI boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class PhysConstants:
    hbar: float = 1.054571817e-34  # J s
    flux_quantum: float = 2.067833848e-15  # Wb


CONSTANTS = PhysConstants()
HBAR = CONSTANTS.hbar
FLUX_QUANTUM = CONSTANTS.flux_quantum


def dbm_to_watts(p_dbm: float) -> float:
    """Convert a power in dBm to watts."""
    if not math.isfinite(p_dbm):
        raise ValidationError(f"power must be finite, got {p_dbm!r}")
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def watts_to_dbm(p_watts: float) -> float:
    if not p_watts > 0:
        raise ValidationError(f"power must be positive, got {p_watts!r}")
    return 10.0 * math.log10(p_watts / 1e-3)


def mean_photon_number(p_s: float, omega0: float, q_loaded: float, q_external: float) -> float:
    """Steady-state photon number of a resonator driven on resonance.

    N = 4 P Q_L^2 / (hbar omega0^2 Q_e). ``p_s`` may be zero; the other
    arguments must be strictly positive.
    """
    if not (math.isfinite(p_s) and p_s >= 0):
        raise ValidationError(f"p_s must be a non-negative power, got {p_s!r}")
    for name, value in (("omega0", omega0), ("q_loaded", q_loaded), ("q_external", q_external)):
        if not (math.isfinite(value) and value > 0):
            raise ValidationError(f"{name} must be positive, got {value!r}")
    return 4.0 * p_s * q_loaded**2 / (HBAR * omega0**2 * q_external)


def loaded_q(q_internal: float, q_external: float) -> float:
    return 1.0 / (1.0 / q_internal + 1.0 / q_external)
