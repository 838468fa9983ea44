"""Josephson parametric phase-locked oscillator: device model, dynamics and experiments."""
from ._core import BACKEND
from .device import DeviceParams, operating_point, resonant_frequency, kerr_coefficient
from .errors import NumericalError, PploError, ValidationError
from .semiclassical import PploConfig, QuadratureState

__all__ = [
    "BACKEND",
    "DeviceParams",
    "NumericalError",
    "PploConfig",
    "PploError",
    "QuadratureState",
    "ValidationError",
    "kerr_coefficient",
    "operating_point",
    "resonant_frequency",
]
__version__ = "0.1.0"
