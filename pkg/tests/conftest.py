import math

import pytest
from hypothesis import HealthCheck, settings

from pplo.lindblad import SimSettings
from pplo.semiclassical import PploConfig

settings.register_profile("pplo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pplo")

# A strongly nonlinear oscillator (about 2 photons per well) so full master
# equation runs take a fraction of a second.
SMALL_GAMMA = -0.2
SMALL_N_MAX = 20


@pytest.fixture
def small_cfg():
    return PploConfig(pump_ratio=1.66, gamma_prime=SMALL_GAMMA, n_po=0.3, theta_s=math.pi / 2)


@pytest.fixture
def small_settings():
    return SimSettings(n_max=SMALL_N_MAX, tau_end=20.0, resolution=101, stop_when_stationary=False)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
