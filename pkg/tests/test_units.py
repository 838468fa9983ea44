import math

import pytest
from hypothesis import given, strategies as st

from pplo.errors import ValidationError
from pplo.units import CONSTANTS, dbm_to_watts, loaded_q, mean_photon_number, watts_to_dbm


def test_constants_are_codata():
    assert CONSTANTS.hbar == 1.054571817e-34
    assert CONSTANTS.flux_quantum == 2.067833848e-15
    with pytest.raises(Exception):
        CONSTANTS.hbar = 1.0


@pytest.mark.parametrize("dbm, watts", [(0.0, 1e-3), (30.0, 1.0), (-125.0, 3.1623e-16)])
def test_dbm_to_watts(dbm, watts):
    assert dbm_to_watts(dbm) == pytest.approx(watts, rel=1e-4)


def test_dbm_roundtrip():
    assert watts_to_dbm(dbm_to_watts(-87.3)) == pytest.approx(-87.3, abs=1e-12)
    with pytest.raises(ValidationError):
        dbm_to_watts(float("nan"))
    with pytest.raises(ValidationError):
        watts_to_dbm(0.0)


def test_photon_number_locking_signal():
    n = mean_photon_number(dbm_to_watts(-125), 2 * math.pi * 10.507e9, 320, 340)
    assert n == pytest.approx(0.83, abs=0.01)


def test_photon_number_readout_resonator():
    # Q_L from the measured Q_i, Q_e is 614.5; rounding it to 620 gives 5.64
    q_l = loaded_q(2.5e4, 630)
    n = mean_photon_number(dbm_to_watts(-120), 2 * math.pi * 10.193e9, q_l, 630)
    assert n == pytest.approx(5.5, abs=0.1)
    n620 = mean_photon_number(dbm_to_watts(-120), 2 * math.pi * 10.193e9, 620, 630)
    assert n620 == pytest.approx(n * (620 / q_l) ** 2, rel=1e-12)


def test_photon_number_zero_power_and_bad_args():
    assert mean_photon_number(0.0, 1e10, 300, 340) == 0.0
    for args in [(-1e-18, 1e10, 300, 340), (1e-18, 0.0, 300, 340), (1e-18, 1e10, -3, 340),
                 (1e-18, 1e10, 300, 0)]:
        with pytest.raises(ValidationError):
            mean_photon_number(*args)


def test_loaded_q():
    assert loaded_q(5200, 340) == pytest.approx(1 / (1 / 5200 + 1 / 340))


@given(st.floats(-200, 100))
def test_ten_db_is_factor_ten(a):
    assert dbm_to_watts(a + 10) == pytest.approx(10 * dbm_to_watts(a), rel=1e-12)


@given(st.floats(1e-22, 1e-12), st.floats(1e-3, 1e3), st.floats(10, 1e4), st.floats(10, 1e4),
       st.floats(0.1, 10))
def test_photon_number_scaling(p, scale, q_l, q_e, c):
    w = 2 * math.pi * 1e10
    n = mean_photon_number(p, w, q_l, q_e)
    assert mean_photon_number(scale * p, w, q_l, q_e) == pytest.approx(scale * n, rel=1e-12)
    assert mean_photon_number(p, w, c * q_l, c * c * q_e) == pytest.approx(n, rel=1e-12)
