import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phonolab.dispersive import (
    STRONG,
    WEAK,
    DeviceParams,
    QubitSpectrumModel,
    avoided_crossing_branches,
    chi_shift,
    classify_dispersive_regime,
    lorentzian,
    nbar_from_shift,
    pure_dephasing_time,
    stark_shifted_spectrum,
    total_decoherence_rate,
)
from phonolab.errors import (
    NoPureDephasingError,
    ResonanceSingularityError,
    SingularityError,
    StraddlingSingularityError,
)

G, DELTA, ALPHA = 9e6, 4220e6 - 4457.37e6, 318e6


def test_chi_replica_value():
    assert chi_shift(G, DELTA, ALPHA) == pytest.approx(-0.391e6, abs=0.5e3)


def test_chi_scaling_and_zero():
    assert chi_shift(0.0, DELTA, ALPHA) == 0
    assert chi_shift(2 * G, DELTA, ALPHA) == pytest.approx(4 * chi_shift(G, DELTA, ALPHA), rel=1e-14)


def test_chi_singularities():
    with pytest.raises(ResonanceSingularityError):
        chi_shift(G, 0.0, ALPHA)
    with pytest.raises(StraddlingSingularityError):
        chi_shift(G, ALPHA, ALPHA)


def test_nbar_from_shift_examples():
    assert nbar_from_shift(5e9, 5e9, -0.4e6).nbar == 0
    assert nbar_from_shift(-0.4e6, 0.0, -0.4e6).nbar == pytest.approx(1.0)
    assert nbar_from_shift(-3.2e6, 0.0, -0.391e6).nbar == pytest.approx(8.18, abs=0.005)
    out = nbar_from_shift(0.1e6, 0.0, -0.4e6)
    assert out.negative and out.nbar == pytest.approx(-0.25)
    with pytest.raises(SingularityError):
        nbar_from_shift(1.0, 0.0, 0.0)


def test_pure_dephasing_examples():
    assert pure_dephasing_time(494e-9, 750e-9) == pytest.approx(3.11e-6, rel=0.01)
    with pytest.raises(NoPureDephasingError):
        pure_dephasing_time(1e-6, 2e-6)
    assert pure_dephasing_time(1.0, 1e-3) == pytest.approx(1e-3, rel=1e-3)


def test_total_decoherence_rate():
    assert total_decoherence_rate(480e3, 180e3) == 420e3
    assert total_decoherence_rate(480e3, 0) == 240e3
    assert total_decoherence_rate(0, 180e3) == 180e3


@given(st.floats(0, 1e7), st.floats(0, 1e7), st.floats(0, 1e7), st.floats(0, 1e7))
def test_total_rate_additive(a1, b1, a2, b2):
    lhs = total_decoherence_rate(a1 + a2, b1 + b2)
    rhs = total_decoherence_rate(a1, b1) + total_decoherence_rate(a2, b2)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-6)


def test_avoided_crossing_examples():
    up, lo = avoided_crossing_branches(4457.37e6, 4457.37e6, 9e6)
    assert up - lo == pytest.approx(18e6, rel=1e-12)
    assert avoided_crossing_branches(4.2e9, 4.4e9, 0.0) == (4.4e9, 4.2e9)
    wm = 4.4e9
    wq = wm + 100 * G
    up, _ = avoided_crossing_branches(wq, wm, G)
    assert up == pytest.approx(wq + G**2 / (wq - wm), rel=5e-5)


@given(st.floats(3e9, 6e9), st.floats(3e9, 6e9), st.floats(0, 50e6))
def test_branches_ordered(wq, wm, g):
    up, lo = avoided_crossing_branches(wq, wm, g)
    assert up >= lo


def test_minimum_splitting_is_two_g():
    wm = 4457.37e6
    scan = wm + np.linspace(-50e6, 50e6, 2001)
    up, lo = avoided_crossing_branches(scan, wm, G)
    assert np.min(up - lo) == pytest.approx(2 * G, rel=1e-9)


def test_regime_classification():
    dev = DeviceParams(4457.37e6, 4220e6, G, ALPHA, 494e-9, 750e-9, 480e3, 180e3)
    assert dev.gamma_q == pytest.approx(0.42e6, rel=0.02)
    assert classify_dispersive_regime(-0.4e6, dev.gamma_q, 0.43e6) == WEAK
    assert classify_dispersive_regime(0.0, 0.1e6, 0.1e6) == WEAK
    assert classify_dispersive_regime(10e6, 0.1e6, 0.1e6) == STRONG


def test_device_params_validation():
    with pytest.raises(ValueError):
        DeviceParams(4457.37e6, 4220e6, G, ALPHA, 494e-9, 750e-9, -1.0, 0.0)
    dev = DeviceParams(1e9, 2e9, 1e6, 1e8, 1e-6, 3e-6, 1e3, 0.0)
    assert dev.flags()


def test_stark_shift_moves_peak():
    model = QubitSpectrumModel(4220e6, 0.42e6)
    f = 4220e6 + np.linspace(-5e6, 1e6, 6001)
    assert f[np.argmax(stark_shifted_spectrum(model, -0.4e6, 0.0, f))] == pytest.approx(4220e6, abs=1e3)
    assert f[np.argmax(stark_shifted_spectrum(model, -0.4e6, 1.0, f))] == pytest.approx(4219.6e6, abs=1e3)
    peaks = [f[np.argmax(stark_shifted_spectrum(model, -0.391e6, n, f))] for n in (0, 2, 4, 8)]
    assert all(np.diff(peaks) < 0)


@given(st.floats(0, 20))
def test_shift_readout_round_trip(nbar):
    two_chi = chi_shift(G, DELTA, ALPHA)
    center = QubitSpectrumModel(4220e6, 0.42e6).center + two_chi * nbar
    assert nbar_from_shift(center, 4220e6, two_chi).nbar == pytest.approx(nbar, abs=1e-6)


def test_lorentzian_half_width():
    assert lorentzian(1.5, 1.0, 1.0, 2.0, 0.0) == pytest.approx(1.0)
