import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phonolab.fockspace import make_annihilation, make_number
from phonolab.pulses import (
    COMPLEX_PHASE,
    LITERAL_COSINE,
    PulseSchedule,
    PulseSegment,
    drive_hamiltonian,
    hamiltonian_at,
    ramsey_schedule,
    ring_up_schedule,
)


def test_zero_drive_envelope():
    s = ring_up_schedule(0.0, 2e-6)
    assert all(s.envelope_at(t) == 0 for t in np.linspace(0, 4e-6, 11))


def test_ring_up_window():
    U, t_d = 4.35e6, 2e-6
    s = ring_up_schedule(U, t_d)
    assert s.envelope_at(0.0) == U
    assert s.envelope_at(t_d * (1 - 1e-9)) == U
    assert s.envelope_at(t_d) == 0
    assert s.envelope_at(t_d + 1e-15) == 0


@pytest.mark.parametrize("t_d", [0.0, -1e-6])
def test_ring_up_rejects_nonpositive_length(t_d):
    with pytest.raises(ValueError):
        ring_up_schedule(1.0, t_d)


def test_ramsey_zero_delay_in_phase_is_one_long_pulse():
    assert ramsey_schedule(3.0, 1e-6, 0.0, 0.0, 0.0, LITERAL_COSINE) == ring_up_schedule(3.0, 2e-6)


def test_ramsey_literal_cosine_amplitudes():
    quarter = ramsey_schedule(2.0, 1e-6, 0.5e-6, math.pi / 2)
    assert abs(quarter.envelope_at(1.7e-6)) < 1e-15
    half = ramsey_schedule(2.0, 1e-6, 0.5e-6, math.pi)
    assert half.envelope_at(1.7e-6) == pytest.approx(-2.0)
    # the delay starts after the first pulse ends
    assert half.envelope_at(1.2e-6) == 0


def test_ramsey_complex_phase_amplitude():
    s = ramsey_schedule(2.0, 1e-6, 0.0, math.pi / 2, mode=COMPLEX_PHASE)
    assert s.envelope_at(1.5e-6) == pytest.approx(2j)


@given(st.floats(-50, 50), st.floats(-3, 3), st.sampled_from([LITERAL_COSINE, COMPLEX_PHASE]))
def test_phase_periodicity_is_bit_exact(phi, phi0, mode):
    a = ramsey_schedule(1.3e6, 0.5e-6, 1e-6, phi, phi0, mode)
    b = ramsey_schedule(1.3e6, 0.5e-6, 1e-6, phi + 2 * math.pi, phi0, mode)
    assert a == b


def test_overlapping_segments_rejected():
    with pytest.raises(ValueError):
        PulseSchedule((PulseSegment(0.0, 2.0, 1.0), PulseSegment(1.0, 1.0, 1.0)))


def test_hamiltonian_examples():
    dim = 6
    a = make_annihilation(dim)
    np.testing.assert_array_equal(drive_hamiltonian(0, 0.0, dim), np.zeros((dim, dim)))
    np.testing.assert_allclose(drive_hamiltonian(2.5, 0.0, dim), 2.5 * (a + a.conj().T))
    H = drive_hamiltonian(0, 3.0, dim)
    np.testing.assert_allclose(H, -3.0 * make_number(dim))


@given(st.complex_numbers(max_magnitude=1e7, allow_nan=False, allow_infinity=False),
       st.floats(-1e7, 1e7), st.floats(0, 3e-6))
def test_hamiltonian_is_hermitian(u, delta, t):
    s = PulseSchedule((PulseSegment(0.0, 1e-6, u), PulseSegment(1.5e-6, 1e-6, -u)), delta)
    H = hamiltonian_at(s, t, 8)
    assert np.max(np.abs(H - H.conj().T)) <= 1e-14 * max(1.0, np.max(np.abs(H)))
