import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phonolab.dispersive import DeviceParams
from phonolab.errors import TruncationError
from phonolab.protocols import (
    MOMENTS,
    choose_dim,
    moment_oracle,
    nbar_upper_bound,
    simulate_ramsey,
    simulate_ring_up_ring_down,
    simulate_spectroscopy,
)
from phonolab.pulses import COMPLEX_PHASE, LITERAL_COSINE, PulseSchedule, ramsey_schedule, ring_up_schedule

TWO_PI = 2 * math.pi


def device(k1=480e3, kphi=0.0):
    return DeviceParams(4457.37e6, 4220e6, 9e6, 318e6, 494e-9, 750e-9, k1, kphi)


def test_free_decay_of_mean_field():
    k1, kphi = TWO_PI * 480e3, TWO_PI * 180e3
    t = np.linspace(0, 3e-6, 7)
    alpha = 0.8 - 0.3j
    for method in ("rk", "exact"):
        a, n = moment_oracle(PulseSchedule(), k1, kphi, t, a0=alpha, method=method)
        np.testing.assert_allclose(a, alpha * np.exp(-(k1 / 2 + kphi / 4) * t), rtol=1e-8)
        np.testing.assert_allclose(n, abs(alpha) ** 2 * np.exp(-k1 * t), rtol=1e-8)


def test_oracle_ring_up_closed_form():
    k1, U = TWO_PI * 480e3, TWO_PI * 0.69e6
    t = np.linspace(0, 4e-6, 9)
    _, n = moment_oracle(ring_up_schedule(U, 4e-6), k1, 0.0, t)
    np.testing.assert_allclose(n, (2 * U / k1) ** 2 * (1 - np.exp(-k1 * t / 2)) ** 2, rtol=1e-8, atol=1e-14)


def test_truncation_choice():
    assert choose_dim(nbar_upper_bound(4.35e6, TWO_PI * 480e3)) == 31
    with pytest.raises(TruncationError):
        choose_dim(8.3, dim_override=12)
    with pytest.raises(TruncationError):
        choose_dim(1e4)
    # lossless drive is bounded by its area
    assert nbar_upper_bound(1e6, 0.0, 2.0) == 4.0


def test_ring_up_ring_down_examples():
    dev = device()
    k1 = dev.kappa1_angular
    U = 4.35e6
    t_d = 2e-6
    t = np.array([0.0, 0.5e-6, 1e-6, t_d, 3e-6, 5e-6])
    s = simulate_ring_up_ring_down(dev, U, t_d, t)
    assert s.nbar[0] == 0
    after = t > t_d
    np.testing.assert_allclose(s.nbar[after], s.nbar[3] * np.exp(-k1 * (t[after] - t_d)), rtol=1e-6)
    # the field relaxes at k1/2, so 5/k1 reaches (1 - e^-2.5)^2 of steady state; 12/k1 is within 1%
    n_ss = (2 * U / k1) ** 2
    early, late = simulate_ring_up_ring_down(dev, U, 12 / k1, [5 / k1, 12 / k1]).nbar
    assert early == pytest.approx(n_ss * (1 - math.exp(-2.5)) ** 2, rel=1e-6)
    assert late == pytest.approx(n_ss, rel=0.01)


def test_ring_up_continuous_at_switch_off():
    dev = device(kphi=180e3)
    t_d = 2e-6
    s = simulate_ring_up_ring_down(dev, 4.35e6, t_d, [t_d * (1 - 1e-12), t_d, t_d * (1 + 1e-12)])
    assert np.ptp(s.nbar) <= 1e-8 * s.nbar[1]


def test_lossless_ramsey_cancellation():
    dev = DeviceParams(4457.37e6, 4220e6, 9e6, 318e6, 494e-9, 750e-9, 0.0, 0.0)
    g = simulate_ramsey(dev, 2e6, 0.5e-6, [0.0], [math.pi], 0.0, LITERAL_COSINE)
    assert abs(g.nbar[0, 0]) < 1e-9


def test_ramsey_phase_periodicity():
    dev = device(kphi=180e3)
    phis = np.array([0.0, 0.7, 2.1])
    a = simulate_ramsey(dev, 2e6, 0.3e-6, [0.0, 0.4e-6], phis, 0.3, COMPLEX_PHASE)
    b = simulate_ramsey(dev, 2e6, 0.3e-6, [0.0, 0.4e-6], phis + 2 * math.pi, 0.3, COMPLEX_PHASE)
    np.testing.assert_array_equal(a.nbar, b.nbar)


def test_ramsey_short_delay_is_sinusoidal():
    dev = device(kphi=180e3)
    phis = np.linspace(0, 2 * math.pi, 25, endpoint=False)
    g = simulate_ramsey(dev, 2e6, 0.4e-6, [0.0], phis, 0.0, COMPLEX_PHASE, backend=MOMENTS)
    y = g.nbar[0]
    X = np.column_stack([np.ones_like(phis), np.cos(phis), np.sin(phis)])
    fit = X @ np.linalg.lstsq(X, y, rcond=None)[0]
    assert 1 - np.sum((y - fit) ** 2) / np.sum((y - y.mean()) ** 2) > 0.999


def test_spectroscopy_peak_and_symmetry():
    dev = device(kphi=180e3)
    deltas = np.array([-600e3, -200e3, 0.0, 200e3, 600e3])
    s = simulate_spectroscopy(dev, 0.5e6, 3e-6, deltas)
    assert np.argmax(s.nbar) == 2
    np.testing.assert_allclose(s.nbar, s.nbar[::-1], rtol=1e-6)


@settings(max_examples=6, deadline=None)
@given(st.floats(0.3e6, 2e6), st.floats(200e3, 800e3), st.floats(0, 300e3),
       st.floats(-400e3, 400e3), st.floats(0.3e-6, 2e-6))
def test_lindblad_matches_moments(U, k1, kphi, delta_hz, t_d):
    k1a, kpa = TWO_PI * k1, TWO_PI * kphi
    sched = ring_up_schedule(U, t_d).with_detuning(TWO_PI * delta_hz)
    dim = choose_dim(nbar_upper_bound(U, k1a, U * t_d))
    t = np.linspace(0, 2 * t_d, 9)
    from phonolab.fockspace import vacuum
    from phonolab.lindblad import dephasing, evolve, loss
    traj = evolve(vacuum(dim), sched, [loss(k1a), dephasing(kpa)], t)
    _, n = moment_oracle(sched, k1a, kpa, t, method="exact")
    np.testing.assert_allclose(traj.nbar, n, rtol=1e-3, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0))
def test_dimensionless_scaling(s):
    dev = device(kphi=180e3)
    scaled = device(480e3 * s, 180e3 * s)
    t = np.linspace(0, 4e-6, 6)
    base = simulate_ring_up_ring_down(dev, 3e6, 1.5e-6, t, backend=MOMENTS).nbar
    other = simulate_ring_up_ring_down(scaled, 3e6 * s, 1.5e-6 / s, t / s, backend=MOMENTS).nbar
    np.testing.assert_allclose(other, base, rtol=1e-9, atol=1e-14)
    g1 = simulate_ramsey(dev, 3e6, 0.5e-6, [0.0, 1e-6], [0.0, 1.0], 0.2, COMPLEX_PHASE, backend=MOMENTS).nbar
    g2 = simulate_ramsey(scaled, 3e6 * s, 0.5e-6 / s, [0.0, 1e-6 / s], [0.0, 1.0], 0.2, COMPLEX_PHASE,
                         backend=MOMENTS).nbar
    np.testing.assert_allclose(g2, g1, rtol=1e-9, atol=1e-14)


def test_ramsey_lindblad_matches_moments_on_grid():
    dev = device(kphi=180e3)
    args = (dev, 2e6, 0.4e-6, [0.0, 0.5e-6, 1.5e-6], [0.0, 1.3, 3.0], 0.3)
    for mode in (LITERAL_COSINE, COMPLEX_PHASE):
        full = simulate_ramsey(*args, mode=mode).nbar
        mom = simulate_ramsey(*args, mode=mode, backend=MOMENTS).nbar
        np.testing.assert_allclose(full, mom, rtol=1e-3, atol=1e-12)


def test_ramsey_schedule_zero_delay_matches_long_pulse():
    from phonolab.fockspace import vacuum
    from phonolab.lindblad import dephasing, evolve, loss
    diss = [loss(TWO_PI * 480e3), dephasing(TWO_PI * 180e3)]
    t = np.linspace(0, 1e-6, 5)
    a = evolve(vacuum(20), ramsey_schedule(2e6, 0.5e-6, 0.0, 0.0), diss, t).nbar
    b = evolve(vacuum(20), ring_up_schedule(2e6, 1e-6), diss, t).nbar
    np.testing.assert_allclose(a, b, rtol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False), st.floats(0, 10),
       st.complex_numbers(max_magnitude=1e7, allow_nan=False, allow_infinity=False), st.floats(0, 1e-5),
       st.floats(-3e6, 3e6), st.floats(0, 5e6), st.floats(0, 3e6))
def test_closed_form_matches_matrix_exponential(a0, n0, u, dt, delta, k1, kphi):
    from phonolab.protocols import propagate_moments
    a_c, n_c = propagate_moments(a0, n0, u, dt, delta, k1, kphi, method="closed")
    a_e, n_e = propagate_moments(a0, n0, u, dt, delta, k1, kphi, method="expm")
    scale_a = abs(a0) + abs(u) * dt + 1e-12
    scale_n = n0 + (abs(a0) + abs(u) * dt) ** 2 + 1e-12
    assert abs(a_c - a_e) <= 1e-9 * scale_a
    assert abs(n_c - n_e) <= 1e-9 * scale_n
