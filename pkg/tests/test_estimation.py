import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phonolab.dataio import NoiseModel, add_noise
from phonolab.dispersive import DeviceParams, lorentzian
from phonolab.errors import NonIdentifiableError, NonIdentifiableWarning, PreconditionError
from phonolab.estimation import (
    decoherence_cross_check,
    fit_lorentzian,
    fit_ramsey,
    fit_ring_up_ring_down,
    optimize,
    wrap_phase,
)
from phonolab.protocols import (
    MOMENTS,
    RING_UP_RING_DOWN,
    SPECTROSCOPY,
    ExperimentSeries,
    simulate_ramsey,
    simulate_ring_up_ring_down,
)
from phonolab.pulses import COMPLEX_PHASE

TWO_PI = 2 * math.pi


def rosenbrock(p):
    return np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]])


def test_quadratic_bowl():
    target = np.array([0.3, -2.0, 5.0])
    res = optimize(lambda p: p - target, [0.0, 0.0, 0.0])
    np.testing.assert_allclose(list(res.params.values()), target, atol=1e-10)
    assert res.converged


def test_rosenbrock_valley():
    res = optimize(rosenbrock, [-1.2, 1.0])
    assert res.converged and res.n_evaluations <= 5000
    np.testing.assert_allclose([res.params["p0"], res.params["p1"]], [1.0, 1.0], atol=1e-6)


def test_history_is_monotone():
    res = optimize(rosenbrock, [-1.2, 1.0])
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_init_outside_bounds():
    with pytest.raises(PreconditionError):
        optimize(rosenbrock, [2.0, 0.0], bounds=[(-1, 1), (None, None)])


def test_budget_exhaustion_flags_result():
    res = optimize(rosenbrock, [-1.2, 1.0], budget=20)
    assert not res.converged and "budget" in res.message
    assert res.n_evaluations <= 21


def test_singular_normal_matrix():
    # only the sum of the parameters is identifiable
    res = optimize(lambda p: np.array([p[0] + p[1] - 1.0, p[0] + p[1] - 1.0]), [0.0, 0.0])
    assert not res.uncertainties_available


def test_deterministic():
    a = optimize(rosenbrock, [-1.2, 1.0])
    b = optimize(rosenbrock, [-1.2, 1.0])
    assert a.params == b.params and a.n_evaluations == b.n_evaluations


def spectrum(center=4457.37e6, fwhm=430e3, amp=1.0, offset=0.1, n=81):
    x = center + np.linspace(-2.5 * fwhm, 2.5 * fwhm, n)
    return x, lorentzian(x, center, fwhm, amp, offset)


def test_lorentzian_noiseless_exact():
    x, y = spectrum()
    res = fit_lorentzian(ExperimentSeries(x, y, None, SPECTROSCOPY))
    for name, truth in [("center", 4457.37e6), ("fwhm", 430e3), ("amplitude", 1.0), ("offset", 0.1)]:
        assert res.params[name] == pytest.approx(truth, rel=1e-8)


def test_lorentzian_constant_data():
    x = np.linspace(0, 1, 11)
    with pytest.raises(NonIdentifiableError):
        fit_lorentzian(ExperimentSeries(x, np.full(11, 2.0), None, SPECTROSCOPY))


def test_lorentzian_monte_carlo_width():
    x, y = spectrum()
    clean = ExperimentSeries(x, y, None, SPECTROSCOPY)
    hits = 0
    for seed in range(100):
        noisy = add_noise(clean, NoiseModel(sigma_abs=0.03, seed=seed))
        hits += abs(fit_lorentzian(noisy).params["fwhm"] - 430e3) <= 27e3
    assert hits >= 90


@settings(max_examples=10, deadline=None)
@given(st.floats(-5e6, 5e6), st.floats(50e3, 2e6), st.floats(0.1, 20), st.floats(-1, 1))
def test_lorentzian_round_trip_property(center, fwhm, amp, offset):
    x = center + np.linspace(-3 * fwhm, 3 * fwhm, 41)
    y = lorentzian(x, center, fwhm, amp, offset)
    res = fit_lorentzian(ExperimentSeries(x, y, None, SPECTROSCOPY))
    assert res.params["fwhm"] == pytest.approx(fwhm, rel=1e-6)
    assert res.params["center"] == pytest.approx(center, abs=1e-6 * fwhm)


def test_doubling_sigma_scales_uncertainty_only():
    x, y = spectrum()
    rng = np.random.Generator(np.random.Philox(3))
    y = y + 0.02 * rng.standard_normal(y.size)
    s1 = ExperimentSeries(x, y, np.full(y.size, 0.02), SPECTROSCOPY)
    s2 = ExperimentSeries(x, y, np.full(y.size, 0.04), SPECTROSCOPY)
    r1 = fit_lorentzian(s1, scale_covariance=False)
    r2 = fit_lorentzian(s2, scale_covariance=False)
    for name in r1.params:
        assert r2.params[name] == pytest.approx(r1.params[name], rel=1e-7, abs=1e-9)
        assert r2.sigmas[name] == pytest.approx(2 * r1.sigmas[name], rel=1e-4)


def device(k1=480e3, kphi=0.0):
    return DeviceParams(4457.37e6, 4220e6, 9e6, 318e6, 494e-9, 750e-9, k1, kphi)


def test_ring_up_noiseless_recovery_with_verification():
    U = TWO_PI * 0.69e6
    t = np.linspace(0.1e-6, 8e-6, 40)
    data = simulate_ring_up_ring_down(device(), U, 2e-6, t)
    res = fit_ring_up_ring_down(data, {"t_d": 2e-6, "kappa_phi": 0.0}, {"U": 3e6, "kappa1": 300e3})
    assert res.converged
    assert res.params["U"] == pytest.approx(U, rel=1e-3)
    assert res.params["kappa1"] == pytest.approx(480e3, rel=1e-3)
    assert res.extras["verification"]["max_relative_deviation"] < 1e-3
    assert set(res.params) == {"U", "kappa1"}


def test_ring_up_without_drive_window_warns():
    U = TWO_PI * 0.69e6
    t = np.linspace(2.2e-6, 8e-6, 30)
    data = simulate_ring_up_ring_down(device(), U, 2e-6, t, backend=MOMENTS)
    with pytest.warns(NonIdentifiableWarning):
        fit_ring_up_ring_down(data, {"t_d": 2e-6}, {"U": 3e6, "kappa1": 400e3}, verify=False)


def test_ring_up_bias_below_reported_sigma():
    U = 4.35e6
    t = np.linspace(0.16e-6, 8e-6, 50)
    clean = simulate_ring_up_ring_down(device(), U, 2e-6, t, backend=MOMENTS)
    k1, sig = [], []
    for seed in range(100):
        res = fit_ring_up_ring_down(add_noise(clean, NoiseModel(sigma_rel=0.05, seed=seed)), None,
                                    {"U": 4e6, "kappa1": 400e3}, verify=False)
        k1.append(res.params["kappa1"])
        sig.append(res.sigmas["kappa1"])
    assert abs(np.mean(k1) - 480e3) < np.mean(sig)


def test_ramsey_single_delay_is_non_identifiable():
    g = simulate_ramsey(device(kphi=180e3), 2e6, 0.5e-6, [1e-6], [0.0, 1.0, 2.0], backend=MOMENTS)
    with pytest.raises(NonIdentifiableError):
        fit_ramsey(g, {"t_d": 0.5e-6}, {"U": 2e6, "kappa1": 4e5, "kappa_phi": 1e5, "phi0": 0.0})


def test_ramsey_noiseless_recovery_small_grid():
    taus = np.linspace(0, 3e-6, 8)
    phis = np.linspace(0, 2 * math.pi, 9)
    g = simulate_ramsey(device(kphi=180e3), 4.35e6, 0.5e-6, taus, phis, 0.3, COMPLEX_PHASE)
    res = fit_ramsey(g, None, {"U": 4e6, "kappa1": 400e3, "kappa_phi": 100e3, "phi0": 0.0})
    truth = {"U": 4.35e6, "kappa1": 480e3, "kappa_phi": 180e3, "phi0": 0.3}
    for name, value in truth.items():
        assert res.params[name] == pytest.approx(value, rel=5e-3)
    assert res.extras["mode"] == COMPLEX_PHASE


@given(st.floats(-100, 100))
def test_wrap_phase_range(phi):
    w = wrap_phase(phi)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(phi), abs_tol=1e-9)


def test_cross_check_block():
    block = decoherence_cross_check(480e3, 180e3, measured_fwhm=430e3)
    assert block["kappa_total_hz"] == 420e3
    assert block["predicted_fwhm_hz"] == 570e3
    assert block["measured_minus_kappa_total_hz"] == pytest.approx(10e3)
