"""
Closed-form device arithmetic for a transmon read out dispersively.

Every public function takes and returns ordinary frequencies in Hz (the
``omega / 2 pi`` convention) and times in seconds.  Conversion to angular
units happens only in the ``*_angular`` properties of :class:`DeviceParams`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    NoPureDephasingError,
    ResonanceSingularityError,
    SingularityError,
    StraddlingSingularityError,
)

TWO_PI = 2.0 * math.pi

WEAK = "weak"
STRONG = "strong"


@dataclass(frozen=True)
class DeviceParams:
    """Device constants.

    Frequencies are in Hz, times in seconds.  ``cal_V_to_U`` converts a drive
    amplitude in arbitrary instrument units to a drive rate in rad/s.

    The qubit linewidth is taken as ``gamma_q = 1 / (pi * T2)`` (Hz, full
    width), which is the Lorentzian FWHM of a qubit with coherence time T2.
    """

    omega_m: float
    omega_q: float
    g: float
    alpha: float
    T1: float
    T2: float
    kappa1: float
    kappa_phi: float
    cal_V_to_U: float = 1.0
    metadata: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        for name in ("omega_m", "omega_q", "g", "alpha", "T1", "T2", "cal_V_to_U"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        for name in ("kappa1", "kappa_phi"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a non-negative finite number, got {value!r}")

    @property
    def delta(self):
        """Qubit-mode detuning ``omega_q - omega_m`` in Hz."""
        return self.omega_q - self.omega_m

    @property
    def gamma_q(self):
        return 1.0 / (math.pi * self.T2)

    @property
    def two_chi(self):
        return chi_shift(self.g, self.delta, self.alpha)

    @property
    def kappa1_angular(self):
        return TWO_PI * self.kappa1

    @property
    def kappa_phi_angular(self):
        return TWO_PI * self.kappa_phi

    def flags(self):
        """Soft consistency problems; physically dubious but not rejected."""
        out = []
        if self.T2 > 2.0 * self.T1 * (1 + 1e-9):
            out.append(f"T2={self.T2:.6g} s exceeds 2*T1={2 * self.T1:.6g} s")
        return out


class ShiftReadout(NamedTuple):
    nbar: float
    negative: bool


def chi_shift(g, delta, alpha):
    """Dispersive shift per quantum, ``2 chi = -2 g^2 / delta * alpha / (delta - alpha)``.

    Parameters
    ----------
    g, delta, alpha : float
        Coupling, qubit-mode detuning and transmon anharmonicity, all in Hz.

    Returns
    -------
    float
        ``2 chi`` in Hz.
    """
    if delta == 0:
        raise ResonanceSingularityError("dispersive shift diverges at zero detuning (delta = 0)")
    if delta == alpha:
        raise StraddlingSingularityError(
            "dispersive shift diverges at delta = alpha (straddling-regime pole)"
        )
    return 2.0 * (-(g**2) / delta) * (alpha / (delta - alpha))


def nbar_from_shift(dressed_freq, bare_freq, two_chi):
    """Mean occupation from the Stark-shifted qubit frequency.

    A negative result is returned as is, with ``negative=True``; clipping it
    would bias anything fitted downstream.
    """
    if two_chi == 0:
        raise SingularityError("two_chi must be non-zero to convert a shift to an occupation")
    nbar = (dressed_freq - bare_freq) / two_chi
    return ShiftReadout(float(nbar), bool(nbar < 0))


def pure_dephasing_time(T1, T2):
    """``T_phi`` from ``1/T_phi = 1/T2 - 1/(2 T1)``."""
    if T1 <= 0 or T2 <= 0:
        raise ValueError("T1 and T2 must be positive")
    rate = 1.0 / T2 - 1.0 / (2.0 * T1)
    if rate <= 0:
        raise NoPureDephasingError(
            f"T2={T2:.6g} s >= 2*T1={2 * T1:.6g} s leaves no pure dephasing (T_phi infinite)"
        )
    return 1.0 / rate


def total_decoherence_rate(kappa1, kappa_phi):
    """``kappa1 / 2 + kappa_phi``, the time-domain total decoherence rate."""
    if kappa1 < 0 or kappa_phi < 0:
        raise ValueError("rates must be non-negative")
    return kappa1 / 2.0 + kappa_phi


def avoided_crossing_branches(omega_q_bare, omega_m, g):
    """Upper and lower single-excitation branches of the coupled qubit and mode.

    ``omega_pm = (omega_q + omega_m)/2 +- sqrt(delta^2/4 + g^2)``; accepts
    arrays for ``omega_q_bare``.
    """
    if np.any(np.asarray(g) < 0):
        raise ValueError("g must be >= 0")
    wq = np.asarray(omega_q_bare, dtype=float)
    mid = 0.5 * (wq + omega_m)
    half = np.hypot(0.5 * (wq - omega_m), g)
    upper, lower = mid + half, mid - half
    if upper.ndim == 0:
        return float(upper), float(lower)
    return upper, lower


def classify_dispersive_regime(two_chi, gamma_q, kappa):
    """``"weak"`` when ``|2 chi| < max(gamma_q, kappa)``, else ``"strong"``."""
    if gamma_q < 0 or kappa < 0:
        raise ValueError("rates must be non-negative")
    return WEAK if abs(two_chi) < max(gamma_q, kappa) else STRONG


@dataclass(frozen=True)
class QubitSpectrumModel:
    center: float
    fwhm: float
    amplitude: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError(f"fwhm must be > 0, got {self.fwhm!r}")


def lorentzian(x, center, fwhm, amplitude, offset):
    x = np.asarray(x, dtype=float)
    return amplitude / (1.0 + (2.0 * (x - center) / fwhm) ** 2) + offset


def stark_shifted_spectrum(model, two_chi, nbar, freq_axis):
    """Qubit Lorentzian moved to ``center + two_chi * nbar``."""
    return lorentzian(freq_axis, model.center + two_chi * nbar, model.fwhm, model.amplitude,
                      model.offset)
