"""
Piecewise-constant drive schedules and the rotating-frame drive Hamiltonian.

Amplitudes are complex drive rates in rad/s, times in seconds.  The
Hamiltonian is written in the frame rotating at the drive frequency, so a
detuned drive appears as a static ``-delta * n`` term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fockspace import make_annihilation, make_number

LITERAL_COSINE = "literal_cosine"
COMPLEX_PHASE = "complex_phase"
RAMSEY_MODES = (LITERAL_COSINE, COMPLEX_PHASE)

# Reduced phases are snapped to this grid so that phi and phi + 2*pi give
# bit-identical amplitudes despite the rounding in the addition.
_PHASE_QUANTUM = 2.0**-32


@dataclass(frozen=True)
class PulseSegment:
    start: float
    duration: float
    amplitude: complex

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration!r}")
        if self.start < 0:
            raise ValueError(f"segment start must be >= 0, got {self.start!r}")
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    @property
    def end(self):
        return self.start + self.duration


@dataclass(frozen=True)
class PulseSchedule:
    """Ordered, non-overlapping drive segments plus a frame detuning.

    The envelope is zero outside every segment.  Adjacent segments with equal
    amplitude are merged so equivalent schedules compare equal.
    """

    segments: tuple = ()
    detuning: float = 0.0
    total_span: float = field(default=None)

    def __post_init__(self):
        segs = sorted(self.segments, key=lambda s: s.start)
        for prev, nxt in zip(segs, segs[1:]):
            if nxt.start < prev.end - 1e-15 * max(1.0, abs(prev.end)):
                raise ValueError(f"overlapping segments at t={nxt.start!r}")
        merged = []
        for seg in segs:
            if merged and merged[-1].end == seg.start and merged[-1].amplitude == seg.amplitude:
                last = merged.pop()
                seg = PulseSegment(last.start, seg.end - last.start, seg.amplitude)
            merged.append(seg)
        object.__setattr__(self, "segments", tuple(merged))
        object.__setattr__(self, "detuning", float(self.detuning))
        span = max((s.end for s in merged), default=0.0)
        if self.total_span is None or self.total_span < span:
            object.__setattr__(self, "total_span", span)
        else:
            object.__setattr__(self, "total_span", float(self.total_span))

    def envelope_at(self, t):
        for seg in self.segments:
            if seg.start <= t < seg.end:
                return seg.amplitude
        return 0j

    def breakpoints(self):
        """Sorted times at which the envelope may jump."""
        pts = set()
        for seg in self.segments:
            pts.add(seg.start)
            pts.add(seg.end)
        return sorted(pts)

    def intervals(self, t_start, t_stop):
        """Split ``[t_start, t_stop]`` into sub-intervals of constant envelope.

        Yields ``(a, b, amplitude)``.
        """
        cuts = [t_start] + [p for p in self.breakpoints() if t_start < p < t_stop] + [t_stop]
        for a, b in zip(cuts, cuts[1:]):
            if b > a:
                yield a, b, self.envelope_at(0.5 * (a + b))

    def max_amplitude(self):
        return max((abs(s.amplitude) for s in self.segments), default=0.0)

    def drive_area(self):
        """Integral of ``|u(t)|``; bounds the coherent amplitude of a lossless mode."""
        return sum(abs(s.amplitude) * s.duration for s in self.segments)

    def with_detuning(self, detuning):
        return PulseSchedule(self.segments, detuning, self.total_span)


def ring_up_schedule(U, t_d):
    """Constant drive ``U`` on ``[0, t_d)``, zero afterwards."""
    if not t_d > 0:
        raise ValueError(f"drive length t_d must be > 0, got {t_d!r}")
    if U < 0:
        raise ValueError(f"drive rate U must be >= 0, got {U!r}")
    return PulseSchedule((PulseSegment(0.0, float(t_d), float(U)),), 0.0, float(t_d))


def reduce_phase(theta):
    """Wrap to ``[-pi, pi)`` and snap to a 2**-32 rad grid."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    return round(wrapped / _PHASE_QUANTUM) * _PHASE_QUANTUM


def _cos_sin(theta):
    # split off the nearest multiple of pi/2 so quarter turns give exact 0 and +-1
    k = round(theta / (0.5 * math.pi))
    r = round((theta - k * 0.5 * math.pi) / _PHASE_QUANTUM) * _PHASE_QUANTUM
    c, s = math.cos(r), math.sin(r)
    return ((c, s), (-s, c), (-c, -s), (s, -c))[k % 4]


def ramsey_amplitude(U, phase, mode=LITERAL_COSINE):
    c, s = _cos_sin(reduce_phase(phase))
    if mode == LITERAL_COSINE:
        return complex(U * c)
    if mode == COMPLEX_PHASE:
        return complex(U * c, U * s)
    raise ValueError(f"unknown Ramsey mode {mode!r}; expected one of {RAMSEY_MODES}")


def ramsey_schedule(U, t_d, tau, phi, phi0=0.0, mode=LITERAL_COSINE):
    """Two drives of length ``t_d`` separated by a free delay ``tau``.

    The second drive starts ``tau`` after the first one *ends* and has
    amplitude ``U cos(phi + phi0)`` (``literal_cosine``) or
    ``U exp(i(phi + phi0))`` (``complex_phase``).
    """
    if not t_d > 0:
        raise ValueError(f"drive length t_d must be > 0, got {t_d!r}")
    if U < 0 or tau < 0:
        raise ValueError("U and tau must be >= 0")
    second = ramsey_amplitude(U, phi + phi0, mode)
    segs = (
        PulseSegment(0.0, float(t_d), float(U)),
        PulseSegment(float(t_d + tau), float(t_d), second),
    )
    return PulseSchedule(segs, 0.0, float(2 * t_d + tau))


def drive_hamiltonian(u, detuning, dim):
    """``Re(u)(a + a^H) + Im(u)(i a^H - i a) - detuning * n``."""
    a = make_annihilation(dim)
    u = complex(u)
    # u a^H + conj(u) a expands to the quadrature form above
    H = u * a.conj().T + u.conjugate() * a
    if detuning:
        H = H - detuning * make_number(dim)
    return H


def hamiltonian_at(schedule, t, dim):
    return drive_hamiltonian(schedule.envelope_at(t), schedule.detuning, dim)
