"""
Adaptive Dormand-Prince 5(4) integrator for array-valued ODEs.

Works on arbitrary-shape real or complex ``numpy`` arrays, so density
matrices are integrated without flattening.  The solver lands exactly on
every requested output time (no interpolation), which keeps sampled states
as accurate as the step itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StiffnessError

# Butcher tableau, Dormand & Prince (1980)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_STAR = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _B_STAR

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ORDER = 5


@dataclass
class SolverStats:
    n_steps: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    h_min: float = np.inf
    h_max: float = 0.0

    def merge(self, other):
        self.n_steps += other.n_steps
        self.n_rejected += other.n_rejected
        self.n_rhs += other.n_rhs
        self.h_min = min(self.h_min, other.h_min)
        self.h_max = max(self.h_max, other.h_max)


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, rtol, atol, span):
    # Hairer, Norsett & Wanner, Solving ODEs I, sec. II.4
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 * span if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = f(t0 + h0, y0 + h0 * f0)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6 * span, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / ORDER)
    return min(100 * h0, h1, span)


def dopri54(f, t_span, y0, t_eval=None, rtol=1e-9, atol=1e-12, h0=None, max_steps=1_000_000):
    """Integrate ``dy/dt = f(t, y)`` over ``t_span`` with error control.

    Parameters
    ----------
    f : callable
        ``f(t, y) -> array`` with the shape of ``y``.
    t_span : (float, float)
        Start and end time; ``t_end > t_start``.
    y0 : ndarray
        Initial value (real or complex).
    t_eval : sequence of float, optional
        Sorted output times inside ``t_span``.  Defaults to the end point.
    rtol, atol : float
        Per-entry relative and absolute tolerances.
    h0 : float, optional
        First trial step; chosen automatically if omitted.

    Returns
    -------
    ys : list of ndarray
        Solution at each ``t_eval`` time.
    h_last : float
        Last accepted step size (handy for restarting the next interval).
    stats : SolverStats

    Raises
    ------
    StiffnessError
        If the step size underflows relative to ``t`` or ``max_steps`` is hit.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    y = np.array(y0, copy=True)
    stats = SolverStats()
    targets = [t1] if t_eval is None else [float(t) for t in t_eval]
    if any(b < a for a, b in zip(targets, targets[1:])):
        raise ValueError("t_eval must be sorted")
    if targets and (targets[0] < t0 or targets[-1] > t1 * (1 + 1e-15) + 1e-300):
        raise ValueError("t_eval outside t_span")

    out = []
    idx = 0
    while idx < len(targets) and targets[idx] <= t0:
        out.append(y.copy())
        idx += 1
    if idx == len(targets) or t1 <= t0:
        return out, (h0 or 0.0), stats

    t = t0
    k1 = f(t, y)
    stats.n_rhs += 1
    span = t1 - t0
    h = h0 if h0 else _initial_step(f, t, y, k1, rtol, atol, span)
    stats.n_rhs += 0 if h0 else 1
    eps = np.finfo(float).eps

    while idx < len(targets):
        target = targets[idx]
        h_min = 16 * eps * max(abs(t), abs(target))
        if h < h_min:
            raise StiffnessError(
                f"step size underflow at t={t:.6e} (h={h:.3e}); problem may be stiff "
                f"or the tolerances too tight",
                t=t,
                h=h,
            )
        if stats.n_steps + stats.n_rejected >= max_steps:
            raise StiffnessError(f"exceeded {max_steps} steps at t={t:.6e}", t=t, h=h)

        hit = t + h >= target - h_min
        step = target - t if hit else h

        ks = [k1]
        for i in range(1, 7):
            yi = y + step * sum(a * k for a, k in zip(_A[i], ks) if a != 0.0)
            ks.append(f(t + _C[i] * step, yi))
        stats.n_rhs += 6
        y_new = y + step * sum(b * k for b, k in zip(_B, ks) if b != 0.0)
        err = step * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
        err_norm = _error_norm(err, y, y_new, rtol, atol)
        if not np.isfinite(err_norm):
            err_norm = np.inf

        if err_norm <= 1.0:
            stats.n_steps += 1
            stats.h_min = min(stats.h_min, step)
            stats.h_max = max(stats.h_max, step)
            t = target if hit else t + step
            y = y_new
            k1 = ks[6]  # first-same-as-last
            factor = MAX_FACTOR if err_norm == 0 else min(MAX_FACTOR, SAFETY * err_norm ** (-1 / ORDER))
            if hit:
                out.append(y.copy())
                idx += 1
                # a clipped step says nothing about the natural step size
                h = max(h, step * factor) if step < h else step * factor
            else:
                h = step * factor
        else:
            stats.n_rejected += 1
            h = step * max(MIN_FACTOR, SAFETY * err_norm ** (-1 / ORDER)) if np.isfinite(err_norm) else step * MIN_FACTOR
    return out, h, stats
