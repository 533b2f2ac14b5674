"""
End-to-end simulations of the three mode-characterization experiments.

* ring-up / ring-down: drive for ``t_d``, then free decay; one composite
  time axis.
* Ramsey: two drives of length ``t_d`` separated by a delay ``tau``, second
  drive phase-shifted by ``phi + phi0``.
* quasi-CW spectroscopy: drive of length ``t_d`` at detuning ``delta``.

Each protocol has two backends: ``"lindblad"`` integrates the full density
matrix, ``"moments"`` propagates the closed first/second-moment equations
exactly.  Under a linear drive the moment equations are exact, so the two
must agree; :func:`moment_oracle` exposes the moment route directly.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .dispersive import TWO_PI
from .errors import TruncationError
from .fockspace import MAX_DIM, required_dim, vacuum
from .integrate import dopri54
from .lindblad import DEFAULT_ATOL, DEFAULT_RTOL, dephasing, evolve, loss
from .pulses import LITERAL_COSINE, ramsey_amplitude, ramsey_schedule, ring_up_schedule

RING_UP_RING_DOWN = "ring_up_ring_down"
SPECTROSCOPY = "spectroscopy"
SERIES_KINDS = (RING_UP_RING_DOWN, SPECTROSCOPY)

LINDBLAD = "lindblad"
MOMENTS = "moments"


@dataclass
class ExperimentSeries:
    """Occupations ``nbar`` with 1-sigma errors along a time or frequency axis.

    ``axis`` is in seconds for ring-up/ring-down and in Hz (detuning) for
    spectroscopy.  ``meta`` carries protocol settings such as ``t_d``.
    """

    axis: np.ndarray
    nbar: np.ndarray
    sigma: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=float)
        self.nbar = np.asarray(self.nbar, dtype=float)
        self.sigma = np.zeros_like(self.nbar) if self.sigma is None else np.asarray(self.sigma, dtype=float)
        if not (self.axis.shape == self.nbar.shape == self.sigma.shape) or self.axis.ndim != 1:
            raise ValueError("axis, nbar and sigma must be 1-D arrays of equal length")
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be >= 0")
        if self.kind not in SERIES_KINDS:
            raise ValueError(f"unknown series kind {self.kind!r}")

    def __len__(self):
        return self.axis.size


@dataclass
class RamseyGrid:
    """Occupations on a ``(tau, phi)`` grid; ``nbar[i, j]`` is at ``taus[i], phis[j]``."""

    taus: np.ndarray
    phis: np.ndarray
    nbar: np.ndarray
    sigma: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.phis = np.asarray(self.phis, dtype=float)
        self.nbar = np.asarray(self.nbar, dtype=float)
        self.sigma = np.zeros_like(self.nbar) if self.sigma is None else np.asarray(self.sigma, dtype=float)
        shape = (self.taus.size, self.phis.size)
        if self.nbar.shape != shape or self.sigma.shape != shape:
            raise ValueError(f"nbar and sigma must have shape {shape}")
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be >= 0")


def worker_count():
    """Threads for sweep evaluation from ``PHONOLAB_THREADS`` (0 = all cores)."""
    raw = os.environ.get("PHONOLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def _map(fn, items, workers=None):
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- truncation ---------------------------------------------------------------

def nbar_upper_bound(drive_max, kappa1, drive_area=np.inf):
    """Largest mean occupation reachable from vacuum.

    ``(2 U / kappa1)^2`` bounds any drive with ``|u| <= U``; the squared
    drive area bounds it as well and stays finite without loss.
    """
    bound = np.inf
    if kappa1 > 0:
        bound = (2.0 * drive_max / kappa1) ** 2
    return float(min(bound, drive_area**2))


def choose_dim(nbar_max, dim_override=None):
    need = required_dim(nbar_max)
    if dim_override is not None:
        if dim_override < need:
            raise TruncationError(
                f"dim_override={dim_override} below cutoff rule {need} for nbar_max={nbar_max:.4g}"
            )
        return int(dim_override)
    if need > MAX_DIM:
        raise TruncationError(f"scenario needs dim={need} (nbar_max={nbar_max:.4g}); limit is {MAX_DIM}")
    return need


def _dissipators(kappa1, kappa_phi):
    return [loss(kappa1), dephasing(kappa_phi)]


# -- moment equations ---------------------------------------------------------

def _moment_generator(u, delta, kappa1, kappa_phi):
    """Constant-coefficient matrix for ``y = (a, conj(a), n, 1)``.

    a'  = -i u - (kappa1/2 + kappa_phi/4 - i delta) a
    n'  = -kappa1 n - 2 Im(conj(u) a)
    """
    u = np.asarray(u, dtype=complex)
    shape = np.broadcast_shapes(u.shape, np.shape(delta), np.shape(kappa1), np.shape(kappa_phi))
    u = np.broadcast_to(u, shape)
    gamma = np.broadcast_to(0.5 * np.asarray(kappa1) + 0.25 * np.asarray(kappa_phi)
                            - 1j * np.asarray(delta), shape)
    k1 = np.broadcast_to(np.asarray(kappa1, dtype=float), shape)
    M = np.zeros(shape + (4, 4), dtype=complex)
    M[..., 0, 0] = -gamma
    M[..., 0, 3] = -1j * u
    M[..., 1, 1] = -np.conj(gamma)
    M[..., 1, 3] = 1j * np.conj(u)
    M[..., 2, 0] = 1j * np.conj(u)
    M[..., 2, 1] = -1j * u
    M[..., 2, 2] = -k1
    return M


def _exprel(z):
    """``(exp(z) - 1) / z`` for complex arrays, accurate near 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0 + z**3 / 24.0, np.expm1(safe) / safe)


def _propagate_expm(a0, n0, u, dt, delta, kappa1, kappa_phi):
    M = _moment_generator(u, delta, kappa1, kappa_phi)
    dt = np.asarray(dt, dtype=float)
    shape = np.broadcast_shapes(M.shape[:-2], dt.shape, np.shape(a0), np.shape(n0))
    M = np.broadcast_to(M, shape + (4, 4))
    P = expm(M * np.broadcast_to(dt, shape)[..., None, None])
    a0 = np.broadcast_to(np.asarray(a0, dtype=complex), shape)
    n0 = np.broadcast_to(np.asarray(n0, dtype=float), shape)
    y0 = np.stack([a0, np.conj(a0), n0.astype(complex), np.ones(shape, dtype=complex)], axis=-1)
    y = np.einsum("...ij,...j->...i", P, y0)
    return y[..., 0], y[..., 2].real


def _propagate_closed(a0, n0, u, dt, delta, kappa1, kappa_phi):
    # a(t) = a0 e^{-g t} - i u t E(-g t), with g = kappa1/2 + kappa_phi/4 - i delta
    # n(t) = n0 e^{-k t} - 2 Im(conj(u) a0 p2) + 2 |u|^2 Re(chi), where
    #   p1 = int_0^t e^{-k(t-s)} ds, p2 = int_0^t e^{-k(t-s)} e^{-g s} ds, chi = (p1 - p2) / g
    a0, n0, u, t, delta, k, kphi = np.broadcast_arrays(
        np.asarray(a0, dtype=complex), np.asarray(n0, dtype=float), np.asarray(u, dtype=complex),
        np.asarray(dt, dtype=float), np.asarray(delta, dtype=float), np.asarray(kappa1, dtype=float),
        np.asarray(kappa_phi, dtype=float))
    g = 0.5 * k + 0.25 * kphi - 1j * delta
    decay_a = np.exp(-g * t)
    decay_n = np.exp(-k * t)
    a = a0 * decay_a - 1j * u * t * _exprel(-g * t)
    p1 = t * _exprel(-k * t)
    p2 = decay_n * t * _exprel((k - g) * t)
    degenerate = np.abs(g) * t < 1e-6
    g_safe = np.where(degenerate, 1.0, g)
    chi = (p1 - p2) / g_safe
    n = n0 * decay_n - 2.0 * (np.conj(u) * a0 * p2).imag + 2.0 * np.abs(u) ** 2 * chi.real
    if np.any(degenerate & (t > 0)):
        # nearly lossless, resonant and short: the divided difference above cancels badly
        idx = degenerate & (t > 0)
        a_e, n_e = _propagate_expm(a0[idx], n0[idx], u[idx], t[idx], delta[idx], k[idx], kphi[idx])
        a = np.array(a, dtype=complex)
        n = np.array(n, dtype=float)
        a[idx], n[idx] = a_e, n_e
    return a, n


def propagate_moments(a0, n0, u, dt, delta, kappa1, kappa_phi, method="closed"):
    """Exact moment propagation over a constant-drive interval of length ``dt``.

    All arguments broadcast; rates in rad/s.  Returns ``(a, n)``.

    ``method="closed"`` evaluates the elementary closed-form solution;
    ``method="expm"`` exponentiates the 4x4 generator for ``(a, conj(a), n, 1)``.
    The two are independent routes to the same numbers.
    """
    if method == "closed":
        return _propagate_closed(a0, n0, u, dt, delta, kappa1, kappa_phi)
    if method == "expm":
        return _propagate_expm(a0, n0, u, dt, delta, kappa1, kappa_phi)
    raise ValueError(f"unknown method {method!r}")


def _moment_rhs(u, delta, kappa1, kappa_phi):
    gamma = 0.5 * kappa1 + 0.25 * kappa_phi - 1j * delta
    u = complex(u)

    def rhs(t, y):
        a, n = y[0], y[1]
        return np.array([-1j * u - gamma * a, -kappa1 * n.real - 2.0 * (np.conj(u) * a).imag])

    return rhs


def moment_oracle(schedule, kappa1, kappa_phi, times, a0=0j, n0=None, method="rk",
                  rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Mean field ``<a>`` and occupation ``nbar`` from the closed moment equations.

    Parameters
    ----------
    schedule : PulseSchedule
    kappa1, kappa_phi : float
        Loss and dephasing rates in rad/s, same conventions as the master
        equation.
    times : sequence of float
        Sorted sample times; the first is the start time.
    a0, n0 : complex, float
        Initial moments; ``n0`` defaults to ``|a0|^2`` (a coherent state).
    method : {"rk", "exact"}
        ``"rk"`` integrates the two scalar ODEs with the Dormand-Prince pair
        used by :func:`phonolab.lindblad.evolve`; ``"exact"`` applies the
        matrix exponential of each constant-drive interval.  The vectorized
        protocol models use a third route, the closed form in
        :func:`propagate_moments`.

    Returns
    -------
    a : ndarray of complex
    nbar : ndarray of float
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted")
    a = complex(a0)
    n = abs(a) ** 2 if n0 is None else float(n0)
    out_a, out_n = [], []
    pending = list(times)
    t_start, t_stop = float(times[0]), float(times[-1])
    while pending and pending[0] <= t_start:
        out_a.append(a)
        out_n.append(n)
        pending.pop(0)
    h = None
    for lo, hi, u in schedule.intervals(t_start, t_stop):
        inside = []
        while pending and pending[0] <= hi:
            inside.append(pending.pop(0))
        if method == "exact":
            dts = np.array(inside + [hi]) - lo
            aa, nn = propagate_moments(a, n, u, dts, schedule.detuning, kappa1, kappa_phi, method="expm")
            out_a.extend(aa[:-1])
            out_n.extend(nn[:-1])
            a, n = complex(aa[-1]), float(nn[-1])
        elif method == "rk":
            rhs = _moment_rhs(u, schedule.detuning, kappa1, kappa_phi)
            ys, h, _ = dopri54(rhs, (lo, hi), np.array([a, n], dtype=complex), t_eval=inside + [hi],
                               rtol=rtol, atol=atol, h0=h)
            out_a.extend(y[0] for y in ys[:-1])
            out_n.extend(y[1].real for y in ys[:-1])
            a, n = complex(ys[-1][0]), float(ys[-1][1].real)
        else:
            raise ValueError(f"unknown method {method!r}")
    return np.array(out_a, dtype=complex), np.array(out_n, dtype=float)


# -- protocols ----------------------------------------------------------------

def _rates(params):
    return params.kappa1_angular, params.kappa_phi_angular


def ring_up_ring_down_moments(U, t_d, times, kappa1, kappa_phi):
    """Vectorized exact ``nbar`` for the ring-up/ring-down axis (rates in rad/s)."""
    times = np.asarray(times, dtype=float)
    drive_t = np.minimum(times, t_d)
    a1, n1 = propagate_moments(0j, 0.0, U, drive_t, 0.0, kappa1, kappa_phi)
    free_t = np.maximum(times - t_d, 0.0)
    _, n2 = propagate_moments(a1, n1, 0.0, free_t, 0.0, kappa1, kappa_phi)
    return n2


def simulate_ring_up_ring_down(params, U, t_d, times, backend=LINDBLAD, dim=None,
                               rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Composite ring-up/ring-down series.

    For ``t < t_d`` a point is the occupation at the end of a drive of length
    ``t``; for ``t >= t_d`` it is the occupation after a drive of ``t_d``
    followed by free evolution for ``t - t_d``.  Both are samples of one
    trajectory driven for ``t_d``, which is how they are computed.

    ``U`` is the drive rate in rad/s; loss and dephasing come from ``params``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be >= 0")
    kappa1, kappa_phi = _rates(params)
    schedule = ring_up_schedule(U, t_d)
    size = choose_dim(nbar_upper_bound(U, kappa1, U * t_d), dim)
    meta = {"t_d": float(t_d), "U": float(U), "dim": size}
    if backend == MOMENTS:
        nbar = ring_up_ring_down_moments(U, t_d, times, kappa1, kappa_phi)
        return ExperimentSeries(times, nbar, None, RING_UP_RING_DOWN, meta)
    if backend != LINDBLAD:
        raise ValueError(f"unknown backend {backend!r}")
    grid = np.unique(np.concatenate([[0.0], times]))
    traj = evolve(vacuum(size), schedule, _dissipators(kappa1, kappa_phi), grid, rtol=rtol, atol=atol)
    nbar = traj.nbar[np.searchsorted(grid, times)]
    meta["solver_steps"] = traj.stats.n_steps
    return ExperimentSeries(times, nbar, None, RING_UP_RING_DOWN, meta)


def ramsey_moments(U, t_d, taus, phis, phi0, mode, kappa1, kappa_phi):
    """Vectorized exact Ramsey grid (rates in rad/s)."""
    taus = np.asarray(taus, dtype=float)
    phis = np.asarray(phis, dtype=float)
    a1, n1 = propagate_moments(0j, 0.0, U, t_d, 0.0, kappa1, kappa_phi)
    a2, n2 = propagate_moments(a1, n1, 0.0, taus, 0.0, kappa1, kappa_phi)
    second = np.array([ramsey_amplitude(U, p + phi0, mode) for p in phis])
    _, n3 = propagate_moments(a2[:, None], n2[:, None], second[None, :], t_d, 0.0, kappa1, kappa_phi)
    return n3


def simulate_ramsey(params, U, t_d, taus, phis, phi0=0.0, mode=LITERAL_COSINE, backend=LINDBLAD,
                    dim=None, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, workers=None):
    """Occupation right after the second Ramsey drive, on the ``(tau, phi)`` grid.

    The first drive and the free delay are shared by every phase, so the
    Lindblad backend integrates them once and branches only for the second
    drive of each grid point.
    """
    taus = np.asarray(taus, dtype=float)
    phis = np.asarray(phis, dtype=float)
    if np.any(taus < 0):
        raise ValueError("taus must be >= 0")
    kappa1, kappa_phi = _rates(params)
    size = choose_dim(nbar_upper_bound(U, kappa1, 2.0 * U * t_d), dim)
    meta = {"t_d": float(t_d), "U": float(U), "phi0": float(phi0), "mode": mode, "dim": size}
    if backend == MOMENTS:
        nbar = ramsey_moments(U, t_d, taus, phis, phi0, mode, kappa1, kappa_phi)
        return RamseyGrid(taus, phis, nbar, None, meta)
    if backend != LINDBLAD:
        raise ValueError(f"unknown backend {backend!r}")

    diss = _dissipators(kappa1, kappa_phi)
    first = ring_up_schedule(U, t_d)
    uniq_taus = np.unique(taus)
    traj = evolve(vacuum(size), first, diss, np.unique(np.concatenate([[0.0, t_d], t_d + uniq_taus])),
                  rtol=rtol, atol=atol)
    lookup = {float(t): traj.state(k) for k, t in enumerate(traj.times)}

    def point(ij):
        i, j = ij
        tau = taus[i]
        sched = ramsey_schedule(U, t_d, tau, phis[j], phi0, mode)
        start = t_d + tau
        rho = lookup[float(start)]
        tr = evolve(rho, sched, diss, [start, start + t_d], rtol=rtol, atol=atol)
        return tr.nbar[-1]

    cells = [(i, j) for i in range(taus.size) for j in range(phis.size)]
    values = _map(point, cells, workers)
    nbar = np.array(values, dtype=float).reshape(taus.size, phis.size)
    return RamseyGrid(taus, phis, nbar, None, meta)


def spectroscopy_moments(U, t_d, deltas_hz, kappa1, kappa_phi):
    deltas = TWO_PI * np.asarray(deltas_hz, dtype=float)
    _, n = propagate_moments(0j, 0.0, U, t_d, deltas, kappa1, kappa_phi)
    return n


def simulate_spectroscopy(params, U, t_d, deltas, backend=LINDBLAD, dim=None,
                          rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, workers=None):
    """Occupation at the end of a drive of length ``t_d`` versus detuning (Hz)."""
    deltas = np.asarray(deltas, dtype=float)
    kappa1, kappa_phi = _rates(params)
    size = choose_dim(nbar_upper_bound(U, kappa1, U * t_d), dim)
    meta = {"t_d": float(t_d), "U": float(U), "dim": size}
    if backend == MOMENTS:
        return ExperimentSeries(deltas, spectroscopy_moments(U, t_d, deltas, kappa1, kappa_phi),
                                None, SPECTROSCOPY, meta)
    if backend != LINDBLAD:
        raise ValueError(f"unknown backend {backend!r}")
    diss = _dissipators(kappa1, kappa_phi)
    base = ring_up_schedule(U, t_d)

    def point(d):
        tr = evolve(vacuum(size), base.with_detuning(TWO_PI * d), diss, [0.0, t_d], rtol=rtol, atol=atol)
        return tr.nbar[-1]

    nbar = np.array(_map(point, list(deltas), workers), dtype=float)
    return ExperimentSeries(deltas, nbar, None, SPECTROSCOPY, meta)
