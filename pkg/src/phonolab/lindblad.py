"""
Master-equation evolution of the driven, lossy, dephasing mode.

The generator is

    drho/dt = -i[H, rho] + kappa1 D[a] rho + (kappa_phi / 2) D[n] rho

with ``D[L] rho = L rho L^H - {L^H L, rho} / 2``.  The dephasing channel
stores ``kappa_phi`` and applies the factor 1/2 itself, so coherences
``rho_nm`` decay at ``kappa_phi (n - m)^2 / 4``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    IntegrationAccuracyError,
    NonHermitianError,
)
from .fockspace import (
    HERMITIAN_TOL,
    POSITIVITY_TOL,
    TRACE_TOL,
    DensityMatrix,
    make_annihilation,
    make_number,
)
from .integrate import SolverStats, dopri54
from .pulses import drive_hamiltonian

LOSS = "loss"
DEPHASING = "dephasing"

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12


@dataclass(frozen=True)
class DissipatorSpec:
    channel: str
    rate: float

    def __post_init__(self):
        if self.channel not in (LOSS, DEPHASING):
            raise ValueError(f"unknown dissipator channel {self.channel!r}")
        if not self.rate >= 0:
            raise ValueError(f"dissipator rate must be >= 0, got {self.rate!r}")

    def operator(self, dim):
        return make_annihilation(dim) if self.channel == LOSS else make_number(dim)

    @property
    def prefactor(self):
        return self.rate if self.channel == LOSS else 0.5 * self.rate


def loss(rate):
    return DissipatorSpec(LOSS, rate)


def dephasing(rate):
    return DissipatorSpec(DEPHASING, rate)


def _hermitian_defect(H):
    return float(np.max(np.abs(H - H.conj().T))) if H.size else 0.0


class Generator:
    """Precomputed right-hand side for a fixed Hamiltonian and dissipator set.

    Uses ``-i (H_eff rho - rho H_eff^H) + sum_k c_k L_k rho L_k^H`` with
    ``H_eff = H - (i/2) sum_k c_k L_k^H L_k``.  Both products are formed
    explicitly: writing the second as the adjoint of the first assumes a
    Hermitian ``rho`` and lets roundoff in its anti-Hermitian part grow.
    """

    def __init__(self, H, dissipators, dim):
        self.dim = dim
        heff = np.array(H, dtype=complex, copy=True)
        self._jumps = []
        self._diag_weights = np.zeros((dim, dim))
        for spec in dissipators:
            c = spec.prefactor
            if c == 0:
                continue
            L = spec.operator(dim)
            heff -= 0.5j * c * (L.conj().T @ L)
            if spec.channel == DEPHASING:
                # L = diag(n): L rho L^H = rho * n n^T elementwise
                n = np.arange(dim, dtype=float)
                self._diag_weights += c * np.outer(n, n)
            else:
                self._jumps.append((c, L, L.conj().T))
        self._minus_i_heff = -1j * heff
        self._i_heff_dag = 1j * heff.conj().T
        self._has_diag = bool(np.any(self._diag_weights))

    def __call__(self, t, rho):
        out = self._minus_i_heff @ rho + rho @ self._i_heff_dag
        for c, L, Ld in self._jumps:
            out += c * (L @ rho @ Ld)
        if self._has_diag:
            out += self._diag_weights * rho
        return out


def lindblad_rhs(rho, H, dissipators):
    """Evaluate the master-equation generator at ``rho``.

    Raises
    ------
    NonHermitianError
        If ``H`` deviates from Hermitian by more than 1e-10 (relative to its
        largest entry when that exceeds 1).
    """
    data = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    H = np.asarray(H, dtype=complex)
    if H.shape != data.shape:
        raise DimensionMismatchError(f"H shape {H.shape} does not match rho shape {data.shape}")
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    defect = _hermitian_defect(H)
    if defect > HERMITIAN_TOL * scale:
        raise NonHermitianError(f"Hamiltonian is not Hermitian (defect {defect:.3e})")
    return Generator(H, dissipators, data.shape[0])(0.0, data)


@dataclass
class Trajectory:
    """Sampled states and observables of one evolution.

    ``observables`` always contains ``"nbar"`` and ``"a"`` as complex arrays.
    """

    times: np.ndarray
    states: np.ndarray
    observables: dict = field(default_factory=dict)
    stats: SolverStats = field(default_factory=SolverStats)

    def __len__(self):
        return len(self.times)

    @property
    def nbar(self):
        return self.observables["nbar"].real

    def state(self, i):
        return DensityMatrix(self.states[i], validate=False)

    def max_violations(self):
        """Worst ``(trace_error, hermiticity, -min_eigenvalue)`` over all samples."""
        worst = [0.0, 0.0, 0.0]
        for rho in self.states:
            worst[0] = max(worst[0], abs(np.trace(rho) - 1.0))
            worst[1] = max(worst[1], float(np.max(np.abs(rho - rho.conj().T))))
            worst[2] = max(worst[2], -float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]))
        return tuple(worst)


def _check_samples(states, times):
    for rho, t in zip(states, times):
        trace_err = abs(np.trace(rho) - 1.0)
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
        if trace_err > TRACE_TOL or herm > HERMITIAN_TOL or min_eig < POSITIVITY_TOL:
            raise IntegrationAccuracyError(
                f"state invariants violated at t={t:.6e}: trace error {trace_err:.2e}, "
                f"hermiticity {herm:.2e}, min eigenvalue {min_eig:.2e}"
            )


def evolve(rho0, schedule, dissipators, sample_times, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
           check=True):
    """Integrate the master equation under a piecewise-constant drive.

    The integration restarts exactly at every envelope discontinuity, so each
    sub-interval has a constant generator.  ``sample_times`` must be sorted;
    the first entry is the start time (normally 0) at which ``rho0`` is given.

    Parameters
    ----------
    rho0 : DensityMatrix
    schedule : PulseSchedule
    dissipators : list of DissipatorSpec
    sample_times : sequence of float
    rtol, atol : float
        Per-entry tolerances of the Dormand-Prince 5(4) pair.
    check : bool
        Validate density-matrix invariants at every sample.

    Returns
    -------
    Trajectory

    Raises
    ------
    StiffnessError
        Step size underflow inside the integrator.
    IntegrationAccuracyError
        A sampled state breaks the trace, Hermiticity or positivity bounds.
    """
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("sample_times must be a non-empty 1-D sequence")
    if np.any(np.diff(times) < 0):
        raise ValueError("sample_times must be monotonically increasing")
    dim = rho0.dim
    a = make_annihilation(dim)
    number = make_number(dim)

    rho = np.array(rho0.data, dtype=complex, copy=True)
    states = []
    stats = SolverStats()
    t_start, t_stop = float(times[0]), float(times[-1])
    pending = list(times)
    while pending and pending[0] <= t_start:
        states.append(rho.copy())
        pending.pop(0)

    h = None
    for lo, hi, u in schedule.intervals(t_start, t_stop):
        gen = Generator(drive_hamiltonian(u, schedule.detuning, dim), dissipators, dim)
        inside = []
        while pending and pending[0] <= hi:
            inside.append(pending.pop(0))
        ends_on_sample = bool(inside) and inside[-1] == hi
        t_eval = inside if ends_on_sample else inside + [hi]
        ys, h, st = dopri54(gen, (lo, hi), rho, t_eval=t_eval, rtol=rtol, atol=atol, h0=h)
        stats.merge(st)
        states.extend(ys if ends_on_sample else ys[:-1])
        rho = ys[-1]

    states = np.array(states)
    if check:
        _check_samples(states, times)
    nbar = np.einsum("ij,tji->t", number, states)
    amean = np.einsum("ij,tji->t", a, states)
    return Trajectory(times, states, {"nbar": nbar, "a": amean}, stats)
