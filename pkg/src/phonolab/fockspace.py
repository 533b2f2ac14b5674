"""
Truncated Fock-space linear algebra for a single bosonic mode.

Operators are plain dense ``numpy`` arrays of shape ``(dim, dim)``.  States
are wrapped in :class:`DensityMatrix`, which validates the physical
invariants (Hermitian, unit trace, positive semidefinite) on construction.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import (
    DimensionMismatchError,
    InvalidDimensionError,
    InvalidStateError,
    TruncationError,
)

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
POSITIVITY_TOL = -1e-8

# Largest cutoff any scenario may request; dense propagation beyond this is
# too slow to be useful.
MAX_DIM = 512


def _check_dim(dim):
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"Fock dimension must be an integer >= 2, got {dim!r}")
    return int(dim)


def required_dim(nbar_max):
    """Smallest cutoff satisfying ``dim >= n + 6*sqrt(n + 1) + 4``.

    ``nbar_max`` is the largest mean occupation a scenario can reach.
    """
    if nbar_max < 0 or not math.isfinite(nbar_max):
        raise TruncationError(f"cannot size a Fock space for nbar_max={nbar_max!r}")
    return max(2, math.ceil(nbar_max + 6.0 * math.sqrt(nbar_max + 1.0) + 4.0))


def make_annihilation(dim):
    """Annihilation operator with ``a[n, n+1] = sqrt(n+1)``."""
    dim = _check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def make_creation(dim):
    return make_annihilation(dim).conj().T


def make_number(dim):
    dim = _check_dim(dim)
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def identity(dim):
    return np.eye(_check_dim(dim), dtype=complex)


def commutator(a, b):
    return a @ b - b @ a


class DensityMatrix:
    """Validated density matrix of the truncated mode.

    The underlying array is copied and frozen, so instances can be shared
    freely between threads.

    Parameters
    ----------
    data : array_like
        Square complex matrix.
    validate : bool
        Check Hermiticity, trace and positivity (default ``True``).
    """

    __slots__ = ("_data",)

    def __init__(self, data, validate=True):
        arr = np.array(data, dtype=complex, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidDimensionError(f"density matrix must be square, got shape {arr.shape}")
        _check_dim(arr.shape[0])
        arr.setflags(write=False)
        self._data = arr
        if validate:
            self.check()

    @property
    def data(self):
        return self._data

    @property
    def dim(self):
        return self._data.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._data if dtype is None else self._data.astype(dtype)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, trace={self.trace().real:.12g})"

    def trace(self):
        return complex(np.trace(self._data))

    def violations(self):
        """Return ``(hermiticity, trace_error, min_eigenvalue)``."""
        rho = self._data
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        trace_err = abs(np.trace(rho) - 1.0)
        min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
        return herm, float(trace_err), min_eig

    def check(self):
        herm, trace_err, min_eig = self.violations()
        if herm > HERMITIAN_TOL:
            raise InvalidStateError(f"density matrix not Hermitian: max|rho - rho^H| = {herm:.3e}")
        if trace_err > TRACE_TOL:
            raise InvalidStateError(f"density matrix trace off by {trace_err:.3e}")
        if min_eig < POSITIVITY_TOL:
            raise InvalidStateError(f"density matrix not positive: min eigenvalue {min_eig:.3e}")
        return self


def fock_density(n, dim):
    """Projector onto Fock state ``|n><n|``."""
    dim = _check_dim(dim)
    if not 0 <= n < dim:
        raise InvalidDimensionError(f"Fock index {n} outside cutoff {dim}")
    rho = np.zeros((dim, dim), dtype=complex)
    rho[n, n] = 1.0
    return DensityMatrix(rho)


def vacuum(dim):
    return fock_density(0, dim)


def coherent_amplitudes(alpha, dim):
    """Truncated Fock amplitudes ``exp(-|a|^2/2) a^n / sqrt(n!)``, not renormalized."""
    dim = _check_dim(dim)
    n = np.arange(dim)
    alpha = complex(alpha)
    if alpha == 0:
        amps = np.zeros(dim, dtype=complex)
        amps[0] = 1.0
        return amps
    # log-space avoids overflow of alpha**n / sqrt(n!) at large n
    log_mag = -0.5 * abs(alpha) ** 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))


def make_coherent_density(alpha, dim):
    """Coherent state ``|alpha><alpha|`` renormalized after truncation.

    Raises
    ------
    TruncationError
        If ``dim`` is below the cutoff rule and the discarded Poisson tail
        exceeds 1e-12 (the rule is sufficient, not necessary; a vacuum fits
        in any cutoff).
    """
    dim = _check_dim(dim)
    nbar = abs(complex(alpha)) ** 2
    need = required_dim(nbar)
    if dim < need:
        tail = float(poisson.sf(dim - 1, nbar)) if nbar > 0 else 0.0
        if tail > 1e-12:
            raise TruncationError(
                f"dim={dim} too small for |alpha|^2={nbar:.6g}: cutoff rule needs {need} "
                f"(discarded probability {tail:.2e})"
            )
    psi = coherent_amplitudes(alpha, dim)
    psi = psi / np.linalg.norm(psi)
    return DensityMatrix(np.outer(psi, psi.conj()))


def expectation(op, rho):
    """``Tr(op @ rho)`` as a complex number.

    The imaginary part is kept: for a Hermitian ``op`` it measures numerical
    error and callers decide what to do with it.
    """
    op = np.asarray(op)
    data = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if op.shape != data.shape:
        raise DimensionMismatchError(f"operator shape {op.shape} does not match state shape {data.shape}")
    # Tr(A B) = sum_ij A_ij B_ji
    return complex(np.sum(op * data.T))
