"""
Nonlinear least-squares estimation of drive and decoherence rates.

:func:`optimize` is the generic two-stage minimizer (Nelder-Mead to find the
basin, then Levenberg-Marquardt with a forward-difference Jacobian).  The
``fit_*`` functions wrap it for the Lorentzian lineshape and for the
simulated experiments.  Inside the optimization loop the experiments are
evaluated with the exact moment equations; the converged model is then
re-checked against the full master-equation solve.

Units of reported parameters: ``U`` in rad/s, ``kappa1`` and ``kappa_phi``
in Hz (``kappa / 2 pi``), ``phi0`` in rad wrapped to ``(-pi, pi]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .dispersive import TWO_PI, DeviceParams, lorentzian, total_decoherence_rate
from .errors import (
    BoundViolationError,
    IntegrationAccuracyError,
    NonIdentifiableError,
    NonIdentifiableWarning,
    PreconditionError,
)
from .protocols import (
    LINDBLAD,
    RING_UP_RING_DOWN,
    ExperimentSeries,
    RamseyGrid,
    ramsey_moments,
    ring_up_ring_down_moments,
    simulate_ramsey,
    simulate_ring_up_ring_down,
)
from .pulses import LITERAL_COSINE

DEFAULT_BUDGET = 5000
VERIFY_RTOL = 1e-3

UNITS = {
    "U": "rad/s",
    "kappa1": "Hz",
    "kappa_phi": "Hz",
    "phi0": "rad",
    "t_d": "s",
}


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``sigmas`` are 1-sigma uncertainties from the linearized covariance; they
    are NaN when the normal matrix is singular (``uncertainties_available``
    is then False).  ``history`` holds the residual norm of every accepted
    iterate, in order.
    """

    params: dict
    sigmas: dict
    covariance: np.ndarray
    residual_norm: float
    n_evaluations: int
    converged: bool
    fixed: dict = field(default_factory=dict)
    message: str = ""
    history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    units: dict = field(default_factory=dict)

    @property
    def names(self):
        return list(self.params)

    @property
    def uncertainties_available(self):
        return bool(np.all(np.isfinite(self.covariance)))


class _BudgetExhausted(Exception):
    pass


class _Counted:
    def __init__(self, fn, budget):
        self.fn = fn
        self.budget = budget
        self.count = 0
        self.best = (np.inf, None)

    def __call__(self, x):
        if self.count >= self.budget:
            raise _BudgetExhausted
        self.count += 1
        r = np.asarray(self.fn(np.array(x, dtype=float)), dtype=float).ravel()
        cost = 0.5 * float(r @ r) if np.all(np.isfinite(r)) else np.inf
        if cost < self.best[0]:
            self.best = (cost, np.array(x, dtype=float))
        return r


def _fd_jacobian(f, x, r0, lower, upper):
    J = np.empty((r0.size, x.size))
    for k in range(x.size):
        h = max(1e-6 * abs(x[k]), 1e-9)
        if x[k] + h > upper[k]:
            h = -h
        xp = x.copy()
        xp[k] += h
        J[:, k] = (f(xp) - r0) / h
    return J


def _covariance(J, cost, n_res, scale):
    n_par = J.shape[1]
    A = J.T @ J
    try:
        if not np.all(np.isfinite(A)) or np.linalg.cond(A) > 1e14:
            raise np.linalg.LinAlgError
        cov = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        return np.full((n_par, n_par), np.nan)
    if scale and n_res > n_par:
        cov = cov * (2.0 * cost / (n_res - n_par))
    return 0.5 * (cov + cov.T)


def _levenberg_marquardt(f, x, lower, upper, history, max_iter=200, xtol=1e-12, ftol=1e-15, gtol=1e-14):
    r = f(x)
    cost = 0.5 * float(r @ r)
    lam = 1e-3
    J = _fd_jacobian(f, x, r, lower, upper)
    message = "maximum iterations reached"
    converged = False
    for _ in range(max_iter):
        g = J.T @ r
        if cost == 0.0 or np.max(np.abs(g)) <= gtol * max(cost, 1e-300) ** 0.5:
            converged, message = True, "gradient vanished"
            break
        A = J.T @ J
        d = np.maximum(np.diag(A), 1e-12 * max(np.max(np.diag(A)), 1e-300))
        while True:
            try:
                dx = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                dx = np.full_like(x, np.nan)
            x_new = np.clip(x + dx, lower, upper)
            r_new = f(x_new) if np.all(np.isfinite(x_new)) else np.full_like(r, np.nan)
            cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new < cost:
                break
            lam *= 10.0
            if lam > 1e16:
                return x, r, cost, True, "no further decrease possible"
        step = np.linalg.norm(x_new - x)
        drop = cost - cost_new
        x, r, cost = x_new, r_new, cost_new
        history.append(math.sqrt(2.0 * cost))
        lam = max(lam * 0.3, 1e-12)
        if step <= xtol * (np.linalg.norm(x) + xtol) or drop <= ftol * cost:
            converged, message = True, "step or reduction below tolerance"
            break
        J = _fd_jacobian(f, x, r, lower, upper)
    return x, r, cost, converged, message


def optimize(residual_fn, init, bounds=None, budget=DEFAULT_BUDGET, names=None, scale_covariance=True,
             simplex=True):
    """Minimize ``0.5 * ||residual_fn(x)||^2``.

    Parameters
    ----------
    residual_fn : callable
        Maps a parameter vector to a residual vector.
    init : sequence of float
        Starting point; must be finite and inside ``bounds``.
    bounds : sequence of (low, high), optional
        Box constraints; ``None`` entries mean unbounded.
    budget : int
        Maximum number of residual evaluations (Jacobian columns included).
    names : sequence of str, optional
        Parameter names for the result maps (default ``p0, p1, ...``).
    scale_covariance : bool
        Multiply the covariance by the reduced chi-square.
    simplex : bool
        Run the Nelder-Mead stage before Levenberg-Marquardt.

    Returns
    -------
    FitResult
        ``converged`` is False if the budget ran out.
    """
    x0 = np.array(init, dtype=float).ravel()
    if not np.all(np.isfinite(x0)):
        raise PreconditionError("initial parameters must be finite")
    names = list(names) if names is not None else [f"p{k}" for k in range(x0.size)]
    if bounds is None:
        bounds = [(None, None)] * x0.size
    lower = np.array([-np.inf if b[0] is None else b[0] for b in bounds], dtype=float)
    upper = np.array([np.inf if b[1] is None else b[1] for b in bounds], dtype=float)
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise PreconditionError(f"initial parameters {x0} outside bounds")

    f = _Counted(residual_fn, budget)
    history = []
    x = x0
    converged = False
    message = ""
    try:
        r0 = f(x0)
        history.append(float(np.linalg.norm(r0)))
        if simplex and x0.size > 0:
            def cost(q):
                r = f(q)
                return 0.5 * float(r @ r) if np.all(np.isfinite(r)) else np.inf

            def record(intermediate_result):
                norm = math.sqrt(2.0 * intermediate_result.fun)
                if norm < history[-1]:
                    history.append(norm)

            nm_bounds = None if np.all(~np.isfinite(lower)) and np.all(~np.isfinite(upper)) else \
                list(zip(lower, upper))
            # the simplex only has to reach the basin; Levenberg-Marquardt does the polishing
            cost0 = 0.5 * float(r0 @ r0) if np.all(np.isfinite(r0)) else 1.0
            res = minimize(cost, x0, method="Nelder-Mead", bounds=nm_bounds, callback=record,
                           options={"maxfev": max(budget // 2, 10), "xatol": 1e-6,
                                    "fatol": 1e-9 * max(cost0, 1e-300), "adaptive": x0.size > 2})
            x = np.array(res.x, dtype=float)
        x, r, cost_val, converged, message = _levenberg_marquardt(f, x, lower, upper, history)
        J = _fd_jacobian(f, x, r, lower, upper)
        cov = _covariance(J, cost_val, r.size, scale_covariance)
    except _BudgetExhausted:
        best_cost, best_x = f.best
        x = best_x if best_x is not None else x0
        f.budget = f.count + 1
        r = f(x)
        cost_val = 0.5 * float(r @ r)
        cov = np.full((x.size, x.size), np.nan)
        converged, message = False, f"evaluation budget of {budget} exhausted"

    sig = np.sqrt(np.clip(np.diag(cov), 0.0, None)) if np.all(np.isfinite(cov)) else np.full(x.size, np.nan)
    result = FitResult(
        params=dict(zip(names, map(float, x))),
        sigmas=dict(zip(names, map(float, sig))),
        covariance=cov,
        residual_norm=math.sqrt(2.0 * cost_val),
        n_evaluations=f.count,
        converged=converged,
        message=message,
        history=history,
    )
    if not result.uncertainties_available:
        result.warnings.append("normal matrix singular: uncertainties unavailable")
    return result


# -- parameter transforms -----------------------------------------------------

def wrap_phase(phi):
    """Wrap an angle to ``(-pi, pi]``."""
    return math.pi - ((math.pi - phi) % TWO_PI)


class _Transform:
    """Maps natural parameters to unconstrained optimizer coordinates.

    ``log`` parameters are optimized as ``log(p / scale)``; ``linear`` ones as
    ``(p - shift) / scale``.
    """

    def __init__(self, specs):
        self.specs = specs  # list of (name, kind, scale, shift)

    @property
    def names(self):
        return [s[0] for s in self.specs]

    def to_internal(self, natural):
        out = []
        for name, kind, scale, shift in self.specs:
            p = natural[name]
            if kind == "log":
                if not p > 0:
                    raise PreconditionError(f"{name} must be > 0 to start a fit, got {p!r}")
                out.append(math.log(p / scale))
            else:
                out.append((p - shift) / scale)
        return np.array(out)

    def to_natural(self, q):
        out = {}
        for (name, kind, scale, shift), v in zip(self.specs, q):
            out[name] = float(scale * math.exp(v) if kind == "log" else shift + scale * v)
        return out

    def derivative(self, q):
        d = []
        for (name, kind, scale, shift), v in zip(self.specs, q):
            d.append(scale * math.exp(v) if kind == "log" else scale)
        return np.array(d)


def _apply_transform(result, transform, fixed, extra_units=None):
    q = np.array([result.params[n] for n in transform.names])
    d = transform.derivative(q)
    cov = result.covariance * np.outer(d, d)
    natural = transform.to_natural(q)
    sig = np.sqrt(np.clip(np.diag(cov), 0.0, None)) if np.all(np.isfinite(cov)) else np.full(q.size, np.nan)
    result.params = natural
    result.sigmas = dict(zip(transform.names, map(float, sig)))
    result.covariance = cov
    result.fixed = dict(fixed)
    result.units = {n: (extra_units or UNITS).get(n, "") for n in list(natural) + list(fixed)}
    return result


def effective_sigma(sigma):
    """Weights for residuals: uniform when all sigma are zero, else zeros replaced
    by the smallest positive sigma."""
    sigma = np.asarray(sigma, dtype=float)
    if not np.any(sigma > 0):
        return np.ones_like(sigma)
    floor = np.min(sigma[sigma > 0])
    return np.where(sigma > 0, sigma, floor)


def _relative_mismatch(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b) / (np.abs(b) + 1e-12)))


def _verify(reference, check, what):
    diff = np.abs(np.asarray(check) - np.asarray(reference))
    bound = VERIFY_RTOL * np.abs(reference) + 1e-9
    worst = _relative_mismatch(check, reference)
    if np.any(diff > bound):
        raise IntegrationAccuracyError(
            f"{what}: full master-equation solve deviates from the moment model by "
            f"{worst:.3e} (relative), above {VERIFY_RTOL}"
        )
    return worst


# -- Lorentzian ---------------------------------------------------------------

def lorentzian_guess(x, y):
    """Initial ``(center, fwhm, amplitude, offset)`` from the raw points."""
    order = np.argsort(x)
    x, y = x[order], y[order]
    med = np.median(y)
    peak = (np.max(y) - med) >= (med - np.min(y))
    k = int(np.argmax(y) if peak else np.argmin(y))
    offset = float(np.min(y) if peak else np.max(y))
    amplitude = float(y[k] - offset)
    half = offset + 0.5 * amplitude
    above = (y >= half) if peak else (y <= half)
    lo = k
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = k
    while hi < x.size - 1 and above[hi + 1]:
        hi += 1
    spacing = float(np.median(np.diff(x)))
    fwhm = max(float(x[hi] - x[lo]), spacing)
    return float(x[k]), fwhm, amplitude, offset


def fit_lorentzian(series, budget=DEFAULT_BUDGET, scale_covariance=True):
    """Fit ``amplitude / (1 + (2 (x - center) / fwhm)^2) + offset``.

    Accepts an :class:`ExperimentSeries` (axis in Hz or any unit) and returns
    ``center``, ``fwhm``, ``amplitude`` and ``offset`` in axis/data units.
    The axis and data are rescaled internally so all optimizer coordinates
    are of order one.
    """
    x = np.asarray(series.axis, dtype=float)
    y = np.asarray(series.nbar, dtype=float)
    if x.size < 5:
        raise NonIdentifiableError(f"need at least 5 points for a Lorentzian fit, got {x.size}")
    if np.ptp(y) == 0 or not np.all(np.isfinite(y)):
        raise NonIdentifiableError("data are constant (or non-finite): lineshape not identifiable")
    sigma = effective_sigma(series.sigma)
    center, fwhm, amplitude, offset = lorentzian_guess(x, y)
    yscale = float(np.max(np.abs(y)))
    transform = _Transform([
        ("center", "linear", fwhm, center),
        ("fwhm", "log", fwhm, 0.0),
        ("amplitude", "linear", yscale, 0.0),
        ("offset", "linear", yscale, 0.0),
    ])
    q0 = transform.to_internal({"center": center, "fwhm": fwhm, "amplitude": amplitude, "offset": offset})

    def residuals(q):
        p = transform.to_natural(q)
        return (lorentzian(x, p["center"], p["fwhm"], p["amplitude"], p["offset"]) - y) / sigma

    result = optimize(residuals, q0, budget=budget, names=transform.names, scale_covariance=scale_covariance)
    _apply_transform(result, transform, {}, {"center": "axis", "fwhm": "axis", "amplitude": "data",
                                              "offset": "data"})
    return result


# -- ring-up / ring-down ------------------------------------------------------

def _natural_init(init, names):
    missing = [n for n in names if n not in init]
    if missing:
        raise PreconditionError(f"missing initial values for {missing}")
    return {n: float(init[n]) for n in names}


def fit_ring_up_ring_down(series, fixed=None, init=None, verify=True, budget=DEFAULT_BUDGET,
                          scale_covariance=True, dim=None):
    """Fit the drive rate ``U`` and loss rate ``kappa1`` to a ring-up/ring-down series.

    Parameters
    ----------
    series : ExperimentSeries
        Time axis in seconds.
    fixed : dict
        Must give ``t_d`` (or it is taken from ``series.meta``); ``kappa_phi``
        defaults to 0.  Fixing ``U`` or ``kappa1`` removes it from the fit.
    init : dict
        Starting ``U`` (rad/s) and ``kappa1`` (Hz).
    verify : bool
        Re-run the converged model through the full master equation and raise
        if it differs from the moment model by more than 1e-3 relative.

    Raises
    ------
    BoundViolationError
        If ``kappa1`` collapses towards zero.
    """
    if series.kind != RING_UP_RING_DOWN:
        raise PreconditionError(f"expected a {RING_UP_RING_DOWN} series, got {series.kind!r}")
    fixed = {"kappa_phi": 0.0, **(fixed or {})}
    if "t_d" not in fixed:
        if "t_d" not in series.meta:
            raise PreconditionError("t_d must be fixed (or present in the series metadata)")
        fixed["t_d"] = float(series.meta["t_d"])
    init = dict(init or {})
    free = [n for n in ("U", "kappa1") if n not in fixed]
    start = _natural_init(init, free)
    t_d = float(fixed["t_d"])
    t = np.asarray(series.axis, dtype=float)
    y = np.asarray(series.nbar, dtype=float)
    sigma = effective_sigma(series.sigma)

    notes = []
    if not np.any((t > 0) & (t < t_d)):
        notes.append("no points inside the drive window: U is constrained only through the "
                     "ring-down amplitude (degenerate design)")
    if not np.any(t > t_d):
        notes.append("no ring-down points: kappa1 is constrained only through the ring-up shape")
    for note in notes:
        warnings.warn(note, NonIdentifiableWarning, stacklevel=2)

    transform = _Transform([(n, "log", start[n], 0.0) for n in free])
    q0 = transform.to_internal(start)

    def model(p):
        U = p.get("U", fixed.get("U"))
        k1 = p.get("kappa1", fixed.get("kappa1"))
        return ring_up_ring_down_moments(U, t_d, t, TWO_PI * k1, TWO_PI * fixed["kappa_phi"])

    def residuals(q):
        return (model(transform.to_natural(q)) - y) / sigma

    result = optimize(residuals, q0, budget=budget, names=transform.names, scale_covariance=scale_covariance)
    _apply_transform(result, transform, fixed)
    result.warnings.extend(notes)
    k1 = result.params.get("kappa1", fixed.get("kappa1"))
    if not (k1 > 1e-9 * start.get("kappa1", k1) and math.isfinite(k1)):
        raise BoundViolationError(f"fit drove kappa1 to {k1!r} (must stay > 0)")
    if verify:
        U = result.params.get("U", fixed.get("U"))
        params = _params_for(k1, fixed["kappa_phi"])
        full = simulate_ring_up_ring_down(params, U, t_d, t, backend=LINDBLAD, dim=dim).nbar
        result.extras["verification"] = {
            "backend": LINDBLAD,
            "max_relative_deviation": _verify(model(result.params), full, "ring-up/ring-down fit"),
        }
    return result


def _params_for(kappa1_hz, kappa_phi_hz):
    # only the mode rates matter for the mechanics; the qubit entries are placeholders
    return DeviceParams(omega_m=1.0, omega_q=2.0, g=1.0, alpha=1.0, T1=1.0, T2=1.0,
                        kappa1=float(kappa1_hz), kappa_phi=float(kappa_phi_hz))


# -- Ramsey -------------------------------------------------------------------

def fit_ramsey(grid, fixed=None, init=None, mode=None, verify=True, budget=DEFAULT_BUDGET,
               scale_covariance=True, dim=None):
    """Joint fit of ``U``, ``kappa1``, ``kappa_phi`` and ``phi0`` to a Ramsey grid.

    ``fixed`` must provide ``t_d`` (or ``grid.meta`` must); any of the four
    free parameters may also be fixed.  ``mode`` defaults to the grid's
    metadata, then to ``literal_cosine``.

    Raises
    ------
    NonIdentifiableError
        If the grid has a single delay, which cannot separate loss from
        dephasing.
    """
    if np.unique(grid.taus).size < 2:
        raise NonIdentifiableError("a single delay value cannot separate kappa1 from kappa_phi")
    fixed = dict(fixed or {})
    if "t_d" not in fixed:
        if "t_d" not in grid.meta:
            raise PreconditionError("t_d must be fixed (or present in the grid metadata)")
        fixed["t_d"] = float(grid.meta["t_d"])
    mode = mode or grid.meta.get("mode", LITERAL_COSINE)
    init = dict(init or {})
    free = [n for n in ("U", "kappa1", "kappa_phi", "phi0") if n not in fixed]
    start = _natural_init(init, free)
    if "kappa_phi" in start and start["kappa_phi"] <= 0:
        start["kappa_phi"] = 1e-2 * start.get("kappa1", fixed.get("kappa1", 1.0))
    t_d = float(fixed["t_d"])
    y = np.asarray(grid.nbar, dtype=float).ravel()
    sigma = effective_sigma(np.asarray(grid.sigma).ravel())

    specs = []
    for n in free:
        specs.append((n, "linear", 1.0, 0.0) if n == "phi0" else (n, "log", start[n], 0.0))
    transform = _Transform(specs)
    q0 = transform.to_internal(start)

    def model(p):
        get = lambda n: p[n] if n in p else fixed[n]
        return ramsey_moments(get("U"), t_d, grid.taus, grid.phis, get("phi0"), mode,
                              TWO_PI * get("kappa1"), TWO_PI * get("kappa_phi")).ravel()

    def residuals(q):
        return (model(transform.to_natural(q)) - y) / sigma

    result = optimize(residuals, q0, budget=budget, names=transform.names, scale_covariance=scale_covariance)
    _apply_transform(result, transform, fixed)
    if "phi0" in result.params:
        result.params["phi0"] = wrap_phase(result.params["phi0"])
    params = {**fixed, **result.params}
    for name in ("kappa1", "kappa_phi"):
        if name in result.params and not (params[name] > 0 and math.isfinite(params[name])):
            raise BoundViolationError(f"fit drove {name} to {params[name]!r} (must stay > 0)")
    result.extras["mode"] = mode
    if verify:
        full = simulate_ramsey(_params_for(params["kappa1"], params["kappa_phi"]), params["U"], t_d,
                               grid.taus, grid.phis, params["phi0"], mode, backend=LINDBLAD, dim=dim)
        result.extras["verification"] = {
            "backend": LINDBLAD,
            "max_relative_deviation": _verify(model(result.params), full.nbar.ravel(), "Ramsey fit"),
        }
    return result


# -- time-domain vs spectroscopic decoherence ---------------------------------

def decoherence_cross_check(kappa1, kappa_phi, measured_fwhm=None):
    """Compare time-domain rates with a spectroscopic linewidth (all in Hz).

    Two conventions are reported side by side without choosing between them:

    * ``kappa_total``: ``kappa1/2 + kappa_phi``, the total decoherence rate
      quoted from time-domain measurements;
    * ``predicted_fwhm``: ``kappa1 + kappa_phi/2``, the FWHM of the
      steady-state ``nbar(delta)`` that the master equation (dephasing term
      with prefactor ``kappa_phi/2``) actually produces.
    """
    block = {
        "kappa1_hz": float(kappa1),
        "kappa_phi_hz": float(kappa_phi),
        "kappa_total_hz": total_decoherence_rate(kappa1, kappa_phi),
        "kappa_total_convention": "kappa1/2 + kappa_phi",
        "predicted_fwhm_hz": kappa1 + kappa_phi / 2.0,
        "predicted_fwhm_convention": "FWHM of steady-state nbar(delta) from the master equation: "
                                     "kappa1 + kappa_phi/2",
        "measured_fwhm_hz": None if measured_fwhm is None else float(measured_fwhm),
    }
    if measured_fwhm is not None:
        block["measured_minus_kappa_total_hz"] = float(measured_fwhm) - block["kappa_total_hz"]
        block["measured_minus_predicted_fwhm_hz"] = float(measured_fwhm) - block["predicted_fwhm_hz"]
    return block
