"""
Run configuration (JSON), synthetic noise, and data files (CSV).

Config files give every frequency in Hz (``omega / 2 pi``); the drive rate
``U`` is read according to ``drive.u_convention``:

* ``"angular"`` (default): the number *is* the angular rate in rad/s, so
  "4.35 MHz" means 4.35e6 rad/s;
* ``"cyclic"``: the number is ``U / 2 pi`` in Hz.

CSV layout (UTF-8, ``\\n`` line endings, 17 significant digits)::

    # phonolab schema_version=1 kind=ring_up_ring_down t_d=2e-06
    axis,nbar,sigma
    ...

Ramsey grids are written in long form with columns ``tau,phi,nbar,sigma``,
tau-major.  The leading ``#`` line is optional when reading.

Noise is drawn from numpy's Philox4x64-10 counter-based generator seeded
with the configured 64-bit seed, so streams are reproducible across
platforms.
"""
from __future__ import annotations

import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .dispersive import TWO_PI, DeviceParams
from .errors import ConfigError, DataFormatError
from .lindblad import DEFAULT_ATOL, DEFAULT_RTOL
from .protocols import RING_UP_RING_DOWN, SERIES_KINDS, ExperimentSeries, RamseyGrid

SCHEMA_VERSION = 1
PROTOCOLS = ("ringupdown", "ramsey", "spectroscopy")
REQUIRED_AXES = {"ringupdown": ("times",), "ramsey": ("taus", "phis"), "spectroscopy": ("deltas",)}

SERIES_HEADER = ("axis", "nbar", "sigma")
GRID_HEADER = ("tau", "phi", "nbar", "sigma")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DeviceConfig(_Strict):
    omega_m: float = Field(gt=0)
    omega_q: float = Field(gt=0)
    g: float = Field(gt=0)
    alpha: float = Field(gt=0)
    T1: float = Field(gt=0)
    T2: float = Field(gt=0)
    kappa1: float = Field(ge=0)
    kappa_phi: float = Field(ge=0)
    cal_V_to_U: float = Field(default=1.0, gt=0)
    metadata: dict[str, Union[float, str]] = Field(default_factory=dict)

    def to_params(self):
        return DeviceParams(self.omega_m, self.omega_q, self.g, self.alpha, self.T1, self.T2,
                            self.kappa1, self.kappa_phi, self.cal_V_to_U, dict(self.metadata))


class LinSpace(_Strict):
    start: float
    stop: float
    num: int = Field(ge=1)

    def values(self):
        return np.linspace(self.start, self.stop, self.num)


Axis = Union[LinSpace, list[float]]


def axis_values(axis):
    values = axis.values() if isinstance(axis, LinSpace) else np.asarray(axis, dtype=float)
    return values


class DriveConfig(_Strict):
    U: Optional[float] = Field(default=None, ge=0)
    V: Optional[float] = Field(default=None, ge=0)
    u_convention: Literal["angular", "cyclic"] = "angular"

    @model_validator(mode="after")
    def _one_source(self):
        if (self.U is None) == (self.V is None):
            raise ValueError("give exactly one of U (drive rate) or V (drive amplitude)")
        return self

    def rate(self, device):
        """Drive rate in rad/s."""
        if self.U is not None:
            return u_to_angular(self.U, self.u_convention)
        return self.V * device.cal_V_to_U


def u_to_angular(value, convention):
    return float(value) if convention == "angular" else TWO_PI * float(value)


class NoiseConfig(_Strict):
    sigma_abs: float = Field(default=0.0, ge=0)
    sigma_rel: float = Field(default=0.0, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)


class SolverConfig(_Strict):
    rel_tol: float = Field(default=DEFAULT_RTOL, gt=0)
    abs_tol: float = Field(default=DEFAULT_ATOL, gt=0)
    dim_override: Optional[int] = Field(default=None, ge=2)


class FitConfig(_Strict):
    init: dict[str, float] = Field(default_factory=dict)
    fixed: dict[str, float] = Field(default_factory=dict)


class RunConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    protocol: Literal["ringupdown", "ramsey", "spectroscopy"]
    device: DeviceConfig
    drive: DriveConfig
    t_d: float = Field(gt=0)
    axes: dict[str, Axis]
    phi0: float = 0.0
    mode: Literal["literal_cosine", "complex_phase"] = "literal_cosine"
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    fit: FitConfig = Field(default_factory=FitConfig)

    @model_validator(mode="after")
    def _axes_match_protocol(self):
        need = REQUIRED_AXES[self.protocol]
        missing = [k for k in need if k not in self.axes]
        extra = [k for k in self.axes if k not in need]
        if missing:
            raise ValueError(f"axes.{missing[0]} is required for protocol {self.protocol!r}")
        if extra:
            raise ValueError(f"axes.{extra[0]} is not used by protocol {self.protocol!r}")
        for name in need:
            if axis_values(self.axes[name]).size == 0:
                raise ValueError(f"axes.{name} must not be empty")
        return self

    def axis(self, name):
        return axis_values(self.axes[name])

    def drive_rate(self):
        return self.drive.rate(self.device)


def _format_validation_error(err):
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)


def load_config(text):
    """Parse and validate a JSON run configuration.

    Raises
    ------
    ConfigError
        With one ``path: message`` line per problem.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from None


def save_config(config):
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


# -- noise --------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    sigma_abs: float = 0.0
    sigma_rel: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_abs < 0 or self.sigma_rel < 0:
            raise ValueError("noise sigmas must be >= 0")


def rng_for(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def add_noise(data, noise):
    """Add seeded Gaussian noise with ``sigma = sigma_abs + sigma_rel * |value|``.

    Returns a new object of the same type with ``sigma`` filled in.
    """
    clean = np.asarray(data.nbar, dtype=float)
    sigma = noise.sigma_abs + noise.sigma_rel * np.abs(clean)
    noisy = clean + rng_for(noise.seed).standard_normal(clean.shape) * sigma
    if isinstance(data, RamseyGrid):
        return RamseyGrid(data.taus.copy(), data.phis.copy(), noisy, sigma, dict(data.meta))
    return ExperimentSeries(data.axis.copy(), noisy, sigma, data.kind, dict(data.meta))


# -- CSV ----------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def _meta_line(kind, meta):
    parts = [f"schema_version={SCHEMA_VERSION}", f"kind={kind}"]
    for key in sorted(meta):
        value = meta[key]
        if isinstance(value, float):
            value = _fmt(value)
        if isinstance(value, (int, str)) or isinstance(value, float):
            parts.append(f"{key}={value}")
    return "# phonolab " + " ".join(str(p) for p in parts)


def format_csv(data):
    buf = io.StringIO()
    if isinstance(data, RamseyGrid):
        buf.write(_meta_line("ramsey", data.meta) + "\n")
        buf.write(",".join(GRID_HEADER) + "\n")
        for i, tau in enumerate(data.taus):
            for j, phi in enumerate(data.phis):
                buf.write(f"{_fmt(tau)},{_fmt(phi)},{_fmt(data.nbar[i, j])},{_fmt(data.sigma[i, j])}\n")
    else:
        buf.write(_meta_line(data.kind, data.meta) + "\n")
        buf.write(",".join(SERIES_HEADER) + "\n")
        for x, n, s in zip(data.axis, data.nbar, data.sigma):
            buf.write(f"{_fmt(x)},{_fmt(n)},{_fmt(s)}\n")
    return buf.getvalue()


def _parse_meta(line):
    meta = {}
    for token in line.lstrip("#").split()[1:]:
        if "=" not in token:
            continue
        key, value = token.split("=", 1)
        try:
            meta[key] = int(value) if value.isdigit() else float(value)
        except ValueError:
            meta[key] = value
    return meta


def parse_csv(text):
    """Parse CSV text into an :class:`ExperimentSeries` or :class:`RamseyGrid`.

    The header row decides which; a series without a ``kind`` comment is
    taken as ring-up/ring-down.

    Raises
    ------
    DataFormatError
        On a missing header or malformed row, naming the line number.
    """
    meta = {}
    header = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if header is None and line.lstrip("#").split()[:1] == ["phonolab"]:
                meta.update(_parse_meta(line))
            continue
        fields = [f.strip() for f in line.split(",")]
        if header is None:
            if tuple(fields) not in (SERIES_HEADER, GRID_HEADER):
                raise DataFormatError(
                    f"line {lineno}: expected header {','.join(SERIES_HEADER)} or "
                    f"{','.join(GRID_HEADER)}, got {line!r}"
                )
            header = tuple(fields)
            continue
        if len(fields) != len(header):
            raise DataFormatError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise DataFormatError(f"line {lineno}: non-numeric field in {line!r}") from None
        if not all(math.isfinite(v) for v in rows[-1]):
            raise DataFormatError(f"line {lineno}: non-finite value")
    if header is None:
        raise DataFormatError("line 1: missing header row")
    kind = meta.pop("kind", None)
    meta.pop("schema_version", None)
    arr = np.array(rows, dtype=float).reshape(-1, len(header))

    if header == GRID_HEADER:
        taus = list(dict.fromkeys(arr[:, 0].tolist()))
        phis = list(dict.fromkeys(arr[:, 1].tolist()))
        if arr.shape[0] != len(taus) * len(phis):
            raise DataFormatError(f"long-form grid has {arr.shape[0]} rows, expected "
                                  f"{len(taus)} x {len(phis)}")
        expect_tau = np.repeat(taus, len(phis))
        expect_phi = np.tile(phis, len(taus))
        bad = np.nonzero((arr[:, 0] != expect_tau) | (arr[:, 1] != expect_phi))[0]
        if bad.size:
            # +2: header line plus 1-based numbering, ignoring comment lines
            raise DataFormatError(f"data row {bad[0] + 1}: grid rows must be tau-major and complete")
        shape = (len(taus), len(phis))
        return RamseyGrid(taus, phis, arr[:, 2].reshape(shape), arr[:, 3].reshape(shape), meta)

    kind = kind if kind in SERIES_KINDS else RING_UP_RING_DOWN
    if np.any(arr[:, 2] < 0):
        raise DataFormatError("sigma column must be >= 0")
    return ExperimentSeries(arr[:, 0], arr[:, 1], arr[:, 2], kind, meta)


def atomic_write(path, text):
    """Write ``text`` via a temporary file and rename, so failures leave nothing behind."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".phonolab-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_series(data, path):
    return atomic_write(path, format_csv(data))


def read_series(path):
    with open(path, encoding="utf-8") as fh:
        return parse_csv(fh.read())


# -- fit reports --------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def fit_report(result, protocol, cross_check=None):
    report = {
        "schema_version": SCHEMA_VERSION,
        "protocol": protocol,
        "converged": result.converged,
        "message": result.message,
        "params": result.params,
        "sigmas": result.sigmas,
        "units": result.units,
        "fixed": result.fixed,
        "covariance": result.covariance,
        "parameter_order": list(result.params),
        "residual_norm": result.residual_norm,
        "n_evaluations": result.n_evaluations,
        "warnings": result.warnings,
        "extras": result.extras,
    }
    if cross_check is not None:
        report["decoherence_cross_check"] = cross_check
    return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
