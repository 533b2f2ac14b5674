"""
Command-line entry point: ``phonolab simulate | fit | derive``.

Exit codes: 0 success, 1 user error (bad config, bad data, singular
inputs), 2 numerical failure (solver breakdown, fit not converged).
Frequencies on the command line are in Hz and accept SI suffixes
``k``, ``M`` and ``G`` (``480k``, ``-237.37M``).
"""
from __future__ import annotations

import argparse
import math
import os
import re
import sys
from dataclasses import dataclass, field

from . import __version__
from .dataio import (
    NoiseModel,
    add_noise,
    atomic_write,
    fit_report,
    format_csv,
    load_config,
    read_series,
    u_to_angular,
)
from .dispersive import (
    avoided_crossing_branches,
    chi_shift,
    pure_dephasing_time,
    total_decoherence_rate,
)
from .errors import (
    BoundViolationError,
    ConfigError,
    DataFormatError,
    IntegrationAccuracyError,
    NoPureDephasingError,
    PhonolabError,
    SingularityError,
    StiffnessError,
)
from .estimation import (
    decoherence_cross_check,
    fit_lorentzian,
    fit_ramsey,
    fit_ring_up_ring_down,
)
from .plotting import emit_plot
from .protocols import (
    LINDBLAD,
    MOMENTS,
    RING_UP_RING_DOWN,
    RamseyGrid,
    simulate_ramsey,
    simulate_ring_up_ring_down,
    simulate_spectroscopy,
)

OK, USER_ERROR, NUMERICAL_FAILURE = 0, 1, 2

# errors caused by the numerics rather than by the user's input
_NUMERICAL = (StiffnessError, IntegrationAccuracyError, BoundViolationError)

_SI = {"": 1.0, "k": 1e3, "M": 1e6, "G": 1e9}
_SI_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([kMG]?)(?:Hz)?\s*$")

FIT_PARAMETERS = ("U", "kappa1", "kappa_phi", "phi0", "t_d")

# published estimates printed next to the matching derived values
_REFERENCE_CHI = ((9e6, -237.37e6, 318e6), "published value 2chi/2pi ~ -0.4 MHz")


@dataclass
class CommandOutcome:
    exit_code: int
    artifacts: list = field(default_factory=list)
    summary: str = ""

    def __post_init__(self):
        if self.exit_code not in (OK, USER_ERROR, NUMERICAL_FAILURE):
            raise ValueError(f"invalid exit code {self.exit_code}")


def parse_si(text):
    """Parse ``"480k"``, ``"-237.37M"``, ``"4.22GHz"`` or ``"494e-9"`` to a float."""
    m = _SI_RE.match(str(text))
    if not m:
        raise ValueError(f"cannot parse number {text!r} (SI suffixes k, M, G allowed)")
    return float(m.group(1)) * _SI[m.group(2)]


def _fmt_hz(x):
    for scale, unit in ((1e9, "GHz"), (1e6, "MHz"), (1e3, "kHz")):
        if abs(x) >= scale:
            return f"{x / scale:.6g} {unit}"
    return f"{x:.6g} Hz"


def _fmt_s(x):
    for scale, unit in ((1.0, "s"), (1e-3, "ms"), (1e-6, "us"), (1e-9, "ns")):
        if abs(x) >= scale:
            return f"{x / scale:.6g} {unit}"
    return f"{x:.6g} s"


def _read_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror or exc}") from None
    return load_config(text)


def _svg_path(out_path):
    root, _ = os.path.splitext(out_path)
    return root + ".svg"


# -- simulate -----------------------------------------------------------------

def _simulate(config, backend):
    params = config.device.to_params()
    U = config.drive_rate()
    solver = dict(dim=config.solver.dim_override, rtol=config.solver.rel_tol, atol=config.solver.abs_tol)
    if config.protocol == "ringupdown":
        return simulate_ring_up_ring_down(params, U, config.t_d, config.axis("times"), backend=backend,
                                          **solver)
    if config.protocol == "ramsey":
        return simulate_ramsey(params, U, config.t_d, config.axis("taus"), config.axis("phis"),
                               config.phi0, config.mode, backend=backend, **solver)
    return simulate_spectroscopy(params, U, config.t_d, config.axis("deltas"), backend=backend, **solver)


def cmd_simulate(config_path, out_path, plot=False, noise_seed=None, backend=LINDBLAD):
    """Simulate the configured protocol and write a CSV (plus an SVG with ``plot``)."""
    try:
        config = _read_config(config_path)
        data = _simulate(config, backend)
    except _NUMERICAL as exc:
        return CommandOutcome(NUMERICAL_FAILURE, [], f"solver failure: {exc}")
    except (PhonolabError, ValueError, OSError) as exc:
        return CommandOutcome(USER_ERROR, [], f"error: {exc}")

    noise = config.noise
    seed = noise.seed if noise_seed is None else int(noise_seed)
    if noise.sigma_abs > 0 or noise.sigma_rel > 0:
        data = add_noise(data, NoiseModel(noise.sigma_abs, noise.sigma_rel, seed))
        data.meta["noise_seed"] = seed

    lines = [f"protocol: {config.protocol}", f"backend: {backend}",
             f"truncation dim: {data.meta['dim']}"]
    if "solver_steps" in data.meta:
        lines.append(f"solver steps: {data.meta['solver_steps']}")
    points = data.nbar.size
    lines.append(f"points: {points}")

    artifacts = []
    try:
        artifacts.append(atomic_write(out_path, format_csv(data)))
        if plot:
            svg_path = plot if isinstance(plot, str) else _svg_path(out_path)
            title = {"ringupdown": "ring-up / ring-down", "ramsey": "Ramsey",
                     "spectroscopy": "spectroscopy"}[config.protocol]
            artifacts.append(atomic_write(svg_path, emit_plot(data, {"title": title})))
    except OSError as exc:
        return CommandOutcome(USER_ERROR, artifacts, f"cannot write output: {exc}")
    lines.extend(f"wrote {p}" for p in artifacts)
    return CommandOutcome(OK, artifacts, "\n".join(lines))


# -- fit ----------------------------------------------------------------------

def _parse_fixes(items, convention):
    fixed = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--fix expects name=value, got {item!r}")
        name, value = item.split("=", 1)
        name = name.strip()
        if name not in FIT_PARAMETERS:
            raise ConfigError(f"--fix: unknown parameter {name!r} (choose from {', '.join(FIT_PARAMETERS)})")
        try:
            number = parse_si(value)
        except ValueError as exc:
            raise ConfigError(f"--fix {name}: {exc}") from None
        fixed[name] = u_to_angular(number, convention) if name == "U" else number
    return fixed


def _data_protocol(data):
    if isinstance(data, RamseyGrid):
        return "ramsey"
    return "ringupdown" if data.kind == RING_UP_RING_DOWN else "spectroscopy"


def _parameter_table(result):
    rows = [f"{'parameter':<10} {'value':>16} {'sigma':>14}  unit"]
    for name, value in result.params.items():
        sigma = result.sigmas.get(name, float("nan"))
        rows.append(f"{name:<10} {value:>16.8g} {sigma:>14.4g}  {result.units.get(name, '')}")
    for name, value in result.fixed.items():
        rows.append(f"{name:<10} {value:>16.8g} {'(fixed)':>14}  {result.units.get(name, '')}")
    return "\n".join(rows)


def cmd_fit(data_path, config_path, out_path, fixes=None, protocol=None, verify=True):
    """Fit a data file and write a JSON report; exit 2 if the fit did not converge."""
    try:
        config = _read_config(config_path)
        convention = config.drive.u_convention
        protocol = protocol or config.protocol
        data = read_series(data_path)
        found = _data_protocol(data)
        if found != protocol:
            raise DataFormatError(f"data file holds {found} data but protocol {protocol!r} was requested")
        fixed = {k: (u_to_angular(v, convention) if k == "U" else v) for k, v in config.fit.fixed.items()}
        fixed.update(_parse_fixes(fixes, convention))
        fixed.setdefault("t_d", config.t_d)
        init = {"U": config.drive_rate(), "kappa1": config.device.kappa1,
                "kappa_phi": config.device.kappa_phi, "phi0": config.phi0}
        init.update({k: (u_to_angular(v, convention) if k == "U" else v) for k, v in config.fit.init.items()})
        dim = config.solver.dim_override

        if protocol == "ringupdown":
            # ring-up alone cannot separate dephasing; hold it at the configured device value
            fixed.setdefault("kappa_phi", config.device.kappa_phi)
            init.pop("kappa_phi")
            result = fit_ring_up_ring_down(data, fixed, init, verify=verify, dim=dim)
            cross = decoherence_cross_check(result.params.get("kappa1", fixed.get("kappa1")),
                                            fixed.get("kappa_phi", 0.0))
        elif protocol == "ramsey":
            result = fit_ramsey(data, fixed, init, mode=config.mode, verify=verify, dim=dim)
            values = {**fixed, **result.params}
            cross = decoherence_cross_check(values["kappa1"], values["kappa_phi"])
        else:
            result = fit_lorentzian(data)
            cross = decoherence_cross_check(config.device.kappa1, config.device.kappa_phi,
                                            measured_fwhm=result.params["fwhm"])
    except _NUMERICAL as exc:
        return CommandOutcome(NUMERICAL_FAILURE, [], f"numerical failure: {exc}")
    except (PhonolabError, ValueError, OSError) as exc:
        return CommandOutcome(USER_ERROR, [], f"error: {exc}")

    report = fit_report(result, protocol, cross)
    try:
        path = atomic_write(out_path, report)
    except OSError as exc:
        return CommandOutcome(USER_ERROR, [], f"cannot write output: {exc}")

    lines = [f"protocol: {protocol}", _parameter_table(result), "",
             "decoherence cross-check:",
             f"  kappa1/2 + kappa_phi      = {_fmt_hz(cross['kappa_total_hz'])}",
             f"  kappa1 + kappa_phi/2      = {_fmt_hz(cross['predicted_fwhm_hz'])}  (steady-state FWHM)"]
    if cross["measured_fwhm_hz"] is not None:
        lines.append(f"  measured FWHM             = {_fmt_hz(cross['measured_fwhm_hz'])}")
    for note in result.warnings:
        lines.append(f"warning: {note}")
    lines.append(f"wrote {path}")
    if not result.converged:
        lines.append(f"fit did not converge: {result.message}")
        return CommandOutcome(NUMERICAL_FAILURE, [path], "\n".join(lines))
    return CommandOutcome(OK, [path], "\n".join(lines))


# -- derive -------------------------------------------------------------------

_DERIVE_ARGS = {
    "chi": ("g", "delta", "alpha"),
    "tphi": ("T1", "T2"),
    "kappa": ("kappa1", "kappa_phi"),
    "avoided-crossing": ("omega_q", "omega_m", "g"),
}


def cmd_derive(quantity, values):
    """Evaluate one closed-form device relation and echo its inputs."""
    names = _DERIVE_ARGS.get(quantity)
    if names is None:
        return CommandOutcome(USER_ERROR, [], f"error: unknown quantity {quantity!r}")
    if len(values) != len(names):
        return CommandOutcome(USER_ERROR, [], f"error: {quantity} needs {len(names)} values: "
                                              f"{' '.join(n.upper() for n in names)}")
    try:
        args = [parse_si(v) for v in values]
    except ValueError as exc:
        return CommandOutcome(USER_ERROR, [], f"error: {exc}")

    try:
        if quantity == "chi":
            g, delta, alpha = args
            two_chi = chi_shift(g, delta, alpha)
            lines = [f"g = {_fmt_hz(g)}, delta = {_fmt_hz(delta)}, alpha = {_fmt_hz(alpha)}",
                     f"2chi/2pi = {two_chi / 1e6:.3f} MHz"]
            ref_inputs, ref_note = _REFERENCE_CHI
            if all(math.isclose(a, b, rel_tol=1e-6) for a, b in zip(args, ref_inputs)):
                lines[-1] += f"  ({ref_note})"
        elif quantity == "tphi":
            T1, T2 = args
            lines = [f"T1 = {_fmt_s(T1)}, T2 = {_fmt_s(T2)}",
                     f"T_phi = {pure_dephasing_time(T1, T2) * 1e6:.3f} us"]
        elif quantity == "kappa":
            k1, kphi = args
            lines = [f"kappa1 = {_fmt_hz(k1)}, kappa_phi = {_fmt_hz(kphi)}",
                     f"kappa = kappa1/2 + kappa_phi = {total_decoherence_rate(k1, kphi) / 1e3:.6g} kHz",
                     f"steady-state FWHM = kappa1 + kappa_phi/2 = {(k1 + kphi / 2) / 1e3:.6g} kHz"]
        else:
            wq, wm, g = args
            upper, lower = avoided_crossing_branches(wq, wm, g)
            lines = [f"omega_q = {_fmt_hz(wq)}, omega_m = {_fmt_hz(wm)}, g = {_fmt_hz(g)}",
                     f"upper branch = {_fmt_hz(upper)}", f"lower branch = {_fmt_hz(lower)}",
                     f"splitting = {_fmt_hz(upper - lower)} (minimum 2g = {_fmt_hz(2 * g)})"]
    except (SingularityError, NoPureDephasingError, ValueError) as exc:
        return CommandOutcome(USER_ERROR, [], f"error: {exc}")
    return CommandOutcome(OK, [], "\n".join(lines))


# -- argument parsing ---------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="phonolab", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a configured protocol to CSV")
    p.add_argument("config")
    p.add_argument("out")
    p.add_argument("--plot", nargs="?", const=True, default=False, metavar="SVG",
                   help="also write an SVG (default: OUT with .svg suffix)")
    p.add_argument("--noise-seed", type=int, default=None, help="override noise.seed")
    p.add_argument("--backend", choices=(LINDBLAD, MOMENTS), default=LINDBLAD)

    p = sub.add_parser("fit", help="fit a CSV data file")
    p.add_argument("data")
    p.add_argument("config")
    p.add_argument("out")
    p.add_argument("--fix", action="append", default=[], metavar="NAME=VALUE",
                   help="hold a parameter fixed (repeatable), e.g. --fix kappa_phi=0")
    p.add_argument("--protocol", choices=("ringupdown", "ramsey", "spectroscopy"), default=None)
    p.add_argument("--no-verify", action="store_true",
                   help="skip re-checking the fit against the full master equation")

    p = sub.add_parser("derive", help="closed-form device arithmetic")
    p.add_argument("quantity", choices=tuple(_DERIVE_ARGS))
    p.add_argument("values", nargs="*", help="numbers in Hz or s; SI suffixes k, M, G")
    return parser


def _protect_negatives(argv):
    # let "derive chi 9M -237.37M 318M" through: argparse would read -237.37M as a flag
    if argv and argv[0] == "derive" and "--" not in argv:
        for k, tok in enumerate(argv[1:], start=1):
            if re.match(r"^-[\d.]", tok):
                return argv[:2] + ["--"] + argv[2:] if k >= 2 else argv
    return argv


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_protect_negatives(argv))
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out, plot=args.plot, noise_seed=args.noise_seed,
                            backend=args.backend)
    if args.command == "fit":
        return cmd_fit(args.data, args.config, args.out, fixes=args.fix, protocol=args.protocol,
                       verify=not args.no_verify)
    return cmd_derive(args.quantity, args.values)


def main(argv=None):
    try:
        outcome = run(argv)
    except SystemExit as exc:
        # argparse usage errors are user errors
        code = exc.code if isinstance(exc.code, int) else USER_ERROR
        return USER_ERROR if code not in (OK,) else OK
    stream = sys.stdout if outcome.exit_code == OK else sys.stderr
    if outcome.exit_code == NUMERICAL_FAILURE and outcome.artifacts:
        stream = sys.stdout
    print(outcome.summary, file=stream)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
