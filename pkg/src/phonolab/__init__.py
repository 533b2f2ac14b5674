"""
phonolab: simulation and fitting toolkit for a driven, lossy bosonic mode
read out through a dispersively coupled transmon.

Submodules
----------
fockspace    truncated Fock-space operators and density matrices
lindblad     master-equation evolution
pulses       piecewise-constant drive schedules
dispersive   closed-form device relations (Stark shift, T_phi, branches)
protocols    ring-up/ring-down, Ramsey and spectroscopy simulations
estimation   least-squares fits with uncertainties
dataio       JSON config, CSV data, seeded noise
plotting     deterministic SVG figures
cli          ``phonolab`` command
"""

__version__ = "0.1.0"

from .errors import PhonolabError  # noqa: E402,F401
