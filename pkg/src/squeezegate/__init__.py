"""Waveform synthesis and verification for N-body trapped-ion gates built from
spin-dependent squeezing and displacement.

Submodules: ``chain`` (normal modes), ``phasespace`` (Bogoliubov maps),
``propagator``, ``displacement``, ``squeeze``, ``composer``, ``fock`` (Fock-space
oracle), ``algebra`` (Lie closure), ``scenarios`` and ``cli``. The names below
are loaded on first access so that the command line can configure threading
before numpy is imported.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "ModeData": "chain",
    "TrapConfig": "chain",
    "equilibrium_positions": "chain",
    "radial_modes": "chain",
    "tabulated_modes": "chain",
    "MixingState": "phasespace",
    "PolarForm": "phasespace",
    "SpinConfigSet": "phasespace",
    "polar_decompose": "phasespace",
    "ControlWaveform": "propagator",
    "DriveSpec": "propagator",
    "propagate_mixing": "propagator",
    "propagate_displacement": "propagator",
    "solve_least_norm": "displacement",
    "optimize": "squeeze",
    "GateProtocol": "composer",
    "GateTarget": "composer",
    "compose": "composer",
    "verify_truth_table": "composer",
    "FockSystem": "fock",
    "check_bogoliubov": "fock",
    "AlgebraElement": "algebra",
    "commutator": "algebra",
    "closure": "algebra",
    "ScenarioFile": "scenarios",
    "run_scenario": "scenarios",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(import_module(f"squeezegate.{_EXPORTS[name]}"), name)
    raise AttributeError(f"module 'squeezegate' has no attribute {name!r}")
