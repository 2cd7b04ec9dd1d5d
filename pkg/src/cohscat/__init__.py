"""Motional entanglement of levitated nanoparticles heralded by coherent scattering.

Submodules
----------
params    lab inputs -> trap frequencies, couplings and sideband rates
fock      truncated Fock-space operators and states
lindblad  adaptive integration of the cavity + particles master equation
reduced   closed-form weak-coupling moments, heralding, flux and witness bound
protocol  the blue-herald / red-read-out experiment with both engines
config    JSON run configuration
cli       command-line entry point
"""

from .params import (DegenerateConfigError, DerivedParams, DomainError, PhysicalConfig, derive,
                     fig2_config)
from .fock import SpaceLayout
from .reduced import FluxTrace, MomentSet
from .protocol import run_nparticle, run_protocol

__version__ = "0.1.0"

__all__ = [
    "DegenerateConfigError", "DerivedParams", "DomainError", "FluxTrace", "MomentSet",
    "PhysicalConfig", "SpaceLayout", "derive", "fig2_config", "run_nparticle", "run_protocol",
]
