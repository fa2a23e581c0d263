"""Synthesis, simulation and verification of orbitally stabilizing IDA-PBC controllers."""

from .errors import OrbitForgeError
from .numerics import IntegratorSettings, Trajectory, integrate
from .orbits import OrbitTarget
from .ph_core import ControlAffinePlant, Partition, PhDesign, ida_control, matching_residual
from .plants import build_system, design_system
from .simulate import simulate

__version__ = "0.1.0"

__all__ = [
    "ControlAffinePlant", "IntegratorSettings", "OrbitForgeError", "OrbitTarget", "Partition",
    "PhDesign", "Trajectory", "build_system", "design_system", "ida_control", "integrate",
    "matching_residual", "simulate",
]
