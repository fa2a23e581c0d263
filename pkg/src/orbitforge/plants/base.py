from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from ..orbits import OrbitTarget
from ..ph_core import ControlAffinePlant


@dataclass(frozen=True)
class System:
    """Plant, design and closed-form feedback packaged for simulation and verification.

    ``rhs`` is the plant-side closed loop ``f(x) + g(x) u(x)`` written over
    floats for the integrator hot loop; tests hold it against the generic
    composition of ``plant.f``, ``plant.g`` and ``controller``.  ``batch``,
    when given, evaluates the sampled channels (``u``, ``H``, ``Phi`` and any
    extras) over all rows of a state array at once.
    """

    name: str
    plant: ControlAffinePlant
    design: Any
    orbit: OrbitTarget
    controller: Callable[[np.ndarray], np.ndarray]
    rhs: Callable[[Sequence[float]], Sequence[float]]
    energy: Callable[[np.ndarray], float]
    phi: Callable[[np.ndarray], float]
    params: Any = None
    variant: str = ""
    box: Optional[tuple] = None
    accept: Optional[Callable[[np.ndarray], bool]] = None
    branch: Optional[Callable[[np.ndarray], str]] = None
    check_initial: Optional[Callable[[np.ndarray], None]] = None
    batch: Optional[Callable[[np.ndarray], dict]] = None
    extras: dict = field(default_factory=dict)

    @property
    def wrap_indices(self) -> tuple:
        return self.plant.angle_indices


def plant_side_rhs(plant: ControlAffinePlant, controller):
    """Generic closed loop ``f + g u`` over numpy, for controllers without a fused form."""

    def rhs(x):
        x = np.asarray(x, dtype=float)
        return plant.f(x) + plant.g(x) @ np.asarray(controller(x), dtype=float)

    return rhs
