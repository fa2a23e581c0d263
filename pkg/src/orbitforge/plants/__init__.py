"""Built-in systems, addressable by name from scenario configs."""

from __future__ import annotations

from functools import lru_cache
from typing import Mapping, Optional

from . import im, pendulum
from .base import System, plant_side_rhs
from .im import ImParams, foc_equivalence_check, im_fixed_frame
from .pendulum import PendulumParams, pendulum_almost_global, pendulum_local

PLANTS = ("im_fixed", "im_rotating", "pendulum_local", "pendulum_global")
DESIGNS = ("im_msea", "im_epd", "pendulum_local", "pendulum_global", "im_msea_perturbed")
DEFAULT_VARIANT = {
    "im_fixed": "msea",
    "im_rotating": "foc",
    "pendulum_local": "epd",
    "pendulum_global": "epd",
}


def make_params(plant: str, params: Optional[Mapping] = None):
    params = dict(params or {})
    if plant in ("im_fixed", "im_rotating"):
        return ImParams(**params)
    if plant == "pendulum_local":
        params.setdefault("variant", "local")
        return PendulumParams(**params)
    if plant == "pendulum_global":
        params.setdefault("variant", "almost_global")
        return PendulumParams(**params)
    raise KeyError(f"unknown plant {plant!r}; known plants: {', '.join(PLANTS)}")


@lru_cache(maxsize=64)
def _build(plant: str, params, variant: str) -> System:
    if plant == "im_fixed":
        return im.fixed_system(params, variant)
    if plant == "im_rotating":
        return im.rotating_system(params, variant)
    return pendulum.system(params, variant)


def build_system(plant: str, params: Optional[Mapping] = None, variant: Optional[str] = None) -> System:
    """System bundle for a plant name, parameter map and controller variant."""
    p = make_params(plant, params)
    return _build(plant, p, variant or DEFAULT_VARIANT[plant])


def design_system(name: str, params: Optional[Mapping] = None) -> System:
    """System bundle for a verifiable design name."""
    if name == "im_msea":
        return build_system("im_fixed", params, "msea")
    if name == "im_epd":
        return build_system("im_fixed", params, "epd")
    if name in ("pendulum_local", "pendulum_global"):
        return build_system(name, params, "epd")
    if name == "im_msea_perturbed":
        base = build_system("im_fixed", params, "msea")
        design = im.msea_design(base.params, damping_offset=0.1, name="im_msea_perturbed")
        return System(
            name="im_msea_perturbed", plant=base.plant, design=design, orbit=design.orbit,
            controller=base.controller, rhs=base.rhs, energy=design.base.H, phi=base.phi,
            params=base.params, variant="msea", box=base.box, accept=base.accept,
            check_initial=base.check_initial, extras=base.extras,
        )
    raise KeyError(f"unknown design {name!r}; known designs: {', '.join(DESIGNS)}")


__all__ = [
    "DESIGNS", "PLANTS", "ImParams", "PendulumParams", "System", "build_system", "design_system",
    "foc_equivalence_check", "im_fixed_frame", "make_params", "pendulum_almost_global",
    "pendulum_local", "plant_side_rhs",
]
