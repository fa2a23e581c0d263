"""Normalized inverted pendulum on a cart, ``theta' = omega``, ``omega' = sin(theta) - u cos(theta)``.

``theta = 0`` is upright.  Both designs share ``H_p = -(cos(theta) - 1/2)^2 + omega^2 / 2``
and make the upright oscillation ``{H_p = H_p_star, |theta| < pi/3}`` attractive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..epd import EpdDesign, make_epd_design
from ..ph_core import ControlAffinePlant, Partition
from .base import System

PARTITION = Partition((0, 1), ())
INNER = math.pi / 3.0
J_CANON = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class PendulumParams:
    """Gains and target angle.

    ``gamma`` is used by the local design, ``gamma1``/``gamma2`` by the
    almost-global one (inside and outside ``|theta| < pi/3``).
    """

    variant: str = "local"
    gamma: float = 5.0
    gamma1: float = 20.0
    gamma2: float = 2.0
    theta_star: float = math.pi / 4.0

    def __post_init__(self):
        if self.variant not in ("local", "almost_global"):
            raise ValueError(f"variant must be 'local' or 'almost_global', got {self.variant!r}")
        for name in ("gamma", "gamma1", "gamma2", "theta_star"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.gamma > 0 and self.gamma1 > 0 and self.gamma2 > 0):
            raise ValueError("gains must be > 0")
        if not abs(self.theta_star) < INNER:
            raise ValueError("theta_star must lie in (-pi/3, pi/3)")
        if self.theta_star == 0.0:
            raise ValueError("theta_star = 0 gives an empty target level set")

    @property
    def H_p_star(self) -> float:
        return -((math.cos(self.theta_star) - 0.5) ** 2)


def H_p(x_p) -> float:
    return -((math.cos(x_p[0]) - 0.5) ** 2) + 0.5 * float(x_p[1]) ** 2


def grad_H_p(x_p) -> np.ndarray:
    th = float(x_p[0])
    return np.array([2.0 * (math.cos(th) - 0.5) * math.sin(th), float(x_p[1])])


def plant() -> ControlAffinePlant:
    return ControlAffinePlant(
        name="pendulum",
        n=2,
        m=1,
        f=lambda x: np.array([x[1], math.sin(x[0])]),
        g=lambda x: np.array([[0.0], [-math.cos(x[0])]]),
        angle_indices=(0,),
    )


def in_inner(theta: float) -> bool:
    return abs(theta) < INNER


def pump_gain(params: PendulumParams):
    """Scalar ``P(theta, omega)``; the damping entry is ``cos(theta)^2 P``."""
    hs = params.H_p_star
    if params.variant == "local":
        g = params.gamma

        def P(th, w):
            return g * (-((math.cos(th) - 0.5) ** 2) + 0.5 * w * w - hs)

        return P
    g1, g2 = params.gamma1, params.gamma2

    def P(th, w):
        c = math.cos(th)
        if abs(th) < INNER:
            q = g1 * (-((c - 0.5) ** 2) + 0.5 * w * w - hs)
        else:
            q = g2
        return (1.5 * c + 0.5 * w * w - 0.75) * q

    return P


def controller(params: PendulumParams):
    P = pump_gain(params)

    def control(x):
        th, w = float(x[0]), float(x[1])
        return np.array([2.0 * math.sin(th) + w * P(th, w) * math.cos(th)])

    return control


def fast_rhs(params: PendulumParams):
    P = pump_gain(params)
    sin, cos = math.sin, math.cos
    if params.variant == "local":
        g, hs = params.gamma, params.H_p_star

        def rhs_local(x):
            th, w = x
            s, c = sin(th), cos(th)
            d = c - 0.5
            u = 2.0 * s + w * g * (0.5 * w * w - d * d - hs) * c
            return (w, s - u * c)

        return rhs_local

    def rhs(x):
        th, w = x
        s, c = sin(th), cos(th)
        u = 2.0 * s + w * P(th, w) * c
        return (w, s - u * c)

    return rhs


def batch_channels(params: PendulumParams):
    """Vectorized ``u``, ``H`` and ``Phi`` over state rows."""
    hs = params.H_p_star

    def channels(X):
        th, w = X[:, 0], X[:, 1]
        c = np.cos(th)
        hp = -((c - 0.5) ** 2) + 0.5 * w * w
        if params.variant == "local":
            P = params.gamma * (hp - hs)
        else:
            q = np.where(np.abs(th) < INNER, params.gamma1 * (hp - hs), params.gamma2)
            P = (1.5 * c + 0.5 * w * w - 0.75) * q
        u = 2.0 * np.sin(th) + w * P * c
        return {"u": u[:, None], "H": hp, "Phi": hp - hs}

    return channels


def branch(x) -> str:
    return "gamma1" if in_inner(float(x[0])) else "gamma2"


def region(params: PendulumParams, x) -> str:
    """``pump`` where the damping entry is negative, ``damp`` where positive."""
    th, w = float(x[0]), float(x[1])
    r = math.cos(th) ** 2 * pump_gain(params)(th, w)
    if r < 0:
        return "pump"
    return "damp" if r > 0 else "neutral"


def _design(params: PendulumParams, name: str) -> EpdDesign:
    P = pump_gain(params)

    def R(x):
        th, w = float(x[0]), float(x[1])
        return np.diag([0.0, math.cos(th) ** 2 * P(th, w)])

    return make_epd_design(
        name, lambda x: J_CANON.copy(), R, H_p, grad_H_p, params.H_p_star, PARTITION,
        x_p_star=np.zeros(2),
        control=controller(params),
        seed=np.array([params.theta_star, 0.0]),
        domain=lambda x_p: in_inner(float(x_p[0])),
        periodic=(0,),
    )


def pendulum_local(params: Optional[PendulumParams] = None):
    """``(plant, epd design, orbit)`` with ``P = gamma (H_p - H_p_star)``."""
    params = params or PendulumParams()
    if params.variant != "local":
        raise ValueError("pendulum_local needs variant='local'")
    d = _design(params, "pendulum_local")
    return plant(), d, d.orbit


def pendulum_almost_global(params: Optional[PendulumParams] = None):
    """``(plant, epd design, orbit)`` with the piecewise gain ``Q``."""
    params = params or PendulumParams(variant="almost_global")
    if params.variant != "almost_global":
        raise ValueError("pendulum_almost_global needs variant='almost_global'")
    d = _design(params, "pendulum_global")
    return plant(), d, d.orbit


def system(params: PendulumParams, variant: str = "epd") -> System:
    if variant != "epd":
        raise ValueError(f"unknown controller variant {variant!r} for the pendulum")
    if params.variant == "local":
        p, d, orb = pendulum_local(params)
        name = "pendulum_local"
    else:
        p, d, orb = pendulum_almost_global(params)
        name = "pendulum_global"
    hs = params.H_p_star
    # grid of the verification suites: the inner strip, open at the edges
    box = (np.array([-INNER + 1e-6, -1.5]), np.array([INNER - 1e-6, 1.5]))
    return System(
        name=f"{name}/epd", plant=p, design=d, orbit=orb, controller=d.base.control,
        rhs=fast_rhs(params), energy=d.base.H, phi=lambda x: H_p(x) - hs,
        params=params, variant=variant, box=box,
        accept=lambda x: in_inner(float(x[0])),
        branch=branch if params.variant == "almost_global" else None,
        batch=batch_channels(params),
    )
