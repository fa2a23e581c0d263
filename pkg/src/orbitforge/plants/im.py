"""Current-fed induction motor with zero load torque.

State ``x = (psi_1, psi_2, omega)``: rotor flux in the fixed frame and rotor
speed.  The target orbit is the flux circle ``|psi| = beta_star`` travelled at
``omega = omega_star``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..epd import EpdDesign, make_epd_design
from ..errors import InvalidInitialState
from ..msea import H0Split, MseaDesign, make_msea_design
from ..orbits import OrbitTarget
from ..ph_core import ControlAffinePlant, Partition, ida_control
from .base import System

JJ = np.array([[0.0, -1.0], [1.0, 0.0]])
SHELL_GUARD = 1e-3
ORIGIN_GUARD = 1e-6
PARTITION = Partition((0, 1), (2,))


@dataclass(frozen=True)
class ImParams:
    R: float = 1.0
    beta_star: float = 1.0
    omega_star: float = 5.0
    k: float = 1.0

    def __post_init__(self):
        for name in ("R", "beta_star", "omega_star", "k"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.R > 0:
            raise ValueError("R must be > 0")
        if not self.beta_star > 0:
            raise ValueError("beta_star must be > 0")
        if not self.k > 0:
            raise ValueError("k must be > 0")
        if not math.isfinite(self.omega_star) or self.omega_star == 0.0:
            raise ValueError("omega_star must be finite and nonzero")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / abs(self.omega_star)


def rotation(theta: float) -> np.ndarray:
    """``exp(JJ theta)``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def check_flux(x) -> None:
    if math.hypot(x[0], x[1]) < ORIGIN_GUARD:
        raise InvalidInitialState(
            "initial flux at unstable origin: |x_p(0)| must be >= 1e-6 "
            "(the flux origin is an unstable equilibrium where the controller is undefined)"
        )


def plant(params: ImParams, name: str = "im_fixed") -> ControlAffinePlant:
    R = params.R

    def f(x):
        psi = x[:2]
        return np.concatenate([-R * psi + x[2] * (JJ @ psi), [0.0]])

    def g(x):
        return np.array([[R, 0.0], [0.0, R], [-x[1], x[0]]])

    return ControlAffinePlant(name=name, n=3, m=2, f=f, g=g)


def msea_control(params: ImParams):
    """``u = [beta* I - (k/beta*) (omega - omega*) JJ] psi / |psi|``."""
    bs, kb, ws = params.beta_star, params.k / params.beta_star, params.omega_star

    def control(x):
        a, b, w = float(x[0]), float(x[1]), float(x[2])
        r = math.hypot(a, b)
        e = kb * (w - ws)
        return np.array([(bs * a + e * b) / r, (bs * b - e * a) / r])

    return control


def msea_rhs(params: ImParams):
    R, bs, kb, ws = params.R, params.beta_star, params.k / params.beta_star, params.omega_star
    hypot = math.hypot

    def rhs(x):
        a, b, w = x
        r = hypot(a, b)
        e = kb * (w - ws)
        u1 = (bs * a + e * b) / r
        u2 = (bs * b - e * a) / r
        return (-R * a - w * b + R * u1, -R * b + w * a + R * u2, a * u2 - b * u1)

    return rhs


def epd_rhs(params: ImParams):
    """Target field ``(J - R) grad H`` of the pumping-and-damping design over floats."""
    R, bs, kb, ws = params.R, params.beta_star, params.k / params.beta_star, params.omega_star
    krb = kb * R
    hypot = math.hypot

    def rhs(x):
        a, b, w = x
        r = hypot(a, b)
        e = w - ws
        j13 = krb * b / r
        j23 = -krb * a / r
        d = R * (1.0 - bs / r)
        return (-w * b + j13 * e - d * a, w * a + j23 * e - d * b, -j13 * a - j23 * b - kb * r * e)

    return rhs


def orbit(params: ImParams, phi=None, grad_phi=None) -> OrbitTarget:
    bs, ws = params.beta_star, params.omega_star
    if phi is None:
        phi = lambda x_p: float(math.hypot(x_p[0], x_p[1]) - bs)
        grad_phi = lambda x_p: np.asarray(x_p, dtype=float) / math.hypot(x_p[0], x_p[1])
    return OrbitTarget(
        phi=phi,
        grad_phi=grad_phi,
        partition=PARTITION,
        x_l_star=np.array([ws]),
        parameterization=lambda s: bs * np.column_stack([np.cos(s), np.sin(s)]),
        distance=lambda X: np.hypot(np.hypot(X[:, 0], X[:, 1]) - bs, X[:, 2] - ws),
    )


def _near_shell(params: ImParams, x) -> bool:
    r = math.hypot(x[0], x[1])
    return abs(r - params.beta_star) <= SHELL_GUARD or r < ORIGIN_GUARD


def msea_design(params: ImParams, damping_offset: float = 0.0, name: str = "im_msea") -> MseaDesign:
    """Ring-minimum design with ``H0 = x0^2/2 + (x_l - omega*)^2/2`` and ``Phi = |psi| - beta*``.

    ``damping_offset`` is added to the speed damping entry; a nonzero value
    breaks matching and serves as a negative control.
    """
    R, bs, k, ws = params.R, params.beta_star, params.k, params.omega_star
    krb = k * R / bs

    def J_rest(x):
        r = math.hypot(x[0], x[1])
        j13 = krb * x[1] / r
        j23 = -krb * x[0] / r
        return np.array([[0.0, 0.0, j13], [0.0, 0.0, j23], [-j13, -j23, 0.0]])

    def J(x):
        r = math.hypot(x[0], x[1])
        out = J_rest(x)
        j12 = -x[2] * r / (r - bs)
        out[0, 1] = j12
        out[1, 0] = -j12
        return out

    def Rm(x):
        return np.diag([R, R, k / bs * math.hypot(x[0], x[1]) + damping_offset])

    split = H0Split(
        h1=lambda x0: 0.5 * x0 * x0,
        dh1=lambda x0: x0,
        hl=lambda x_l: 0.5 * float(x_l[0] - ws) ** 2,
        grad_hl=lambda x_l: np.array([x_l[0] - ws]),
    )
    return make_msea_design(
        name, J, Rm,
        H0=lambda x0, x_l: 0.5 * x0 * x0 + 0.5 * float(x_l[0] - ws) ** 2,
        grad_H0=lambda x0, x_l: (x0, np.array([x_l[0] - ws])),
        orbit=orbit(params),
        c=lambda x: -float(x[2]) * math.hypot(x[0], x[1]),
        J_rest=J_rest,
        split=split,
        singular=lambda x: _near_shell(params, x),
        control=msea_control(params),
    )


def epd_design(params: ImParams) -> EpdDesign:
    """Pumping-and-damping form with ``H_p = |psi|^2 / 2`` and ``H_p_star = beta*^2 / 2``.

    The planar coupling is ``-omega`` and the planar damping
    ``R (1 - beta*/|psi|)``; with this ``H_p`` these are the entries that
    reproduce the motor's closed loop.
    """
    R, bs, k, ws = params.R, params.beta_star, params.k, params.omega_star
    krb = k * R / bs

    def J(x):
        r = math.hypot(x[0], x[1])
        j13 = krb * x[1] / r
        j23 = -krb * x[0] / r
        w = float(x[2])
        return np.array([[0.0, -w, j13], [w, 0.0, j23], [-j13, -j23, 0.0]])

    def Rm(x):
        r = math.hypot(x[0], x[1])
        d = R * (1.0 - bs / r)
        return np.diag([d, d, k / bs * r])

    base_orbit = orbit(params)
    return make_epd_design(
        "im_epd", J, Rm,
        H_p=lambda x_p: 0.5 * float(x_p @ x_p),
        grad_H_p=lambda x_p: np.asarray(x_p, dtype=float).copy(),
        H_p_star=0.5 * bs * bs,
        partition=PARTITION,
        H_l=lambda x_l: 0.5 * float(x_l[0] - ws) ** 2,
        grad_H_l=lambda x_l: np.array([x_l[0] - ws]),
        x_p_star=np.zeros(2),
        x_l_star=[ws],
        singular=lambda x: math.hypot(x[0], x[1]) < ORIGIN_GUARD,
        control=msea_control(params),
        parameterization=base_orbit.parameterization,
        distance=base_orbit.distance,
    )


def im_fixed_frame(params: ImParams):
    """``(plant, msea design, epd design, orbit)`` in the fixed frame."""
    m = msea_design(params)
    return plant(params), m, epd_design(params), m.orbit


def transverse(params: ImParams, x) -> np.ndarray:
    return np.array([math.hypot(x[0], x[1]) - params.beta_star, x[2] - params.omega_star])


# rotating frame -----------------------------------------------------------


def to_polar(lam) -> tuple[float, float]:
    return math.hypot(lam[0], lam[1]), math.atan2(lam[1], lam[0])


def rotating_plant(params: ImParams) -> ControlAffinePlant:
    """``lambda' = -R lambda + R v``, ``omega' = v^T JJ lambda``; the same algebra as the fixed frame without the ``omega JJ`` term."""
    R = params.R

    def f(x):
        return np.array([-R * x[0], -R * x[1], 0.0])

    def g(x):
        return np.array([[R, 0.0], [0.0, R], [-x[1], x[0]]])

    return ControlAffinePlant(name="im_rotating", n=3, m=2, f=f, g=g)


def foc_control(params: ImParams):
    """Direct field-oriented law ``v = exp(JJ rho) (beta*, (k/beta*)(omega* - omega))``."""
    bs, kb, ws = params.beta_star, params.k / params.beta_star, params.omega_star

    def control(x):
        _, rho = to_polar(x[:2])
        return rotation(rho) @ np.array([bs, kb * (ws - float(x[2]))])

    return control


def foc_rhs(params: ImParams):
    R, bs, kb, ws = params.R, params.beta_star, params.k / params.beta_star, params.omega_star
    atan2, cos, sin = math.atan2, math.cos, math.sin

    def rhs(x):
        l1, l2, w = x
        rho = atan2(l2, l1)
        c, s = cos(rho), sin(rho)
        iq = kb * (ws - w)
        v1 = c * bs - s * iq
        v2 = s * bs + c * iq
        return (-R * l1 + R * v1, -R * l2 + R * v2, l1 * v2 - l2 * v1)

    return rhs


def polar_field(params: ImParams, polar_state, v=None) -> np.ndarray:
    """``(beta', rho', omega')`` of the rotating-frame motor; FOC input by default."""
    beta, rho, w = (float(s) for s in polar_state)
    if v is None:
        v = foc_control(params)(np.array([beta * math.cos(rho), beta * math.sin(rho), w]))
    i_d, i_q = rotation(-rho) @ np.asarray(v, dtype=float)
    R = params.R
    return np.array([-R * beta + R * i_d, R / beta * i_q, beta * i_q])


def foc_equivalence_check(params: ImParams, x, theta: float, foc_params: ImParams | None = None) -> np.ndarray:
    """Fixed-frame MSEA input minus the rotated FOC input at frame angle ``theta``."""
    x = np.asarray(x, dtype=float)
    foc_params = foc_params or params
    lam = rotation(-theta) @ x[:2]
    v = foc_control(foc_params)(np.array([lam[0], lam[1], x[2]]))
    return msea_control(params)(x) - rotation(theta) @ v


# system bundles -------------------------------------------------------------


def batch_channels(params: ImParams, law: str = "msea", energy: str = "msea"):
    """Vectorized ``u``, ``H``, ``Phi`` and transverse coordinates over state rows."""
    bs, kb, ws = params.beta_star, params.k / params.beta_star, params.omega_star

    def channels(X):
        a, b, w = X[:, 0], X[:, 1], X[:, 2]
        r = np.hypot(a, b)
        if law == "msea":
            e = kb * (w - ws)
            u = np.column_stack([(bs * a + e * b) / r, (bs * b - e * a) / r])
        else:
            rho = np.arctan2(b, a)
            iq = kb * (ws - w)
            c, s = np.cos(rho), np.sin(rho)
            u = np.column_stack([c * bs - s * iq, s * bs + c * iq])
        z1, z2 = r - bs, w - ws
        h0 = 0.5 * r * r if energy == "epd" else 0.5 * z1 * z1
        return {"u": u, "H": h0 + 0.5 * z2 * z2, "Phi": z1, "z1": z1, "z2": z2}

    return channels



def _box(params: ImParams, speed_halfwidth: float):
    bs, ws = params.beta_star, params.omega_star
    return (np.array([-2 * bs, -2 * bs, ws - speed_halfwidth]),
            np.array([2 * bs, 2 * bs, ws + speed_halfwidth]))


def fixed_system(params: ImParams, variant: str = "msea") -> System:
    p, m, e, orb = im_fixed_frame(params)
    bs, ws = params.beta_star, params.omega_star
    energy_msea = m.base.H
    phi = lambda x: math.hypot(x[0], x[1]) - bs
    accept = lambda x: not _near_shell(params, x) and math.hypot(x[0], x[1]) > 1e-2
    if variant == "msea":
        design, ctrl, rhs, energy = m, msea_control(params), msea_rhs(params), energy_msea
        box = _box(params, 2.0 * max(abs(ws), 1.0))
        batch = batch_channels(params, "msea", "msea")
    elif variant == "epd":
        ctrl = lambda x: ida_control(p, e.base, x)
        design, rhs, energy = e, epd_rhs(params), e.base.H
        box = _box(params, 0.5 * max(abs(ws), 1e-3))
        batch = None
    elif variant == "foc":
        # FOC evaluated with the frame angle at zero; the rotation cancels
        design, ctrl, rhs, energy = m, foc_control(params), foc_rhs_fixed(params), energy_msea
        box = _box(params, 2.0 * max(abs(ws), 1.0))
        batch = batch_channels(params, "foc", "msea")
    else:
        raise ValueError(f"unknown controller variant {variant!r} for im_fixed")
    return System(
        name=f"im_fixed/{variant}", plant=p, design=design, orbit=orb, controller=ctrl,
        rhs=rhs, energy=energy, phi=phi, params=params, variant=variant, box=box,
        accept=accept, check_initial=check_flux, batch=batch,
        extras={"msea": m, "epd": e},
    )


def foc_rhs_fixed(params: ImParams):
    R = params.R
    ctrl = foc_control(params)

    def rhs(x):
        a, b, w = x
        u1, u2 = ctrl(np.array([a, b, w]))
        return (-R * a - w * b + R * u1, -R * b + w * a + R * u2, a * u2 - b * u1)

    return rhs


def rotating_system(params: ImParams, variant: str = "foc") -> System:
    if variant != "foc":
        raise ValueError(f"unknown controller variant {variant!r} for im_rotating")
    m = msea_design(params)
    bs = params.beta_star
    return System(
        name="im_rotating/foc", plant=rotating_plant(params), design=None, orbit=m.orbit,
        controller=foc_control(params), rhs=foc_rhs(params), energy=m.base.H,
        phi=lambda x: math.hypot(x[0], x[1]) - bs, params=params, variant=variant,
        check_initial=check_flux, batch=batch_channels(params, "foc", "msea"),
    )
