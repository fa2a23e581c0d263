"""Energy functions with a ring-shaped minimum (``H = H0(Phi(x_p), x_l)``).

A design is built from a base function ``H0(x0, x_l)`` whose isolated minimum
sits at ``(0, x_l_star)``, composed with the curve function of the target
orbit.  The interconnection entry coupling the two planar coordinates is
written as ``c(x) / dH0/dx0`` and therefore blows up on the orbit; the
regularized evaluation below uses ``c`` directly there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import OffOrbit
from .numerics import IntegratorSettings, as_vector, integrate
from .orbits import OrbitTarget, jordan_diagnostics
from .ph_core import PhDesign, SEED
from .reports import Check, Report, check_from_violations

H2_IDENTITY_TOL = 1e-9
SHELL = (0.05, 0.5)
OFF_ORBIT_TOL = 1e-6


@dataclass(frozen=True)
class H0Split:
    """Additive split ``H0(x0, x_l) = h1(x0) + hl(x_l)`` with analytic derivatives."""

    h1: Callable[[float], float]
    dh1: Callable[[float], float]
    hl: Callable[[np.ndarray], float]
    grad_hl: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MseaDesign:
    """Ring-minimum design.

    ``J_rest`` is the interconnection matrix with the planar (1,2) coupling
    removed; it must be finite on the orbit.  ``c`` is the function that the
    planar coupling times ``dH0/dx0`` should equal.
    """

    base: PhDesign
    H0: Callable[[float, np.ndarray], float]
    grad_H0: Callable[[float, np.ndarray], tuple]
    orbit: OrbitTarget
    c: Callable[[np.ndarray], float]
    J_rest: Optional[Callable[[np.ndarray], np.ndarray]] = None
    split: Optional[H0Split] = None

    @property
    def partition(self):
        return self.orbit.partition

    @property
    def name(self) -> str:
        return self.base.name


def make_msea_design(name, J, R, H0, grad_H0, orbit: OrbitTarget, c, *, J_rest=None,
                     split=None, singular=None, control=None) -> MseaDesign:
    part = orbit.partition

    def H(x):
        x_p, x_l = part.split(x)
        return float(H0(orbit.phi(x_p), x_l))

    def grad_H(x):
        x_p, x_l = part.split(x)
        d0, dl = grad_H0(orbit.phi(x_p), x_l)
        return part.join(d0 * orbit.gradient(x_p), dl)

    base = PhDesign(name=name, J=J, R=R, H=H, grad_H=grad_H, singular=singular, control=control)
    return MseaDesign(base=base, H0=H0, grad_H0=grad_H0, orbit=orbit, c=c, J_rest=J_rest,
                      split=split)


def compose_hamiltonian(design: MseaDesign, x) -> tuple[float, np.ndarray]:
    x = as_vector(x, design.partition.n)
    return design.base.H(x), design.base.gradient(x)


def regularized_field(design: MseaDesign, x) -> np.ndarray:
    """Closed-loop field with the planar coupling evaluated as ``c(x) * rot(grad Phi)``.

    Finite on the orbit, where the factored ``J grad H`` form is 0 * inf.
    """
    if design.J_rest is None:
        raise ValueError(f"design {design.name!r} registers no regular interconnection part")
    x = as_vector(x, design.partition.n)
    part = design.partition
    x_p, _ = part.split(x)
    grad = design.base.gradient(x)
    out = (design.J_rest(x) - design.base.R(x)) @ grad
    gphi = design.orbit.gradient(x_p)
    c = design.c(x)
    p = part.p_indices
    out[p[0]] += c * gphi[1]
    out[p[1]] -= c * gphi[0]
    return out


def on_orbit_residual_field(design: MseaDesign, x) -> tuple[np.ndarray, float]:
    """Residual dynamics on the orbit and its 1-norm."""
    x = as_vector(x, design.partition.n)
    part = design.partition
    x_p, x_l = part.split(x)
    phi = design.orbit.phi(x_p)
    dl = np.max(np.abs(x_l - design.orbit.x_l_star)) if x_l.size else 0.0
    if abs(phi) > OFF_ORBIT_TOL or dl > OFF_ORBIT_TOL:
        raise OffOrbit(f"state is off the orbit (|Phi|={abs(phi):.3g}, |x_l - x_l*|={dl:.3g})")
    c = design.c(x)
    g = design.orbit.gradient(x_p)
    v = np.zeros(part.n)
    v[part.p_indices[0]] = c * g[1]
    v[part.p_indices[1]] = -c * g[0]
    return v, float(np.sum(np.abs(v)))


def shell_states(orbit: OrbitTarget, count: int, radii=SHELL, seed: int = SEED,
                 accept=None) -> np.ndarray:
    """Random states at distance roughly in ``radii`` from sampled orbit points."""
    rng = np.random.default_rng(seed)
    pts = orbit.orbit_points()
    n = orbit.partition.n
    out = []
    while len(out) < count:
        base = pts[rng.integers(len(pts))]
        d = rng.normal(size=n)
        d /= np.linalg.norm(d)
        x = base + rng.uniform(*radii) * d
        if accept is None or accept(x):
            out.append(x)
    return np.array(out)


def check_h2(design: MseaDesign, count: int = 1000, seed: int = SEED, accept=None) -> Check:
    """Planar coupling equals ``c / dH0/dx0`` off the orbit and ``0 < |c| < inf`` on it."""
    part = design.partition
    p0, p1 = part.p_indices
    violations = []
    worst = 0.0
    for x in shell_states(design.orbit, count, seed=seed, accept=accept):
        if design.base.is_singular(x):
            continue
        x_p, x_l = part.split(x)
        d0, _ = design.grad_H0(design.orbit.phi(x_p), x_l)
        c = design.c(x)
        resid = abs(design.base.J(x)[p0, p1] * d0 - c)
        worst = max(worst, resid)
        if not resid <= H2_IDENTITY_TOL * max(1.0, abs(c)):
            violations.append({"x": x, "kind": "parameterization", "residual": resid})
    c_min = np.inf
    for x in design.orbit.orbit_points():
        c = design.c(x)
        c_min = min(c_min, abs(c))
        if not (np.isfinite(c) and abs(c) > 1e-12):
            violations.append({"x": x, "kind": "c_vanishes_on_orbit", "c": c})
    return check_from_violations("h2_interconnection", violations,
                                 max_parameterization_residual=worst, min_abs_c_on_orbit=c_min)


def check_nonvanishing(design: MseaDesign) -> Check:
    """No equilibria on the orbit: the residual field has positive 1-norm everywhere."""
    violations = []
    norms = []
    for x in design.orbit.orbit_points():
        _, n1 = on_orbit_residual_field(design, x)
        norms.append(n1)
        if not n1 > 1e-12:
            violations.append({"x": x, "kind": "equilibrium_on_orbit", "norm1": n1})
    return check_from_violations("orbit_equilibrium_free", violations,
                                 min_norm1=float(np.min(norms)))


def check_minimum(design: MseaDesign, count: int = 1000, eps: float = SHELL[1],
                  seed: int = SEED, on_orbit_points: int = 20) -> Check:
    """Gradient of H vanishes on the orbit and H is larger in a tube around it."""
    violations = []
    pts = design.orbit.orbit_points()
    idx = np.linspace(0, len(pts) - 1, on_orbit_points).astype(int)
    h_orbit = []
    for x in pts[idx]:
        h, g = compose_hamiltonian(design, x)
        h_orbit.append(h)
        if np.linalg.norm(g) > 1e-9:
            violations.append({"x": x, "kind": "gradient_on_orbit", "norm": float(np.linalg.norm(g))})
    h_min = float(np.max(h_orbit))
    for x in shell_states(design.orbit, count, radii=(1e-3, eps), seed=seed + 1):
        h = design.base.H(x)
        if not h > h_min:
            violations.append({"x": x, "kind": "not_above_orbit_level", "H": h})
    return check_from_violations("ring_minimum", violations, orbit_level=h_min)


def check_jordan(orbit: OrbitTarget) -> Check:
    diag = jordan_diagnostics(orbit.curve_samples)
    violations = []
    if not diag["closed"]:
        violations.append({"kind": "curve_not_closed", "gap": diag["closing_gap"]})
    if not diag["simple"]:
        violations.append({"kind": "self_intersection", "count": diag["self_crossings"]})
    phi_max = max(abs(orbit.phi(p)) for p in orbit.curve_samples)
    if phi_max > 1e-10:
        violations.append({"kind": "samples_off_level_set", "max_abs_phi": phi_max})
    grad_min = min(np.linalg.norm(orbit.gradient(p)) for p in orbit.curve_samples)
    if not grad_min > 0:
        violations.append({"kind": "critical_point_on_curve"})
    return check_from_violations("jordan_curve", violations, max_abs_phi=phi_max,
                                 min_grad_phi=grad_min, **diag)


def convergence_falsifier(field, orbit: OrbitTarget, starts, settings: IntegratorSettings,
                          tol: float, name: str, wrap_indices=()) -> Check:
    """Simulate from perturbed states and require arrival at the orbit.

    Stands in for the largest-invariant-set hypothesis, which cannot be
    decided numerically; a pass is evidence, not proof.
    """
    violations = []
    finals = []
    for x0 in starts:
        traj = integrate(field, x0, settings, wrap_indices=wrap_indices)
        d = orbit.dist(traj.x[-1])
        finals.append(d)
        if not d < tol:
            violations.append({"x0": x0, "final_dist": d})
    check = check_from_violations(name, violations, runs=len(starts),
                                  worst_final_dist=float(np.max(finals)), tol=tol)
    check.heuristic = True
    check.note = "simulation-based falsifier; cannot prove the invariance hypothesis"
    return check


def audit(design: MseaDesign, count: int = 1000, seed: int = SEED, accept=None) -> Report:
    report = Report(subject=design.name)
    report.add(check_jordan(design.orbit))
    report.add(check_minimum(design, count=count, seed=seed))
    report.add(check_h2(design, count=count, seed=seed, accept=accept))
    report.add(check_nonvanishing(design))
    return report
