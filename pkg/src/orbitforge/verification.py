"""Verification suites for the built-in designs.

Each suite evaluates the structural conditions of its design type on a random
grid of states and adds simulation-based falsifiers for the hypotheses that
cannot be decided pointwise.
"""

from __future__ import annotations

import math

import numpy as np

from . import epd as epd_mod
from . import msea as msea_mod
from .epd import EpdDesign, msea_to_epd
from .msea import MseaDesign, regularized_field
from .numerics import IntegratorSettings, integrate
from .ph_core import SEED, closed_loop_field, ida_control, matching_residual, sample_box, symmetry_defects
from .plants import design_system
from .plants.base import System
from .plants.im import ImParams, foc_equivalence_check
from .reports import Check, Report, check_from_violations

SYMMETRY_TOL = 1e-12
MATCHING_TOL = 1e-9
EQUIVALENCE_TOL = 1e-12
REGULARIZED_TOL = 1e-9
FOC_TOL = 1e-12
PSD_TOL = 1e-12
FALSIFIER_STARTS = 20


def grid_states(system: System, count: int, seed: int = SEED) -> np.ndarray:
    low, high = system.box
    return sample_box(low, high, count, seed=seed, accept=system.accept)


def check_symmetry(design, grid) -> Check:
    violations = []
    worst_j = worst_r = 0.0
    for x in grid:
        dj, dr = symmetry_defects(design, x)
        worst_j, worst_r = max(worst_j, dj), max(worst_r, dr)
        if dj > SYMMETRY_TOL or dr > SYMMETRY_TOL:
            violations.append({"x": x, "J_skew_defect": dj, "R_sym_defect": dr})
    return check_from_violations("symmetry", violations, max_J_skew_defect=worst_j,
                                 max_R_sym_defect=worst_r)


def check_matching(plant, design, grid) -> Check:
    violations = []
    worst = 0.0
    for x in grid:
        r = float(np.linalg.norm(matching_residual(plant, design, x)))
        worst = max(worst, r)
        if not r < MATCHING_TOL:
            violations.append({"x": x, "residual": r})
    return check_from_violations("matching", violations, max_residual=worst, tol=MATCHING_TOL)


def check_feedback_identity(system: System, grid) -> Check:
    """The registered closed-form feedback realizes the target field: ``f + g u = (J - R) grad H``."""
    plant, design = system.plant, system.design.base
    violations = []
    worst = 0.0
    for x in grid:
        target = closed_loop_field(design, x)
        got = plant.field(x, design.control(x))
        err = float(np.max(np.abs(got - target))) / max(1.0, float(np.max(np.abs(target))))
        worst = max(worst, err)
        if not err < MATCHING_TOL:
            violations.append({"x": x, "relative_error": err})
    return check_from_violations("closed_form_feedback", violations, max_relative_error=worst)


def check_damping_psd(design, grid, block=None) -> Check:
    """Damping (or one of its diagonal blocks) is positive semidefinite, so ``H`` cannot grow."""
    violations = []
    worst = np.inf
    for x in grid:
        r = design.base.R(x) if block is None else block(x)
        if r.size == 0:
            continue
        lam = float(np.linalg.eigvalsh(0.5 * (r + r.T)).min())
        worst = min(worst, lam)
        if lam < -PSD_TOL:
            violations.append({"x": x, "min_eigenvalue": lam})
    name = "damping_psd" if block is None else "rest_damping_psd"
    return check_from_violations(name, violations, min_eigenvalue=worst)


def check_foc_equivalence(params: ImParams, count: int, seed: int = SEED) -> Check:
    rng = np.random.default_rng(seed + 7)
    worst = 0.0
    violations = []
    done = 0
    while done < count:
        x = rng.uniform([-3, -3, -10], [3, 3, 10])
        if math.hypot(x[0], x[1]) < 1e-3:
            continue
        theta = rng.uniform(-math.pi, math.pi)
        r = float(np.linalg.norm(foc_equivalence_check(params, x, theta)))
        worst = max(worst, r)
        if not r < FOC_TOL:
            violations.append({"x": x, "theta": theta, "residual": r})
        done += 1
    return check_from_violations("foc_equivalence", violations, max_residual=worst, tol=FOC_TOL)


def _rel(a, b) -> float:
    return float(np.max(np.abs(a - b))) / max(1.0, float(np.max(np.abs(b))))


def check_msea_epd_equivalence(system: System, grid, seed: int = SEED) -> Check:
    """Fields and feedback of the ring-minimum design against its pumping-and-damping forms.

    Compared: the automatic rewrite of the ring-minimum design and the
    built-in pumping-and-damping design.  Off the shell the generic laws must
    agree to ``1e-12``; close to the orbit the ring-minimum field is evaluated
    in regularized form and compared at ``1e-9``.
    """
    m: MseaDesign = system.extras["msea"]
    built: EpdDesign = system.extras["epd"]
    plant = system.plant
    rewritten = msea_to_epd(m)
    gaps = {}
    violations = []
    for label, other in (("rewritten", rewritten), ("built_in", built)):
        worst_f = worst_u = abs_f = abs_u = 0.0
        for x in grid:
            fa, fb = closed_loop_field(m.base, x), closed_loop_field(other.base, x)
            ua, ub = ida_control(plant, m.base, x), ida_control(plant, other.base, x)
            abs_f = max(abs_f, float(np.max(np.abs(fa - fb))))
            abs_u = max(abs_u, float(np.max(np.abs(ua - ub))))
            worst_f = max(worst_f, _rel(fa, fb))
            worst_u = max(worst_u, _rel(ua, ub))
        gaps[label] = {"field_abs": abs_f, "control_abs": abs_u,
                       "field_rel": worst_f, "control_rel": worst_u}
        if not (worst_f < EQUIVALENCE_TOL and worst_u < EQUIVALENCE_TOL):
            violations.append({"kind": f"off_shell_{label}", "field_rel": worst_f, "control_rel": worst_u})
    near = msea_mod.shell_states(m.orbit, len(grid), radii=(0.0, 1e-3), seed=seed + 3,
                                 accept=lambda x: math.hypot(x[0], x[1]) > 1e-3)
    worst_near = 0.0
    for x in near:
        ref = regularized_field(m, x)
        for other in (rewritten, built):
            worst_near = max(worst_near, _rel(closed_loop_field(other.base, x), ref))
            worst_near = max(worst_near, _rel(ida_control(plant, other.base, x), m.base.control(x)))
    if not worst_near < REGULARIZED_TOL:
        violations.append({"kind": "near_orbit", "relative_gap": worst_near})
    return check_from_violations("msea_epd_equivalence", violations, gaps=gaps,
                                 near_orbit_relative_gap=worst_near)


def _falsifier_settings(system: System) -> tuple[IntegratorSettings, float]:
    if system.plant.name == "pendulum":
        return IntegratorSettings(t_end=60.0, step=1e-2, stride=6000), 1e-4
    return IntegratorSettings(t_end=20.0, step=1e-2, stride=2000), 1e-6


def rest_convergence(system: System, starts, settings: IntegratorSettings, tol: float) -> Check:
    """Simulation stand-in for the hypothesis that the rest coordinates settle at ``x_l_star``."""
    orbit = system.orbit
    l_idx = list(orbit.partition.l_indices)
    if not l_idx:
        check = check_from_violations("h3_rest_convergence", [], runs=0)
        check.note = "design has no rest coordinates"
        return check
    violations = []
    worst = 0.0
    for x0 in starts:
        traj = integrate(system.rhs, x0, settings, wrap_indices=system.wrap_indices)
        e = float(np.max(np.abs(traj.x[-1, l_idx] - orbit.x_l_star)))
        worst = max(worst, e)
        if not e < tol:
            violations.append({"x0": x0, "final_error": e})
    check = check_from_violations("h3_rest_convergence", violations, runs=len(starts),
                                  worst_final_error=worst, tol=tol)
    check.heuristic = True
    check.note = "simulation-based falsifier; cannot prove the hypothesis"
    return check


def _near_orbit_starts(system: System, count: int, seed: int) -> np.ndarray:
    radii = (0.01, 0.1) if system.plant.name == "pendulum" else (0.05, 0.5)
    accept = system.accept
    return msea_mod.shell_states(system.orbit, count, radii=radii, seed=seed + 11, accept=accept)


def verify_msea(system: System, grid_size: int, seed: int) -> Report:
    design: MseaDesign = system.design
    report = Report(subject=design.name)
    grid = grid_states(system, grid_size, seed)
    report.add(check_symmetry(design.base, grid))
    report.add(check_matching(system.plant, design.base, grid))
    report.add(check_feedback_identity(system, grid))
    report.add(check_damping_psd(design, grid))
    report.extend(msea_mod.audit(design, count=grid_size, seed=seed, accept=system.accept))
    settings, tol = _falsifier_settings(system)
    starts = _near_orbit_starts(system, FALSIFIER_STARTS, seed)
    report.add(msea_mod.convergence_falsifier(system.rhs, system.orbit, starts, settings, tol,
                                              "h1_orbit_convergence", system.wrap_indices))
    if isinstance(system.params, ImParams):
        report.add(check_foc_equivalence(system.params, grid_size, seed))
        report.add(check_msea_epd_equivalence(system, grid[: min(len(grid), 1000)], seed))
    return report


def verify_epd(system: System, grid_size: int, seed: int) -> Report:
    design: EpdDesign = system.design
    report = Report(subject=design.name)
    grid = grid_states(system, grid_size, seed)
    part = design.partition
    report.add(check_symmetry(design.base, grid))
    report.add(check_matching(system.plant, design.base, grid))
    report.add(check_feedback_identity(system, grid))
    report.add(msea_mod.check_jordan(design.orbit))
    report.add(epd_mod.pd_condition_check(design, grid))
    report.add(epd_mod.check_h4(design, grid))
    report.add(epd_mod.check_h5(design))
    report.add(check_damping_psd(design, grid, block=lambda x: part.blocks(design.base.R(x))[3]))
    settings, tol = _falsifier_settings(system)
    starts = _near_orbit_starts(system, FALSIFIER_STARTS, seed)
    report.add(rest_convergence(system, grid[:FALSIFIER_STARTS], settings, tol))
    report.add(msea_mod.convergence_falsifier(system.rhs, system.orbit, starts, settings, tol,
                                              "orbit_convergence", system.wrap_indices))
    return report


def verify(name: str, grid_size: int = 1000, seed: int = SEED, params=None) -> Report:
    """Run the suite that matches the design type of the named built-in design."""
    system = design_system(name, params)
    if isinstance(system.design, MseaDesign):
        report = verify_msea(system, grid_size, seed)
    else:
        report = verify_epd(system, grid_size, seed)
    report.subject = name
    return report
