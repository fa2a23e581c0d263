import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from orbitforge.errors import OffOrbit
from orbitforge.msea import (audit, check_h2, check_jordan, check_minimum, check_nonvanishing,
                             compose_hamiltonian, convergence_falsifier, make_msea_design,
                             on_orbit_residual_field, regularized_field, shell_states)
from orbitforge.numerics import IntegratorSettings, grad_fd, integrate
from orbitforge.orbits import CurveTraceError, OrbitTarget, jordan_diagnostics, trace_level_curve
from orbitforge.ph_core import Partition, closed_loop_field
from orbitforge.plants import build_system, pendulum
from orbitforge.plants.im import ImParams, msea_design, msea_rhs, plant as im_plant
from orbitforge.simulate import simulate

P = ImParams()
# closed-form transverse coordinates at t = 5 from (0.3, 0.1, 0) (tools/derive_oracles.py)
Z_AT_5 = (-0.004607221072024812, -0.0664439147323728)


@pytest.fixture(scope="module")
def design():
    return msea_design(P)


class TestComposeHamiltonian:
    def test_zero_on_orbit(self, design):
        h, g = compose_hamiltonian(design, [0.0, 1.0, 5.0])
        assert h == 0.0
        np.testing.assert_array_equal(g, 0.0)

    def test_known_value(self, design):
        h, _ = compose_hamiltonian(design, [3.0, 4.0, 5.0])
        assert h == pytest.approx(8.0, rel=1e-15)

    def test_chain_rule_against_finite_differences(self, design):
        rng = np.random.default_rng(7)
        for _ in range(200):
            x = rng.uniform([-2, -2, 0], [2, 2, 10])
            if math.hypot(x[0], x[1]) < 0.1:
                continue
            _, g = compose_hamiltonian(design, x)
            np.testing.assert_allclose(g, grad_fd(design.base.H, x), atol=1e-6)


class TestCheckH2:
    def test_im_passes(self, design):
        check = check_h2(design, count=500)
        assert check.passed, check.violations[:3]
        assert check.values["min_abs_c_on_orbit"] == pytest.approx(P.beta_star * abs(P.omega_star))

    def test_c_on_orbit(self, design):
        for x in design.orbit.orbit_points()[::128]:
            assert design.c(x) == pytest.approx(-P.beta_star * P.omega_star, rel=1e-12)

    def test_zero_speed_reference_fails(self):
        # bypasses the parameter validation on purpose
        bad = msea_design(SimpleNamespace(R=1.0, beta_star=1.0, omega_star=0.0, k=1.0))
        check = check_h2(bad, count=50)
        assert not check.passed
        assert {v["kind"] for v in check.violations} == {"c_vanishes_on_orbit"}

    def test_doubled_coupling_detected(self, design):
        base = design.base

        def J2(x):
            out = base.J(x).copy()
            out[0, 1] *= 2.0
            out[1, 0] *= 2.0
            return out

        doubled = replace(design, base=replace(base, J=J2))
        check = check_h2(doubled, count=100)
        assert not check.passed
        for v in check.violations:
            assert v["kind"] == "parameterization"
            assert v["residual"] == pytest.approx(abs(design.c(v["x"])), rel=1e-9)


class TestOnOrbitResidualField:
    def test_im_rotation(self, design):
        x = np.array([P.beta_star, 0.0, P.omega_star])
        v, n1 = on_orbit_residual_field(design, x)
        np.testing.assert_allclose(v, [0.0, P.beta_star * P.omega_star, 0.0], atol=1e-15)
        assert n1 == pytest.approx(P.beta_star * abs(P.omega_star))
        plant_side = im_plant(P).field(x, design.base.control(x))
        np.testing.assert_allclose(plant_side, v, atol=1e-12)

    def test_off_orbit_rejected(self, design):
        with pytest.raises(OffOrbit):
            on_orbit_residual_field(design, [1.1, 0.0, 5.0])
        with pytest.raises(OffOrbit):
            on_orbit_residual_field(design, [1.0, 0.0, 5.1])

    def test_vanishing_c_flagged(self):
        bad = msea_design(SimpleNamespace(R=1.0, beta_star=1.0, omega_star=0.0, k=1.0))
        v, n1 = on_orbit_residual_field(bad, [1.0, 0.0, 0.0])
        assert n1 == 0.0 and not np.any(v)
        check = check_nonvanishing(bad)
        assert not check.passed
        assert check.violations[0]["kind"] == "equilibrium_on_orbit"

    def test_pendulum_level_set_moves(self):
        _, d, _ = pendulum.pendulum_local()
        w = math.sqrt(2.0 * (d.H_p_star + 0.25))
        x = np.array([0.0, w])
        assert abs(d.phi(x)) < 1e-15
        np.testing.assert_allclose(closed_loop_field(d.base, x), [w, 0.0], atol=1e-15)


class TestRegularizedField:
    def test_matches_factored_form_off_orbit(self, design):
        for x in shell_states(design.orbit, 100, radii=(0.01, 0.5), seed=3,
                              accept=lambda x: not design.base.is_singular(x)):
            ref = closed_loop_field(design.base, x)
            np.testing.assert_allclose(regularized_field(design, x), ref, atol=1e-12 * max(1, np.abs(ref).max()))

    def test_matches_plant_side_on_orbit(self, design):
        plant = im_plant(P)
        for x in design.orbit.orbit_points()[::64]:
            np.testing.assert_allclose(regularized_field(design, x), plant.field(x, design.base.control(x)),
                                       atol=1e-12)


class TestDesignProperties:
    def test_minimum_condition(self, design):
        check = check_minimum(design, count=1000)
        assert check.passed, check.violations[:3]

    def test_jordan_curve(self, design):
        assert check_jordan(design.orbit).passed

    def test_audit_passes(self, design):
        report = audit(design, count=300)
        assert report.passed, [c.name for c in report.checks if not c.passed]

    def test_energy_descent(self):
        traj = simulate(build_system("im_fixed"), [0.3, 0.1, 0.0], IntegratorSettings(t_end=10.0))
        assert np.max(np.diff(traj.H)) <= 1e-9

    def test_orbit_invariance(self, design):
        traj = integrate(msea_rhs(P), [P.beta_star, 0.0, P.omega_star], IntegratorSettings(t_end=10.0))
        assert np.max(design.orbit.dist(traj.x)) < 1e-6
        phi = np.hypot(traj.x[:, 0], traj.x[:, 1]) - P.beta_star
        assert np.max(np.abs(phi)) < 1e-8

    def test_transverse_coordinates_match_closed_form(self):
        # z1' = -R z1 and z2' = -(k/beta*) |psi| z2 integrate in closed form
        traj = integrate(msea_rhs(P), [0.3, 0.1, 0.0], IntegratorSettings(t_end=5.0))
        x = traj.x[-1]
        z = (math.hypot(x[0], x[1]) - P.beta_star, x[2] - P.omega_star)
        np.testing.assert_allclose(z, Z_AT_5, atol=1e-10)

    def test_falsifier_reports_heuristic(self, design):
        starts = shell_states(design.orbit, 5, radii=(0.05, 0.5), seed=1)
        check = convergence_falsifier(msea_rhs(P), design.orbit, starts,
                                      IntegratorSettings(t_end=20.0, step=1e-2, stride=2000), 1e-6, "h1")
        assert check.passed and check.heuristic
        assert check.values["runs"] == 5

    def test_falsifier_catches_nonconvergence(self, design):
        starts = shell_states(design.orbit, 3, radii=(0.05, 0.5), seed=1)
        check = convergence_falsifier(lambda x: (0.0, 0.0, 0.0), design.orbit, starts,
                                      IntegratorSettings(t_end=1.0, step=0.1), 1e-6, "h1")
        assert not check.passed and check.violation_count == 3


class TestOrbitTarget:
    def test_samples_on_level_set(self, design):
        orbit = design.orbit
        assert orbit.curve_samples.shape == (2048, 2)
        assert max(abs(orbit.phi(p)) for p in orbit.curve_samples) < 1e-10

    def test_traced_curve_matches_circle(self):
        pts = trace_level_curve(lambda p: float(p @ p) - 1.0, lambda p: 2.0 * p, [1.0, 0.0], n_samples=512)
        np.testing.assert_allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0, atol=1e-12)
        seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        assert seg.max() / seg.min() < 1.0 + 1e-4
        assert seg.sum() == pytest.approx(2 * math.pi, rel=1e-5)

    def test_pendulum_traced_orbit(self):
        _, d, orbit = pendulum.pendulum_local()
        pts = orbit.curve_samples
        assert max(abs(orbit.phi(p)) for p in pts) < 1e-10
        assert np.all(np.abs(pts[:, 0]) < math.pi / 3)
        assert pts[:, 0].max() == pytest.approx(math.pi / 4, abs=1e-6)
        assert check_jordan(orbit).passed

    def test_open_curve_fails_to_trace(self):
        with pytest.raises(CurveTraceError):
            trace_level_curve(lambda p: float(p[1]), lambda p: np.array([0.0, 1.0]), [0.0, 0.0],
                              max_length=5.0)

    @pytest.mark.parametrize("offset", [0.0, 0.5])
    def test_figure_eight_is_not_simple(self, offset):
        # offset 0 puts the crossing on a sample, 0.5 between samples
        s = 2 * math.pi * (np.arange(400) + offset) / 400
        diag = jordan_diagnostics(np.column_stack([np.sin(s), np.sin(s) * np.cos(s)]))
        assert diag["closed"] and not diag["simple"]

    def test_circle_is_simple(self):
        s = 2 * math.pi * np.arange(400) / 400
        diag = jordan_diagnostics(np.column_stack([np.cos(s), np.sin(s)]))
        assert diag["closed"] and diag["simple"]

    def test_custom_design_through_factory(self):
        # unit circle as a ring minimum of a plain rotation field
        part = Partition((0, 1), ())
        orbit = OrbitTarget(phi=lambda p: math.hypot(*p) - 1.0, partition=part, x_l_star=[],
                            grad_phi=lambda p: np.asarray(p) / math.hypot(*p),
                            parameterization=lambda s: np.column_stack([np.cos(s), np.sin(s)]))
        d = make_msea_design(
            "circle", J=lambda x: np.zeros((2, 2)), R=lambda x: np.eye(2),
            H0=lambda x0, x_l: 0.5 * x0 * x0, grad_H0=lambda x0, x_l: (x0, np.zeros(0)),
            orbit=orbit, c=lambda x: 1.0, J_rest=lambda x: np.zeros((2, 2)),
        )
        h, g = compose_hamiltonian(d, [2.0, 0.0])
        assert h == pytest.approx(0.5) and g == pytest.approx([1.0, 0.0])
        v, n1 = on_orbit_residual_field(d, [0.0, 1.0])
        np.testing.assert_allclose(v, [1.0, 0.0], atol=1e-15)
        assert check_nonvanishing(d).passed
