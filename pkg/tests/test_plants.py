import math

import numpy as np
import pytest

from orbitforge.errors import InvalidInitialState
from orbitforge.numerics import IntegratorSettings, integrate
from orbitforge.ph_core import ida_control, matching_residual, sample_box
from orbitforge.plants import (DESIGNS, PLANTS, build_system, design_system, make_params,
                               pendulum, plant_side_rhs)
from orbitforge.plants.im import (ImParams, foc_control, foc_equivalence_check, im_fixed_frame,
                                  polar_field, rotating_system, to_polar)
from orbitforge.plants.pendulum import PendulumParams
from orbitforge.simulate import sample_channels, simulate

P = ImParams()


class TestImParams:
    @pytest.mark.parametrize("kw", [{"R": 0.0}, {"beta_star": -1.0}, {"k": 0.0}, {"omega_star": 0.0},
                                    {"omega_star": float("inf")}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ImParams(**kw)

    def test_period(self):
        assert ImParams(omega_star=-4.0).period == pytest.approx(math.pi / 2)


class TestImFixedFrame:
    def test_shapes(self):
        plant, m, e, orbit = im_fixed_frame(P)
        assert (plant.n, plant.m) == (3, 2)
        assert m.orbit is orbit
        np.testing.assert_array_equal(orbit.x_l_star, [P.omega_star])

    def test_damping_as_printed(self):
        _, m, _, _ = im_fixed_frame(ImParams(R=2.0, beta_star=0.5, k=3.0))
        x = np.array([0.3, 0.4, 1.0])
        np.testing.assert_allclose(m.base.R(x), np.diag([2.0, 2.0, 3.0 / 0.5 * 0.5]))
        assert m.base.J(np.array([0.6, 0.8, 1.0]))[0, 1] == pytest.approx(-1.0 * 1.0 / 0.5)

    def test_controller_on_orbit(self):
        u = build_system("im_fixed").controller(np.array([P.beta_star, 0.0, P.omega_star]))
        np.testing.assert_allclose(u, [P.beta_star, 0.0], atol=1e-15)

    def test_matching_on_random_states(self):
        plant, m, _, _ = im_fixed_frame(P)
        accept = lambda x: abs(math.hypot(x[0], x[1]) - 1.0) > 1e-3 and math.hypot(x[0], x[1]) > 1e-6
        grid = sample_box([-3, -3, -10], [3, 3, 20], 1000, accept=accept)
        worst = max(np.linalg.norm(matching_residual(plant, m.base, x)) for x in grid)
        assert worst < 1e-9

    def test_on_orbit_speed(self):
        system = build_system("im_fixed")
        for s in np.linspace(0, 2 * math.pi, 17):
            x = np.array([math.cos(s), math.sin(s), P.omega_star])
            v = np.asarray(system.rhs(list(x)))
            np.testing.assert_allclose(v[:2], P.omega_star * np.array([-x[1], x[0]]), atol=1e-12)
            assert math.hypot(v[0], v[1]) == pytest.approx(P.beta_star * abs(P.omega_star))
            assert v[2] == pytest.approx(0.0, abs=1e-12)

    def test_origin_rejected(self):
        with pytest.raises(InvalidInitialState, match="initial flux at unstable origin"):
            simulate(build_system("im_fixed"), [0.0, 0.0, 1.0], IntegratorSettings(t_end=1.0))

    def test_distance_eventually_decreases(self):
        rng = np.random.default_rng(5)
        system = build_system("im_fixed")
        for x0 in rng.uniform([-2, -2, -5], [2, 2, 10], size=(5, 3)):
            traj = simulate(system, x0, IntegratorSettings(t_end=15.0, stride=100))
            tail = traj.dist[len(traj.dist) // 3:]
            assert np.all(np.diff(tail) <= 1e-12)
            assert traj.dist[-1] < 1e-4


class TestRotatingFrame:
    def test_foc_formula(self):
        p = ImParams(beta_star=1.0, k=2.0, omega_star=5.0)
        v = foc_control(p)(np.array([2.0, 0.0, 4.5]))
        np.testing.assert_allclose(v, [1.0, 1.0], atol=1e-15)

    def test_flux_norm_closed_form(self):
        # beta' = -R beta + R beta*, so beta(t) = beta* + (beta0 - beta*) exp(-R t)
        p = ImParams(R=1.5)
        system = rotating_system(p)
        traj = integrate(system.rhs, [0.2, 0.3, 1.0], IntegratorSettings(t_end=3.0, stride=100))
        beta = np.hypot(traj.x[:, 0], traj.x[:, 1])
        expected = p.beta_star + (math.hypot(0.2, 0.3) - p.beta_star) * np.exp(-p.R * traj.t)
        np.testing.assert_allclose(beta, expected, atol=1e-11)

    def test_polar_field(self):
        lam = np.array([0.6, -0.8])
        beta, rho = to_polar(lam)
        f = polar_field(P, (beta, rho, 3.0))
        i_q = P.k / P.beta_star * (P.omega_star - 3.0)
        np.testing.assert_allclose(f, [-P.R * beta + P.R * P.beta_star, P.R / beta * i_q, beta * i_q])
        # the cartesian rotating-frame field agrees after the polar change of coordinates
        v = np.asarray(rotating_system(P).rhs([lam[0], lam[1], 3.0]))
        beta_dot = (lam @ v[:2]) / beta
        rho_dot = (lam[0] * v[1] - lam[1] * v[0]) / beta**2
        np.testing.assert_allclose([beta_dot, rho_dot, v[2]], f, atol=1e-12)

    def test_fixed_point(self):
        v = rotating_system(P).rhs([P.beta_star, 0.0, P.omega_star])
        np.testing.assert_allclose(v, 0.0, atol=1e-15)


class TestFocEquivalence:
    def test_identity_frame_on_orbit(self):
        r = foc_equivalence_check(P, np.array([1.0, 0.0, 5.0]), 0.0)
        np.testing.assert_array_equal(r, [0.0, 0.0])

    def test_random_states(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            x = rng.uniform([-3, -3, -10], [3, 3, 10])
            theta = rng.uniform(-math.pi, math.pi)
            assert np.linalg.norm(foc_equivalence_check(P, x, theta)) < 1e-12

    def test_gain_mismatch_scales_linearly(self):
        rng = np.random.default_rng(4)
        for dk in (0.1, 0.5, 2.0):
            x = rng.uniform([-3, -3, -10], [3, 3, 10])
            theta = rng.uniform(-math.pi, math.pi)
            other = ImParams(k=P.k + dk)
            r = np.linalg.norm(foc_equivalence_check(P, x, theta, foc_params=other))
            assert r == pytest.approx(dk * abs(x[2] - P.omega_star) / P.beta_star, rel=1e-10)


class TestPendulumParams:
    def test_derived_target_level(self):
        # quoted to four decimals as -0.0429 for theta* = pi/4
        assert PendulumParams().H_p_star == pytest.approx(-0.0429, abs=5e-5)

    @pytest.mark.parametrize("kw", [{"variant": "other"}, {"gamma": 0.0}, {"gamma2": -1.0},
                                    {"theta_star": math.pi / 3}, {"theta_star": 0.0}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            PendulumParams(**kw)


class TestPendulum:
    def test_plant(self):
        p = pendulum.plant()
        assert (p.n, p.m, p.angle_indices) == (2, 1, (0,))
        np.testing.assert_allclose(p.g(np.array([0.3, 0.0])), [[0.0], [-math.cos(0.3)]])

    def test_local_damping_as_printed(self):
        _, d, _ = pendulum.pendulum_local()
        x = np.array([0.4, -0.2])
        np.testing.assert_allclose(d.base.R(x), np.diag([0.0, 5.0 * math.cos(0.4) ** 2 * d.phi(x)]),
                                   atol=1e-16)
        np.testing.assert_array_equal(d.base.J(x), [[0.0, 1.0], [-1.0, 0.0]])

    def test_outer_gain_ignores_speed(self):
        params = PendulumParams(variant="almost_global")
        P_ = pendulum.pump_gain(params)
        for w in (-2.0, 0.0, 0.7):
            shape = 1.5 * math.cos(math.pi / 2) + 0.5 * w * w - 0.75
            assert P_(math.pi / 2, w) == pytest.approx(shape * params.gamma2)

    def test_inner_gain_at_origin(self):
        params = PendulumParams(variant="almost_global")
        q = pendulum.pump_gain(params)(0.0, 0.0) / 0.75
        assert q == pytest.approx(-0.20710678118654752 * params.gamma1, rel=1e-12)

    def test_controller_at_origin(self):
        for variant in ("local", "almost_global"):
            u = pendulum.controller(PendulumParams(variant=variant))(np.zeros(2))
            np.testing.assert_array_equal(u, [0.0])

    def test_region_boundaries(self):
        assert pendulum.branch([math.pi / 3, 0.0]) == "gamma2"
        assert pendulum.branch([-math.pi / 3, 0.0]) == "gamma2"
        assert pendulum.branch([math.pi / 3 - 1e-9, 0.0]) == "gamma1"
        assert pendulum.branch([math.pi, 0.0]) == "gamma2"

    def test_pump_and_damp_regions(self):
        params = PendulumParams()
        assert pendulum.region(params, [0.0, 0.0]) == "pump"
        assert pendulum.region(params, [0.0, 2.0]) == "damp"
        assert pendulum.region(params, [math.pi / 4, 0.0]) == "neutral"

    def test_closed_form_feedback_finite_where_input_vanishes(self):
        p, d, _ = pendulum.pendulum_local()
        np.testing.assert_allclose(p.g(np.array([math.pi / 2, 0.1])), 0.0, atol=1e-15)
        assert np.all(np.isfinite(d.base.control(np.array([math.pi / 2, 0.1]))))

    def test_level_distance_monotone_near_orbit(self):
        system = build_system("pendulum_local")
        rng = np.random.default_rng(8)
        starts = [x for x in rng.uniform([-1.0, -0.6], [1.0, 0.6], size=(200, 2))
                  if abs(system.phi(x)) < 0.02][:5]
        assert len(starts) == 5
        for x0 in starts:
            traj = simulate(system, x0, IntegratorSettings(t_end=10.0, stride=10))
            assert np.all(np.diff(np.abs(traj.Phi)) <= 1e-12)


SYSTEMS = [("im_fixed", "msea"), ("im_fixed", "epd"), ("im_fixed", "foc"), ("im_rotating", "foc"),
           ("pendulum_local", "epd"), ("pendulum_global", "epd")]


@pytest.mark.parametrize("plant,variant", SYSTEMS)
def test_fused_closed_loop_matches_generic(plant, variant):
    system = build_system(plant, variant=variant)
    generic = plant_side_rhs(system.plant, system.controller)
    rng = np.random.default_rng(9)
    n = system.plant.n
    low, high = ([-3, -3, -10], [3, 3, 10]) if n == 3 else ([-math.pi, -3], [math.pi, 3])
    for x in rng.uniform(low, high, size=(500, n)):
        if n == 3 and math.hypot(x[0], x[1]) < 1e-2:
            continue
        np.testing.assert_allclose(system.rhs(list(x)), generic(x), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("plant,variant", SYSTEMS)
def test_batch_channels_match_rows(plant, variant):
    system = build_system(plant, variant=variant)
    rng = np.random.default_rng(10)
    n = system.plant.n
    low, high = ([-3, -3, -10], [3, 3, 10]) if n == 3 else ([-math.pi, -3], [math.pi, 3])
    X = rng.uniform(low, high, size=(50, n))
    ch = sample_channels(system, X)
    for i, x in enumerate(X):
        np.testing.assert_allclose(ch["u"][i], system.controller(x), rtol=1e-12, atol=1e-12)
        assert ch["H"][i] == pytest.approx(system.energy(x), rel=1e-12, abs=1e-12)
        assert ch["Phi"][i] == pytest.approx(system.phi(x), rel=1e-12, abs=1e-12)


def test_registry():
    assert set(PLANTS) == {"im_fixed", "im_rotating", "pendulum_local", "pendulum_global"}
    for name in DESIGNS:
        assert design_system(name).design is not None
    with pytest.raises(KeyError):
        make_params("nope")
    with pytest.raises(KeyError):
        design_system("nope")
    with pytest.raises(ValueError):
        build_system("pendulum_local", variant="msea")
    assert make_params("pendulum_global").variant == "almost_global"
