import math
from contextlib import nullcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orbitforge.errors import DimensionError, NonFiniteState, RankDeficient, StepUnderflow
from orbitforge.numerics import (RANK_ATOL, IntegratorSettings, Trajectory, grad_fd, hessian_fd, integrate,
                                 left_annihilator, pseudo_inverse)
from orbitforge.plants import pendulum
from orbitforge.plants.im import ImParams, msea_design, epd_design

# reference values from tools/derive_oracles.py
PENDULUM_GRAD_AT_03_04 = (0.2691222667336957, 0.4)
PENDULUM_LOCAL_X10 = (-0.07644406759632122, -0.6387333754722779)


class TestPseudoInverse:
    def test_unit_column(self):
        np.testing.assert_allclose(pseudo_inverse([[1.0], [0.0]]), [[1.0, 0.0]])

    def test_identity(self):
        np.testing.assert_allclose(pseudo_inverse(np.eye(2)), np.eye(2))

    def test_scaled_column_by_hand(self):
        # g^T g = 4, so (g^T g)^{-1} g^T = [2, 0] / 4
        np.testing.assert_allclose(pseudo_inverse([[2.0], [0.0]]), [[0.5, 0.0]], atol=1e-15)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            pseudo_inverse([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])

    def test_tiny_scale_rejected(self):
        # full rank relative to its own scale, but the inverse is not representable
        with pytest.raises(RankDeficient):
            pseudo_inverse([[1e-200, 0.0], [0.0, 1e-200], [0.0, 0.0]])

    def test_small_scale_inverted(self):
        g = np.array([[1e-100, 0.0], [0.0, 2e-100], [1e-100, 0.0]])
        np.testing.assert_allclose(pseudo_inverse(g) @ g, np.eye(2), atol=1e-12)

    def test_zero_column(self):
        with pytest.raises(RankDeficient):
            pseudo_inverse([[0.0], [0.0]])

    def test_wide_matrix_rejected(self):
        with pytest.raises(DimensionError):
            pseudo_inverse([[1.0, 0.0]])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            pseudo_inverse([[np.nan], [1.0]])


class TestLeftAnnihilator:
    def test_complement_of_e1(self):
        a = left_annihilator([[1.0], [0.0]])
        assert a.shape == (1, 2)
        np.testing.assert_allclose(np.abs(a), [[0.0, 1.0]], atol=1e-15)

    def test_spans_first_two_axes(self):
        g = np.array([[0.0], [0.0], [1.0]])
        a = left_annihilator(g)
        assert a.shape == (2, 3)
        np.testing.assert_allclose(a @ g, 0.0, atol=1e-15)
        np.testing.assert_allclose(a[:, 2], 0.0, atol=1e-15)
        assert np.linalg.matrix_rank(a[:, :2]) == 2

    def test_square_rejected(self):
        with pytest.raises(DimensionError):
            left_annihilator(np.eye(2))

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            left_annihilator(np.zeros((3, 1)))

    def test_random_unit_columns(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            g = rng.normal(size=(3, 1))
            g /= np.linalg.norm(g)
            a = left_annihilator(g)
            assert a.shape == (2, 3)
            assert np.linalg.norm(a @ g) < 1e-12
            np.testing.assert_allclose(a @ a.T, np.eye(2), atol=1e-12)


full_rank = arrays(np.float64, (4, 2), elements=st.floats(-3, 3, allow_nan=False, allow_infinity=False))


@settings(max_examples=200, deadline=None)
@given(full_rank)
def test_inverse_and_annihilator_properties(g):
    s = np.linalg.svd(g, compute_uv=False)
    if s[-1] < RANK_ATOL:
        with pytest.raises(RankDeficient):
            pseudo_inverse(g)
        return
    if s[-1] <= 1e-3 * s[0]:
        with pytest.raises(RankDeficient) if s[-1] <= 1e-10 * s[0] else nullcontext():
            pseudo_inverse(g)
        return
    np.testing.assert_allclose(pseudo_inverse(g) @ g, np.eye(2), atol=1e-10)
    a = left_annihilator(g)
    assert np.linalg.norm(a @ g) < 1e-10 * max(1.0, s[0])
    assert np.linalg.matrix_rank(a) == 2


def test_inverse_identity_on_many_random_matrices():
    rng = np.random.default_rng(0x5EED)
    for _ in range(1000):
        n = rng.integers(2, 6)
        m = rng.integers(1, n)
        g = rng.normal(size=(n, m))
        np.testing.assert_allclose(pseudo_inverse(g) @ g, np.eye(m), atol=1e-10)
        assert np.max(np.abs(left_annihilator(g) @ g)) < 1e-10


class TestGradFd:
    def test_quadratic(self):
        g = grad_fd(lambda x: 0.5 * float(x @ x), np.array([3.0, 4.0]))
        np.testing.assert_allclose(g, [3.0, 4.0], atol=1e-6)

    def test_bilinear(self):
        g = grad_fd(lambda x: x[0] * x[1], np.array([2.0, 5.0]))
        np.testing.assert_allclose(g, [5.0, 2.0], atol=1e-6)

    def test_pendulum_energy(self):
        x = np.array([0.3, 0.4])
        g = grad_fd(pendulum.H_p, x)
        np.testing.assert_allclose(g, PENDULUM_GRAD_AT_03_04, atol=1e-6)
        np.testing.assert_allclose(pendulum.grad_H_p(x), PENDULUM_GRAD_AT_03_04, atol=1e-14)

    def test_matches_registered_gradients(self):
        rng = np.random.default_rng(3)
        p = ImParams()
        designs = [msea_design(p).base, epd_design(p).base,
                   pendulum.pendulum_local()[1].base, pendulum.pendulum_almost_global()[1].base]
        for d in designs:
            n = 2 if d.name.startswith("pendulum") else 3
            for _ in range(100):
                x = rng.uniform(-2, 2, size=n)
                if n == 3 and abs(math.hypot(x[0], x[1]) - 1.0) < 0.05:
                    continue
                if n == 2:
                    x[0] = rng.uniform(-1.0, 1.0)
                np.testing.assert_allclose(grad_fd(d.H, x), d.gradient(x), atol=1e-5)

    def test_hessian_of_pendulum_energy_at_origin(self):
        h = lambda p: pendulum.H_p(p)
        np.testing.assert_allclose(hessian_fd(h, np.zeros(2), scale=1e-2), np.eye(2), atol=1e-3)


class TestIntegratorSettings:
    @pytest.mark.parametrize("kw", [
        {"t_end": 0.0}, {"t_end": 1.0, "step": 0.0}, {"t_end": 1.0, "rtol": -1.0},
        {"t_end": 1.0, "stride": 0}, {"t_end": 1.0, "method": "euler"},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            IntegratorSettings(**kw)


class TestIntegrate:
    def test_exponential_decay(self):
        traj = integrate(lambda x: [-x[0]], [1.0], IntegratorSettings(t_end=1.0, step=1e-3))
        assert traj.t[-1] == pytest.approx(1.0)
        assert abs(traj.x[-1, 0] - math.exp(-1.0)) < 1e-9
        assert abs(traj.x[-1, 0] - 0.3678794) < 1e-7

    def test_rotation_returns(self):
        traj = integrate(lambda x: [-x[1], x[0]], [1.0, 0.0],
                         IntegratorSettings(t_end=2 * math.pi, step=2 * math.pi / 4000))
        np.testing.assert_allclose(traj.x[-1], [1.0, 0.0], atol=1e-6)

    def test_fourth_order(self):
        errs = []
        for h in (0.1, 0.05):
            traj = integrate(lambda x: [-x[0]], [1.0], IntegratorSettings(t_end=1.0, step=h))
            errs.append(abs(traj.x[-1, 0] - math.exp(-1.0)))
        assert 8.0 <= errs[0] / errs[1] <= 32.0

    def test_bit_reproducible(self):
        s = IntegratorSettings(t_end=5.0, step=1e-3, stride=7)
        rhs = pendulum.fast_rhs(pendulum.PendulumParams())
        a = integrate(rhs, [0.3, 0.0], s, wrap_indices=(0,))
        b = integrate(rhs, [0.3, 0.0], s, wrap_indices=(0,))
        assert a.x.tobytes() == b.x.tobytes()
        assert a.t.tobytes() == b.t.tobytes()

    def test_stride_keeps_final_sample(self):
        traj = integrate(lambda x: [-x[0]], [1.0], IntegratorSettings(t_end=1.0, step=0.1, stride=3))
        np.testing.assert_allclose(traj.t, [0.0, 0.3, 0.6, 0.9, 1.0])

    def test_angles_wrapped(self):
        traj = integrate(lambda x: [1.0, 0.0], [3.0, 0.0], IntegratorSettings(t_end=1.0, step=0.01),
                         wrap_indices=(0,))
        assert np.all(traj.x[:, 0] > -math.pi) and np.all(traj.x[:, 0] <= math.pi)
        assert traj.x[-1, 0] == pytest.approx(4.0 - 2 * math.pi)

    def test_against_reference_solution(self):
        # DOP853 at rtol 1e-13 (tools/derive_oracles.py)
        rhs = pendulum.fast_rhs(pendulum.PendulumParams())
        traj = integrate(rhs, [0.1 * math.pi, 0.0], IntegratorSettings(t_end=10.0, step=1e-3),
                         wrap_indices=(0,))
        np.testing.assert_allclose(traj.x[-1], PENDULUM_LOCAL_X10, atol=1e-9)

    def test_non_finite_reports_time(self):
        with pytest.raises(NonFiniteState) as info:
            integrate(lambda x: [x[0] ** 2], [1.0], IntegratorSettings(t_end=2.0, step=1e-2))
        assert 0.9 < info.value.time < 1.1
        assert "t=" in str(info.value)

    def test_adaptive_accuracy(self):
        traj = integrate(lambda x: [-x[0]], [1.0],
                         IntegratorSettings(t_end=1.0, method="dopri5", rtol=1e-10, atol=1e-12))
        assert abs(traj.x[-1, 0] - math.exp(-1.0)) < 1e-9
        assert traj.t[-1] == pytest.approx(1.0)

    def test_adaptive_reference_solution(self):
        rhs = pendulum.fast_rhs(pendulum.PendulumParams())
        traj = integrate(rhs, [0.1 * math.pi, 0.0],
                         IntegratorSettings(t_end=10.0, method="dopri5", rtol=1e-10, atol=1e-12),
                         wrap_indices=(0,))
        np.testing.assert_allclose(traj.x[-1], PENDULUM_LOCAL_X10, atol=1e-7)

    def test_adaptive_step_underflow(self):
        # finite-time blow-up with a sign flip the controller cannot step over
        field = lambda x: [1.0 / (1.0 - x[0]) ** 3 if x[0] < 1.0 else -1e300]
        with pytest.raises((StepUnderflow, NonFiniteState)):
            integrate(field, [0.0], IntegratorSettings(t_end=1.0, method="dopri5", rtol=1e-12, atol=1e-14))


class TestTrajectory:
    def test_immutable(self):
        traj = Trajectory(t=[0.0, 1.0], x=[[1.0], [2.0]])
        with pytest.raises(ValueError):
            traj.x[0, 0] = 3.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            Trajectory(t=[0.0, 1.0], x=[[1.0]])

    def test_channels(self):
        traj = Trajectory(t=[0.0, 1.0], x=[[1.0, 2.0], [3.0, 4.0]], u=[[5.0], [6.0]],
                          H=[1.0, 0.5], Phi=[0.1, 0.0], dist=[0.2, 0.0], extras={"z1": [9.0, 8.0]})
        np.testing.assert_array_equal(traj.channel("x_2"), [2.0, 4.0])
        np.testing.assert_array_equal(traj.channel("u_1"), [5.0, 6.0])
        np.testing.assert_array_equal(traj.channel("dist_A"), [0.2, 0.0])
        np.testing.assert_array_equal(traj.channel("z1"), [9.0, 8.0])
        with pytest.raises(KeyError):
            traj.channel("nope")
