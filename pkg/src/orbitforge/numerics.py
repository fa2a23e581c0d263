"""Small dense linear algebra, finite differences and ODE integrators.

Everything here works on plain numpy arrays.  The fixed-step RK4 loop is
written over Python floats on purpose: for the 2- and 3-dimensional closed
loops in this package that is several times faster than numpy arithmetic on
tiny arrays, and it keeps runs bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteState, RankDeficient, StepUnderflow

RANK_RTOL = 1e-10
RANK_ATOL = float(np.sqrt(np.finfo(float).tiny))
FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)
MIN_ADAPTIVE_STEP = 1e-14

VectorField = Callable[[Sequence[float]], Sequence[float]]


def as_vector(x, n: Optional[int] = None) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if n is not None and v.size != n:
        raise DimensionError(f"expected a vector of length {n}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def as_matrix(a, shape: Optional[tuple[int, int]] = None) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if shape is not None and m.shape != shape:
        raise DimensionError(f"expected shape {shape}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _check_rank(g: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(g, compute_uv=False)
    # the absolute floor keeps 1 / s finite
    if s.size == 0 or s[-1] <= RANK_RTOL * s[0] or s[-1] < RANK_ATOL:
        raise RankDeficient(
            f"input matrix of shape {g.shape} is rank deficient "
            f"(singular values {s.tolist()})"
        )
    return s


def pseudo_inverse(g) -> np.ndarray:
    """Left inverse ``(g^T g)^{-1} g^T`` of a full column rank matrix."""
    g = as_matrix(g)
    n, m = g.shape
    if m > n:
        raise DimensionError(f"need n >= m, got shape {g.shape}")
    _check_rank(g)
    # same matrix as the normal-equations form, without squaring the condition number
    u, s, vt = np.linalg.svd(g, full_matrices=False)
    return (vt.T / s) @ u.T


def left_annihilator(g) -> np.ndarray:
    """Orthonormal basis of the left null space of ``g``, one basis vector per row.

    The rows come from the trailing left singular vectors, so the result has
    full row rank and ``left_annihilator(g) @ g`` vanishes to rounding.
    """
    g = as_matrix(g)
    n, m = g.shape
    if n <= m:
        raise DimensionError(f"left annihilator needs n > m, got shape {g.shape}")
    _check_rank(g)
    u, _, _ = np.linalg.svd(g, full_matrices=True)
    return u[:, m:].T.copy()


def grad_fd(h: Callable[[np.ndarray], float], x, scale: float = 1.0) -> np.ndarray:
    """Central-difference gradient with per-coordinate step ``cbrt(eps)*max(|x_i|, scale)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        step = FD_STEP * max(abs(x[i]), scale)
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        out[i] = (h(xp) - h(xm)) / (xp[i] - xm[i])
    return out


def hessian_fd(h: Callable[[np.ndarray], float], x, scale: float = 1.0) -> np.ndarray:
    """Symmetric second-difference Hessian; step ``eps**(1/4)`` scaled like grad_fd."""
    x = np.asarray(x, dtype=float)
    n = x.size
    steps = np.array([np.finfo(float).eps ** 0.25 * max(abs(v), scale) for v in x])
    hess = np.empty((n, n))
    f0 = h(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = steps[i]
        hess[i, i] = (h(x + ei) - 2.0 * f0 + h(x - ei)) / steps[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = steps[j]
            val = (h(x + ei + ej) - h(x + ei - ej) - h(x - ei + ej) + h(x - ei - ej)) / (
                4.0 * steps[i] * steps[j]
            )
            hess[i, j] = hess[j, i] = val
    return hess


@dataclass(frozen=True)
class IntegratorSettings:
    """How to integrate one run.

    ``stride`` is the number of accepted steps between stored samples; the
    final state is always stored.
    """

    t_end: float
    method: str = "rk4"
    step: float = 1e-3
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = 0.1
    stride: int = 1

    def __post_init__(self):
        if self.method not in ("rk4", "dopri5"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if not self.t_end > 0:
            raise ValueError("t_end must be > 0")
        if not self.step > 0:
            raise ValueError("step must be > 0")
        if not (self.rtol > 0 and self.atol > 0 and self.max_step > 0):
            raise ValueError("tolerances and max_step must be > 0")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError("stride must be a positive integer")


def _freeze(a):
    if a is None:
        return None
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution of one integration run plus derived scalar channels."""

    t: np.ndarray
    x: np.ndarray
    u: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    Phi: Optional[np.ndarray] = None
    dist: Optional[np.ndarray] = None
    branch: Optional[tuple] = None
    extras: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("t", "x", "u", "H", "Phi", "dist"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        object.__setattr__(self, "extras", {k: _freeze(v) for k, v in self.extras.items()})
        if self.x.ndim != 2 or self.x.shape[0] != self.t.size:
            raise DimensionError("state samples do not match the time grid")

    def __len__(self):
        return self.t.size

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def with_channels(self, **kw) -> "Trajectory":
        return replace(self, **kw)

    def channel(self, name: str) -> np.ndarray:
        """Look up ``t``, ``x_<i>``, ``u_<i>`` (1-based), ``H``, ``Phi``, ``dist_A`` or an extra."""
        if name == "t":
            return self.t
        if name in ("H", "Phi"):
            return getattr(self, name)
        if name == "dist_A":
            return self.dist
        if name.startswith("x_"):
            return self.x[:, int(name[2:]) - 1]
        if name.startswith("u_") and self.u is not None:
            return self.u[:, int(name[2:]) - 1]
        if name in self.extras:
            return self.extras[name]
        raise KeyError(name)


def _wrap_angle(a: float) -> float:
    a = math.remainder(a, 2.0 * math.pi)
    return math.pi if a == -math.pi else a


def _rk4_stepper(field, h: float, n: int):
    """One classical RK4 step over float lists, unrolled for the common small dimensions."""
    h2 = 0.5 * h
    h6 = h / 6.0
    if n == 2:
        def step(x):
            a, b = x
            p1, q1 = field(x)
            p2, q2 = field((a + h2 * p1, b + h2 * q1))
            p3, q3 = field((a + h2 * p2, b + h2 * q2))
            p4, q4 = field((a + h * p3, b + h * q3))
            return [a + h6 * (p1 + 2.0 * (p2 + p3) + p4), b + h6 * (q1 + 2.0 * (q2 + q3) + q4)]
        return step
    if n == 3:
        def step(x):
            a, b, c = x
            p1, q1, r1 = field(x)
            p2, q2, r2 = field((a + h2 * p1, b + h2 * q1, c + h2 * r1))
            p3, q3, r3 = field((a + h2 * p2, b + h2 * q2, c + h2 * r2))
            p4, q4, r4 = field((a + h * p3, b + h * q3, c + h * r3))
            return [a + h6 * (p1 + 2.0 * (p2 + p3) + p4), b + h6 * (q1 + 2.0 * (q2 + q3) + q4),
                    c + h6 * (r1 + 2.0 * (r2 + r3) + r4)]
        return step

    def step(x):
        k1 = field(x)
        k2 = field([a + h2 * b for a, b in zip(x, k1)])
        k3 = field([a + h2 * b for a, b in zip(x, k2)])
        k4 = field([a + h * b for a, b in zip(x, k3)])
        return [a + h6 * (b + 2.0 * (c + d) + e) for a, b, c, d, e in zip(x, k1, k2, k3, k4)]
    return step


def _rk4_fixed(field, x0, settings, wrap):
    h = settings.step
    n_steps = int(round(settings.t_end / h))
    stride = int(settings.stride)
    step = _rk4_stepper(field, h, len(x0))
    isfinite = math.isfinite
    pi = math.pi
    x = [float(v) for v in x0]
    ts = [0.0]
    xs = [list(x)]
    i = 0
    try:
        for i in range(1, n_steps + 1):
            x = step(x)
            if not isfinite(sum(x)):
                raise NonFiniteState(i * h)
            for j in wrap:
                if not -pi < x[j] <= pi:
                    x[j] = _wrap_angle(x[j])
            if i % stride == 0 or i == n_steps:
                ts.append(i * h)
                xs.append(x)
    except (OverflowError, ZeroDivisionError) as exc:
        raise NonFiniteState(i * h, f"non-finite state encountered at t={i * h:.6g} ({exc})") from exc
    return np.array(ts), np.array(xs)


# Dormand-Prince 5(4) tableau.
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_DP_E = _DP_B5 - _DP_B4


def _dopri5(field, x0, settings, wrap):
    def f(v):
        return np.asarray(field(v), dtype=float)

    t = 0.0
    x = np.array(x0, dtype=float)
    t_end = settings.t_end
    h = min(settings.max_step, settings.step, t_end)
    ts = [t]
    xs = [x.copy()]
    k = np.empty((7, x.size))
    k[0] = f(x)
    accepted = 0
    while t < t_end:
        h = min(h, t_end - t)
        if h < MIN_ADAPTIVE_STEP:
            raise StepUnderflow(f"adaptive step {h:.3g} below floor at t={t:.6g}")
        for s in range(1, 7):
            k[s] = f(x + h * (np.asarray(_DP_A[s]) @ k[:s]))
        x_new = x + h * (_DP_B5 @ k)
        err_vec = h * (_DP_E @ k)
        scale = settings.atol + settings.rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not np.isfinite(err) or not np.all(np.isfinite(x_new)):
            if h <= MIN_ADAPTIVE_STEP * 10:
                raise NonFiniteState(t + h)
            h *= 0.25
            continue
        if err <= 1.0:
            t = t + h
            x = x_new
            for j in wrap:
                x[j] = _wrap_angle(x[j])
            k[0] = f(x) if wrap else k[6]
            accepted += 1
            if accepted % settings.stride == 0 or t >= t_end:
                ts.append(t)
                xs.append(x.copy())
        factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        h = min(settings.max_step, h * factor)
    return np.array(ts), np.array(xs)


def integrate(
    field: VectorField,
    x0,
    settings: IntegratorSettings,
    wrap_indices: Sequence[int] = (),
) -> Trajectory:
    """Integrate ``x' = field(x)`` from ``x0`` over ``[0, settings.t_end]``.

    ``field`` receives a list of floats (RK4) or an ndarray (dopri5) and may
    return any float sequence.  Coordinates listed in ``wrap_indices`` are
    angles and are wrapped to (-pi, pi] after every accepted step.
    """
    x0 = as_vector(x0)
    if settings.method == "rk4":
        t, x = _rk4_fixed(field, x0, settings, tuple(wrap_indices))
    else:
        t, x = _dopri5(field, x0, settings, tuple(wrap_indices))
    return Trajectory(t=t, x=x)
