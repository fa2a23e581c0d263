"""Target orbits given as the zero level set of a planar function.

The orbit is the closed curve ``{Phi(x_p) = 0}`` times the constant value of
the remaining coordinates.  Curves are sampled either from an analytic
parameterization or by tracing the level set with unit-speed RK4 along the
rotated gradient, projecting every point back onto the curve with a Newton
correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import OrbitForgeError
from .numerics import as_vector, grad_fd
from .ph_core import Partition

CURVE_SAMPLES = 2048
CLOSURE_TOL = 1e-6

_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


class CurveTraceError(OrbitForgeError):
    pass


@dataclass(frozen=True)
class OrbitTarget:
    """Closed orbit ``{x : Phi(x_p) = 0, x_l = x_l_star}``.

    Parameters
    ----------
    phi, grad_phi
        Curve function on the planar block and its gradient (finite
        differences when ``grad_phi`` is None).
    partition
        Which coordinates form the planar block.
    x_l_star
        Constant value of the remaining coordinates on the orbit.
    parameterization
        Optional ``s -> x_p`` map over ``s in [0, 2 pi)``, vectorized over ``s``.
    seed
        A planar point on (or near) the wanted curve component, used for tracing.
    domain
        Optional predicate on ``x_p`` selecting the wanted curve component.
    distance
        Optional analytic distance to the orbit, vectorized over rows of states.
    periodic
        Positions inside ``x_p`` that are angles; distance queries also try the
        ``+-2 pi`` images.
    """

    phi: Callable[[np.ndarray], float]
    partition: Partition
    x_l_star: np.ndarray
    grad_phi: Optional[Callable[[np.ndarray], np.ndarray]] = None
    parameterization: Optional[Callable[[np.ndarray], np.ndarray]] = None
    seed: Optional[np.ndarray] = None
    domain: Optional[Callable[[np.ndarray], bool]] = None
    distance: Optional[Callable[[np.ndarray], np.ndarray]] = None
    periodic: tuple = ()
    n_samples: int = CURVE_SAMPLES

    def __post_init__(self):
        x_l = np.asarray(self.x_l_star, dtype=float).reshape(-1)
        if x_l.size != len(self.partition.l_indices):
            raise ValueError("x_l_star does not match the partition")
        object.__setattr__(self, "x_l_star", x_l)

    def gradient(self, x_p) -> np.ndarray:
        x_p = np.asarray(x_p, dtype=float)
        if self.grad_phi is not None:
            return np.asarray(self.grad_phi(x_p), dtype=float)
        return grad_fd(self.phi, x_p)

    @cached_property
    def curve_samples(self) -> np.ndarray:
        if self.parameterization is not None:
            s = 2.0 * np.pi * np.arange(self.n_samples) / self.n_samples
            return np.asarray(self.parameterization(s), dtype=float)
        if self.seed is None:
            raise CurveTraceError("orbit has neither a parameterization nor a seed point")
        return trace_level_curve(self.phi, self.gradient, self.seed, self.n_samples)

    @cached_property
    def _tree(self) -> cKDTree:
        return cKDTree(self.curve_samples)

    def orbit_points(self) -> np.ndarray:
        """Curve samples lifted to full states."""
        pts = self.curve_samples
        return np.array([self.partition.join(p, self.x_l_star) for p in pts])

    def dist(self, x) -> np.ndarray | float:
        """Distance to the orbit for one state or for each row of a 2-D array."""
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        if self.distance is not None:
            d = np.asarray(self.distance(arr), dtype=float)
        else:
            x_p = arr[:, list(self.partition.p_indices)]
            x_l = arr[:, list(self.partition.l_indices)]
            d_p = self._curve_distance(x_p)
            pts = self.curve_samples
            for k in self.periodic:
                lo, hi = pts[:, k].min(), pts[:, k].max()
                for shift in (-2.0 * np.pi, 2.0 * np.pi):
                    moved = x_p[:, k] + shift
                    near = (moved > lo - d_p) & (moved < hi + d_p)
                    if np.any(near):
                        shifted = x_p[near].copy()
                        shifted[:, k] += shift
                        d_p[near] = np.minimum(d_p[near], self._curve_distance(shifted))
            d = np.sqrt(d_p**2 + np.sum((x_l - self.x_l_star) ** 2, axis=1))
        return float(d[0]) if single else d

    def _curve_distance(self, x_p: np.ndarray) -> np.ndarray:
        """Distance to the closed polyline through the curve samples."""
        pts = self.curve_samples
        n = len(pts)
        _, i = self._tree.query(x_p)
        best = np.full(len(x_p), np.inf)
        for j in ((i - 1) % n, i):
            a = pts[j]
            seg = pts[(j + 1) % n] - a
            rel = x_p - a
            s = np.clip(np.sum(rel * seg, axis=1) / np.sum(seg * seg, axis=1), 0.0, 1.0)
            best = np.minimum(best, np.linalg.norm(rel - s[:, None] * seg, axis=1))
        return best

    def on_orbit(self, x, tol: float = 1e-6) -> bool:
        x = as_vector(x, self.partition.n)
        x_p, x_l = self.partition.split(x)
        return abs(self.phi(x_p)) <= tol and bool(np.all(np.abs(x_l - self.x_l_star) <= tol))


def _project(phi, grad, p, iters: int = 8) -> np.ndarray:
    for _ in range(iters):
        g = grad(p)
        val = phi(p)
        p = p - val * g / (g @ g)
        if abs(val) < 1e-15:
            break
    return p


def _tangent(grad, p) -> np.ndarray:
    g = grad(p)
    return _ROT @ g / math.hypot(g[0], g[1])


def _march(phi, grad, p, ds, substeps=1):
    h = ds / substeps
    for _ in range(substeps):
        k1 = _tangent(grad, p)
        k2 = _tangent(grad, p + 0.5 * h * k1)
        k3 = _tangent(grad, p + 0.5 * h * k2)
        k4 = _tangent(grad, p + h * k3)
        p = p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return _project(phi, grad, p)


def trace_level_curve(phi, grad, seed, n_samples: int = CURVE_SAMPLES,
                      ds: float = 1e-3, max_length: float = 1e3) -> np.ndarray:
    """Sample a closed level curve ``{phi = 0}`` at ``n_samples`` equal arc-length points."""
    p0 = _project(phi, grad, np.asarray(seed, dtype=float))
    if abs(phi(p0)) > 1e-10:
        raise CurveTraceError(f"could not project seed {seed!r} onto the level set")
    t0 = _tangent(grad, p0)

    # rough pass: find the arc length at which the curve closes
    p = p0
    s = 0.0
    prev_along = None
    length = None
    while s < max_length:
        q = _march(phi, grad, p, ds)
        s += ds
        along = float((q - p0) @ t0)
        if s > 10 * ds and prev_along is not None and prev_along < 0.0 <= along \
                and np.linalg.norm(q - p0) < 10 * ds:
            length = s - along
            break
        prev_along = along
        p = q
    if length is None:
        raise CurveTraceError("level curve did not close within the length budget")

    # equal arc-length pass, with a secant correction on the total length
    for _ in range(6):
        step = length / n_samples
        pts = np.empty((n_samples, 2))
        p = p0
        for i in range(n_samples):
            pts[i] = p
            p = _march(phi, grad, p, step, substeps=2)
        miss = float((p - p0) @ t0)
        if np.linalg.norm(p - p0) < CLOSURE_TOL:
            return pts
        length -= miss
    raise CurveTraceError("traced curve failed to close within tolerance")


def _segments_cross(a, b, c, d) -> np.ndarray:
    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - \
               (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    o1 = orient(a, b, c)
    o2 = orient(a, b, d)
    o3 = orient(c, d, a)
    o4 = orient(c, d, b)
    # touching counts as crossing; fully collinear pairs are left to the bounding-box test
    collinear = (o1 == 0) & (o2 == 0)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    overlap = np.all((np.minimum(c, d) <= hi) & (np.maximum(c, d) >= lo), axis=-1)
    return np.where(collinear, overlap, (o1 * o2 <= 0) & (o3 * o4 <= 0))


def jordan_diagnostics(samples: np.ndarray) -> dict:
    """Closedness and simplicity of a sampled closed polyline."""
    pts = np.asarray(samples, dtype=float)
    nxt = np.roll(pts, -1, axis=0)
    seg = np.linalg.norm(nxt - pts, axis=1)
    closure = float(seg[-1])
    closed = closure <= 3.0 * float(np.median(seg[:-1]))
    crossings = 0
    n = len(pts)
    for i in range(n):
        j = np.arange(i + 2, n)
        if i == 0:
            j = j[j != n - 1]
        if j.size == 0:
            continue
        crossings += int(np.count_nonzero(_segments_cross(pts[i], nxt[i], pts[j], nxt[j])))
    return {"closed": bool(closed), "closing_gap": closure, "self_crossings": crossings,
            "simple": crossings == 0}
