"""Control-affine plants, port-Hamiltonian target designs and IDA-PBC algebra."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, SingularEvaluation
from .numerics import as_vector, grad_fd, left_annihilator, pseudo_inverse

SEED = 0x5EED


@dataclass(frozen=True)
class Partition:
    """Split of the state into the planar oscillating part and the rest."""

    p_indices: tuple
    l_indices: tuple

    def __post_init__(self):
        p = tuple(int(i) for i in self.p_indices)
        l = tuple(int(i) for i in self.l_indices)
        object.__setattr__(self, "p_indices", p)
        object.__setattr__(self, "l_indices", l)
        if len(p) != 2:
            raise DimensionError("the oscillating block must have exactly two coordinates")
        if set(p) & set(l):
            raise DimensionError("partition blocks overlap")
        if sorted(p + l) != list(range(len(p) + len(l))):
            raise DimensionError("partition does not cover 0..n-1")

    @classmethod
    def leading(cls, n: int) -> "Partition":
        return cls((0, 1), tuple(range(2, n)))

    @property
    def n(self) -> int:
        return len(self.p_indices) + len(self.l_indices)

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[list(self.p_indices)], x[list(self.l_indices)]

    def join(self, x_p, x_l) -> np.ndarray:
        out = np.empty(self.n)
        out[list(self.p_indices)] = x_p
        out[list(self.l_indices)] = x_l
        return out

    def blocks(self, m: np.ndarray):
        """Return the (pp, pl, lp, ll) blocks of a square matrix."""
        p = list(self.p_indices)
        l = list(self.l_indices)
        return m[np.ix_(p, p)], m[np.ix_(p, l)], m[np.ix_(l, p)], m[np.ix_(l, l)]


@dataclass(frozen=True)
class ControlAffinePlant:
    """Open-loop system ``x' = f(x) + g(x) u``."""

    name: str
    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    angle_indices: tuple = ()

    def __post_init__(self):
        if not 1 <= self.m <= self.n:
            raise DimensionError(f"need 1 <= m <= n, got n={self.n}, m={self.m}")

    def field(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.f(x)) + np.asarray(self.g(x)) @ np.asarray(u, dtype=float)


@dataclass(frozen=True)
class PhDesign:
    """Target closed loop ``x' = [J(x) - R(x)] grad H(x)``.

    ``singular`` marks states where ``J`` must not be evaluated directly;
    ``control`` is an optional closed-form feedback that stays valid there.
    Without an analytic ``grad_H`` the gradient falls back to central
    differences.
    """

    name: str
    J: Callable[[np.ndarray], np.ndarray]
    R: Callable[[np.ndarray], np.ndarray]
    H: Callable[[np.ndarray], float]
    grad_H: Optional[Callable[[np.ndarray], np.ndarray]] = None
    singular: Optional[Callable[[np.ndarray], bool]] = None
    control: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad_H is not None:
            return np.asarray(self.grad_H(x), dtype=float)
        return grad_fd(self.H, x)

    def is_singular(self, x) -> bool:
        return bool(self.singular is not None and self.singular(np.asarray(x, dtype=float)))

    def _guard(self, x):
        if self.is_singular(x):
            raise SingularEvaluation(f"design {self.name!r} is singular at x={np.asarray(x).tolist()}")


def closed_loop_field(design: PhDesign, x) -> np.ndarray:
    x = as_vector(x)
    design._guard(x)
    return (design.J(x) - design.R(x)) @ design.gradient(x)


def matching_residual(plant: ControlAffinePlant, design: PhDesign, x) -> np.ndarray:
    """``g_perp(x) (f(x) - [J - R] grad H)``; zero exactly where matching holds.

    A fully actuated plant has no matching constraint and yields an empty vector.
    """
    x = as_vector(x, plant.n)
    if plant.m == plant.n:
        return np.zeros(0)
    g_perp = left_annihilator(plant.g(x))
    return g_perp @ (np.asarray(plant.f(x)) - closed_loop_field(design, x))


def ida_control(plant: ControlAffinePlant, design: PhDesign, x) -> np.ndarray:
    """Generic IDA-PBC law ``g_dagger ([J - R] grad H - f)``.

    Inside the design's singular set the registered closed-form controller is
    used instead; without one the evaluation is refused.
    """
    x = as_vector(x, plant.n)
    if design.is_singular(x):
        if design.control is None:
            design._guard(x)
        return np.asarray(design.control(x), dtype=float)
    target = closed_loop_field(design, x)
    return pseudo_inverse(plant.g(x)) @ (target - np.asarray(plant.f(x)))


def hamiltonian_rate(design: PhDesign, x) -> float:
    x = as_vector(x)
    design._guard(x)
    grad = design.gradient(x)
    return float(-grad @ design.R(x) @ grad)


def symmetry_defects(design: PhDesign, x) -> tuple[float, float]:
    """Norms of ``J + J^T`` and ``R - R^T`` at ``x``."""
    x = as_vector(x)
    design._guard(x)
    j = design.J(x)
    r = design.R(x)
    return float(np.linalg.norm(j + j.T)), float(np.linalg.norm(r - r.T))


def sample_box(low: Sequence[float], high: Sequence[float], count: int, seed: int = SEED,
               accept: Optional[Callable[[np.ndarray], bool]] = None) -> np.ndarray:
    """Uniform random states inside ``[low, high]``, optionally rejection-filtered."""
    rng = np.random.default_rng(seed)
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    out = []
    tries = 0
    while len(out) < count:
        batch = rng.uniform(low, high, size=(max(count, 64), low.size))
        for row in batch:
            if accept is None or accept(row):
                out.append(row)
                if len(out) == count:
                    break
        tries += 1
        if tries > 1000:
            raise ValueError("acceptance region too small for rejection sampling")
    return np.array(out)
