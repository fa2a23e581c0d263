"""Closed-loop simulation of a built-in system with all output channels filled in."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInitialState
from .numerics import IntegratorSettings, Trajectory, as_vector, integrate
from .plants.base import System


def sample_channels(system: System, X: np.ndarray) -> dict:
    """``u``, ``H``, ``Phi``, ``dist`` and extras at every row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if system.batch is not None:
        ch = dict(system.batch(X))
    else:
        ch = {
            "u": np.array([np.asarray(system.controller(x), dtype=float) for x in X]),
            "H": np.array([system.energy(x) for x in X]),
            "Phi": np.array([system.phi(x) for x in X]),
        }
    ch["dist"] = np.asarray(system.orbit.dist(X), dtype=float)
    return ch


def simulate(system: System, x0, settings: IntegratorSettings) -> Trajectory:
    """Integrate the plant-side closed loop from ``x0`` and attach the derived channels."""
    try:
        x0 = as_vector(x0, system.plant.n)
    except Exception as exc:
        raise InvalidInitialState(f"initial state: {exc}") from exc
    if system.check_initial is not None:
        system.check_initial(x0)
    traj = integrate(system.rhs, x0, settings, wrap_indices=system.wrap_indices)
    ch = sample_channels(system, traj.x)
    branch = None
    if system.branch is not None:
        branch = tuple(system.branch(x) for x in traj.x)
    extras = {k: v for k, v in ch.items() if k not in ("u", "H", "Phi", "dist")}
    return traj.with_channels(u=ch["u"], H=ch["H"], Phi=ch["Phi"], dist=ch["dist"],
                              branch=branch, extras=extras)
