"""Trajectory analysis: distance to the orbit, decay rates, periods and oscillation amplitudes."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InsufficientCycles, WindowTooShort
from .numerics import Trajectory
from .orbits import OrbitTarget

MIN_FIT_SAMPLES = 20
MIN_R_SQUARED = 0.99
FIT_FLOOR = 1e-10
TRANSIENT_FRACTION = 0.5


def dist_to_orbit(orbit: OrbitTarget, x) -> float | np.ndarray:
    return orbit.dist(x)


def transverse_coords(orbit: OrbitTarget, x, partition=None) -> np.ndarray:
    """``(Phi(x_p), x_l - x_l_star)``; rows in, rows out."""
    part = partition or orbit.partition
    arr = np.asarray(x, dtype=float)
    rows = np.atleast_2d(arr)
    out = np.empty((len(rows), 1 + len(part.l_indices)))
    for i, r in enumerate(rows):
        x_p, x_l = part.split(r)
        out[i, 0] = orbit.phi(x_p)
        out[i, 1:] = x_l - orbit.x_l_star
    return out[0] if arr.ndim == 1 else out


@dataclass(frozen=True)
class RateFit:
    rate: float
    r_squared: float
    t_start: float
    t_end: float
    samples: int


def _channel(traj: Trajectory, channel) -> np.ndarray:
    if isinstance(channel, str):
        return np.asarray(traj.channel(channel), dtype=float)
    return np.asarray(channel, dtype=float)


def fit_window(t, y, fraction: float = TRANSIENT_FRACTION, floor: float = FIT_FLOOR) -> slice:
    """From the first sample below ``fraction`` of the initial magnitude up to the floating-point floor."""
    mag = np.abs(np.asarray(y, dtype=float))
    below = np.flatnonzero(mag < fraction * mag[0])
    if below.size == 0:
        return slice(0, 0)
    start = int(below[0])
    floored = np.flatnonzero(mag[start:] < floor)
    stop = start + int(floored[0]) if floored.size else mag.size
    return slice(start, stop)


def fit_exponential(traj: Trajectory, channel, window: Optional[slice] = None) -> RateFit:
    """Least-squares decay rate of ``log|channel|`` against time over the fit window."""
    t = np.asarray(traj.t, dtype=float)
    y = _channel(traj, channel)
    win = window if window is not None else fit_window(t, y)
    tw, yw = t[win], np.abs(y[win])
    if tw.size < MIN_FIT_SAMPLES:
        raise WindowTooShort(f"fit window for {channel!r} has {tw.size} samples (< {MIN_FIT_SAMPLES})")
    if np.any(yw <= 0):
        raise WindowTooShort(f"channel {channel!r} is not strictly nonzero over the fit window")
    logy = np.log(yw)
    slope, intercept = np.polyfit(tw, logy, 1)
    resid = logy - (slope * tw + intercept)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return RateFit(rate=-float(slope), r_squared=r2, t_start=float(tw[0]), t_end=float(tw[-1]),
                   samples=int(tw.size))


def fit_exponential_rate(traj: Trajectory, channel, window: Optional[slice] = None) -> tuple[float, float]:
    """``(rate, r_squared)``; a positive rate means decay."""
    fit = fit_exponential(traj, channel, window)
    return fit.rate, fit.r_squared


def _crossing_times(t, y, level: float) -> np.ndarray:
    s = y - level
    idx = np.flatnonzero((s[:-1] < 0) & (s[1:] >= 0) | (s[:-1] > 0) & (s[1:] <= 0))
    frac = s[idx] / (s[idx] - s[idx + 1])
    return t[idx] + frac * (t[idx + 1] - t[idx])


def default_phase(X: np.ndarray) -> np.ndarray:
    return np.arctan2(X[:, 1], X[:, 0])


def estimate_period(traj: Trajectory, phase_fn: Optional[Callable] = default_phase, *,
                    crossing_channel: Optional[str] = None, t_start: float = 0.0,
                    min_cycles: int = 3) -> float:
    """Mean period after ``t_start``.

    With ``crossing_channel`` set, twice the mean interval between zero
    crossings of that channel; otherwise the mean interval between successive
    ``2 pi`` increments of the unwrapped phase.
    """
    keep = np.asarray(traj.t) >= t_start
    t = np.asarray(traj.t)[keep]
    if crossing_channel is not None:
        y = _channel(traj, crossing_channel)[keep]
        times = _crossing_times(t, y, 0.0)
        if times.size < 2 * min_cycles + 1:
            raise InsufficientCycles(
                f"{times.size} zero crossings of {crossing_channel} after t={t_start:g}; "
                f"need {2 * min_cycles + 1}")
        return 2.0 * float(np.mean(np.diff(times)))
    phase = np.unwrap(np.asarray(phase_fn(np.asarray(traj.x)[keep]), dtype=float))
    turns = (phase - phase[0]) / (2.0 * np.pi)
    total = abs(turns[-1])
    if total < min_cycles:
        raise InsufficientCycles(f"only {total:.2f} revolutions after t={t_start:g}; need {min_cycles}")
    sign = 1.0 if turns[-1] > 0 else -1.0
    levels = np.arange(1, int(np.floor(total)) + 1)
    times = np.interp(levels, sign * turns, t)
    times = np.concatenate([[t[0]], times])
    return float(np.mean(np.diff(times)))


@dataclass(frozen=True)
class TurningPoint:
    t: float
    value: float
    kind: str


def _vertex(ts, ys):
    (t0, t1, t2), (y0, y1, y2) = ts, ys
    denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
    a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
    b = (t2 * t2 * (y0 - y1) + t1 * t1 * (y2 - y0) + t0 * t0 * (y1 - y2)) / denom
    c = y0 - a * t0 * t0 - b * t0
    if a == 0:
        return t1, y1
    tv = -b / (2 * a)
    if not min(t0, t2) <= tv <= max(t0, t2):
        return t1, y1
    return tv, c - b * b / (4 * a)


def turning_points(traj: Trajectory, angle_channel: str = "x_1",
                   rate_channel: Optional[str] = "x_2") -> list[TurningPoint]:
    """Local extrema of an angle, located by sign changes of its rate and refined by a parabola."""
    t = np.asarray(traj.t, dtype=float)
    th = _channel(traj, angle_channel)
    w = _channel(traj, rate_channel) if rate_channel is not None else np.gradient(th, t)
    out = []
    n = t.size
    if n < 3:
        return out
    up = (w[:-1] > 0) & (w[1:] <= 0)
    down = (w[:-1] < 0) & (w[1:] >= 0)
    for j in np.flatnonzero(up | down):
        i = j if abs(w[j]) < abs(w[j + 1]) else j + 1
        i = min(max(i, 1), n - 2)
        ys = np.unwrap(th[i - 1:i + 2])
        tv, yv = _vertex(t[i - 1:i + 2], ys)
        yv = float(np.remainder(yv + np.pi, 2 * np.pi) - np.pi) if abs(yv) > np.pi else float(yv)
        out.append(TurningPoint(t=float(tv), value=yv, kind="max" if up[j] else "min"))
    return out


def steady_amplitudes(points: Sequence[TurningPoint], fraction: float = 0.25) -> Optional[tuple]:
    """Mean maximum and mean minimum over the last ``fraction`` of the turning points."""
    if not points:
        return None
    tail = list(points)[-max(2, int(np.ceil(fraction * len(points)))):]
    maxima = [p.value for p in tail if p.kind == "max"]
    minima = [p.value for p in tail if p.kind == "min"]
    if not maxima or not minima:
        return None
    return float(np.mean(maxima)), float(np.mean(minima))


@dataclass
class ConvergenceReport:
    final_dist: float
    rates: dict = field(default_factory=dict)
    period: Optional[float] = None
    amplitudes: Optional[tuple] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["amplitudes"] = list(self.amplitudes) if self.amplitudes is not None else None
        return out


def convergence_report(traj: Trajectory, rate_channels: Sequence[str] = (),
                       period_kwargs: Optional[dict] = None,
                       amplitude_channels: Optional[tuple] = None) -> ConvergenceReport:
    """Collect the requested analyses; rates below the fit-quality bar are left out with a note."""
    report = ConvergenceReport(final_dist=float(traj.dist[-1]) if traj.dist is not None else float("nan"))
    for ch in rate_channels:
        try:
            fit = fit_exponential(traj, ch)
        except WindowTooShort as exc:
            report.notes.append(str(exc))
            continue
        if fit.r_squared > MIN_R_SQUARED:
            report.rates[ch] = asdict(fit)
        else:
            report.notes.append(f"rate for {ch} rejected: R^2 = {fit.r_squared:.4f}")
    if period_kwargs is not None:
        try:
            report.period = estimate_period(traj, **period_kwargs)
        except InsufficientCycles as exc:
            report.notes.append(str(exc))
    if amplitude_channels is not None:
        report.amplitudes = steady_amplitudes(turning_points(traj, *amplitude_channels))
    return report
