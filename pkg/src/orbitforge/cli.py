"""Command-line scenario runner and design verifier.

Subcommands::

    orbitforge run <config> [--out DIR]
    orbitforge verify <design> [--grid N] [--out DIR]
    orbitforge sweep <config> --param section.key=a:b:steps [...] [--out DIR]

Exit codes: 0 all analyses passed, 1 a threshold was missed, 2 configuration or IO error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import importlib.util
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ScenarioConfig, env_seed, load_config, parse_config, tomllib
from .epd import EpdDesign
from .errors import ConfigError, InvalidInitialState, NonFiniteState, OrbitForgeError
from .metrics import (MIN_R_SQUARED, estimate_period, fit_exponential, steady_amplitudes,
                      turning_points)
from .numerics import Trajectory
from .ph_core import SEED
from .plants import build_system
from .plants.base import System, plant_side_rhs
from .reports import Check, Report, check_from_violations
from .simulate import simulate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
ROUNDING_FLOOR = 64 * np.finfo(float).eps
VERIFIABLE = {
    ("im_fixed", "msea"): "im_msea",
    ("im_fixed", "epd"): "im_epd",
    ("pendulum_local", "epd"): "pendulum_local",
    ("pendulum_global", "epd"): "pendulum_global",
}


# building ------------------------------------------------------------------


def load_custom_controller(path: Path):
    if not path.is_file():
        raise ConfigError(f"controller.file: {path} does not exist")
    spec = importlib.util.spec_from_file_location(f"orbitforge_custom_{path.stem}", path)
    module = importlib.util.module_from_spec(spec)
    try:
        spec.loader.exec_module(module)
    except Exception as exc:
        raise ConfigError(f"controller.file: {path} failed to import: {exc}") from exc
    if not callable(getattr(module, "control", None)):
        raise ConfigError(f"controller.file: {path} does not define control(x, params)")
    return module.control


def build_from_config(cfg: ScenarioConfig) -> System:
    variant = None if cfg.variant == "custom" else cfg.variant
    try:
        system = build_system(cfg.plant, cfg.params, variant)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"plant/controller: {exc}") from exc
    if cfg.variant != "custom":
        return system
    law = load_custom_controller(cfg.custom_file)
    params = system.params
    ctrl = lambda x: np.atleast_1d(np.asarray(law(np.asarray(x, dtype=float), params), dtype=float))
    return replace(system, name=f"{cfg.plant}/custom", controller=ctrl,
                   rhs=plant_side_rhs(system.plant, ctrl), batch=None, variant="custom")


def initial_state(cfg: ScenarioConfig, n: int) -> np.ndarray:
    if cfg.x0 is not None:
        x0 = np.array(cfg.x0)
    else:
        low, high = (np.array(v) for v in cfg.random_initial)
        x0 = np.random.default_rng(cfg.seed).uniform(low, high)
    if x0.size != n:
        raise ConfigError(f"initial.x has {x0.size} entries but plant {cfg.plant!r} has {n} states")
    return x0


# analyses --------------------------------------------------------------------


def _resolve(target, params, where: str) -> Optional[float]:
    """A threshold given as a number or as the name of a plant parameter."""
    if target is None:
        return None
    if isinstance(target, str):
        if not hasattr(params, target):
            raise ConfigError(f"{where}: {target!r} is not a parameter of the plant")
        return float(getattr(params, target))
    return float(target)


def _runs(labels) -> list:
    out = []
    for b in labels:
        if not out or out[-1] != b:
            out.append(b)
    return out


def _is_subsequence(needle, hay) -> bool:
    it = iter(hay)
    return all(any(h == n for h in it) for n in needle)


def analyze(cfg: ScenarioConfig, system: System, traj: Trajectory) -> tuple[list, dict]:
    """Judge the trajectory against every configured analysis; return checks and summary fields."""
    a = cfg.analyses
    params = system.params
    checks: list[Check] = []
    info: dict = {"final_dist": float(traj.dist[-1]), "fitted_rates": {}, "period": None,
                  "amplitudes": None}

    if a.final_dist_max is not None:
        d = info["final_dist"]
        checks.append(check_from_violations(
            "final_dist", [] if d < a.final_dist_max else [{"final_dist": d}],
            final_dist=d, threshold=a.final_dist_max))

    if a.energy_nonincreasing:
        rise = np.diff(traj.H)
        bad = np.flatnonzero(rise > a.energy_slack)
        checks.append(check_from_violations(
            "energy_nonincreasing", [{"t": float(traj.t[i + 1]), "rise": float(rise[i])} for i in bad],
            max_rise=float(rise.max()) if rise.size else 0.0, slack=a.energy_slack))

    for ch in a.rates:
        target = _resolve(a.rate_targets.get(ch), params, f"analyses.rate_targets.{ch}")
        violations = []
        try:
            fit = fit_exponential(traj, ch)
        except OrbitForgeError as exc:
            checks.append(check_from_violations(f"rate_{ch}", [{"error": str(exc)}]))
            continue
        info["fitted_rates"][ch] = {"rate": fit.rate, "r_squared": fit.r_squared,
                                    "t_start": fit.t_start, "t_end": fit.t_end, "samples": fit.samples}
        if not fit.r_squared > MIN_R_SQUARED:
            violations.append({"kind": "poor_fit", "r_squared": fit.r_squared})
        if target is not None and not abs(fit.rate - target) <= a.rate_rel_tol * abs(target):
            violations.append({"kind": "rate_mismatch", "rate": fit.rate, "target": target})
        checks.append(check_from_violations(f"rate_{ch}", violations, rate=fit.rate,
                                            r_squared=fit.r_squared, target=target))

    if a.period:
        target = _resolve(a.period_target, params, "analyses.period_target")
        try:
            period = estimate_period(traj, crossing_channel=a.period_channel, t_start=a.period_t_start)
        except OrbitForgeError as exc:
            checks.append(check_from_violations("period", [{"error": str(exc)}]))
        else:
            info["period"] = period
            ok = target is None or abs(period - target) <= a.period_rel_tol * abs(target)
            checks.append(check_from_violations(
                "period", [] if ok else [{"period": period, "target": target}],
                period=period, target=target))

    if a.turning_points:
        target = _resolve(a.amplitude_target, params, "analyses.amplitude_target")
        amps = steady_amplitudes(turning_points(traj))
        info["amplitudes"] = list(amps) if amps is not None else None
        violations = []
        if amps is None:
            violations.append({"kind": "no_oscillation"})
        elif target is not None:
            hi, lo = amps
            if abs(hi - abs(target)) > a.amplitude_tol or abs(lo + abs(target)) > a.amplitude_tol:
                violations.append({"max": hi, "min": lo, "target": target})
        checks.append(check_from_violations("amplitudes", violations, amplitudes=amps, target=target))

    if a.phi_max is not None:
        keep = traj.t >= a.phi_by
        worst = float(np.max(np.abs(traj.Phi[keep]))) if np.any(keep) else float("nan")
        checks.append(check_from_violations(
            "phi_bound", [] if worst < a.phi_max else [{"max_abs_phi": worst}],
            max_abs_phi=worst, after=a.phi_by, threshold=a.phi_max))

    if a.final_speed_max is not None:
        speed = float(np.linalg.norm(system.rhs(list(traj.x[-1]))))
        checks.append(check_from_violations(
            "final_speed", [] if speed < a.final_speed_max else [{"speed": speed}],
            speed=speed, threshold=a.final_speed_max))

    if a.branch_sequence:
        runs = _runs(traj.branch or ())
        seq = list(a.branch_sequence)
        ok = bool(runs) and runs[0] == seq[0] and runs[-1] == seq[-1] and _is_subsequence(seq, runs)
        checks.append(check_from_violations(
            "branch_sequence", [] if ok else [{"observed": runs[:10], "expected": seq}],
            switches=max(len(runs) - 1, 0), first=runs[0] if runs else None,
            last=runs[-1] if runs else None))

    if a.pumping_damping_sign:
        checks.append(pumping_damping_sign(system, traj))
    return checks, info


def pumping_damping_sign(system: System, traj: Trajectory) -> Check:
    """``dH_p`` and ``Phi`` never share a sign: energy is pumped below the target level and damped above.

    ``dH_p`` is taken along the simulated closed loop, ``grad H_p . x_p'``;
    samples where it is below the rounding floor of that dot product carry
    no sign and are skipped.
    """
    design = system.design
    if not isinstance(design, EpdDesign):
        raise ConfigError("analyses.pumping_damping_sign needs a pumping-and-damping design")
    p_idx = list(design.partition.p_indices)
    violations = []
    tested = 0
    for t, x, phi in zip(traj.t, traj.x, traj.Phi):
        xdot = np.asarray(system.rhs(list(x)), dtype=float)
        terms = design.grad_H_p(x[p_idx]) * xdot[p_idx]
        d_hp = float(terms.sum())
        if abs(d_hp) <= ROUNDING_FLOOR * float(np.abs(terms).sum()) or phi == 0.0:
            continue
        tested += 1
        if np.sign(d_hp) == np.sign(phi):
            violations.append({"t": float(t), "dH_p": d_hp, "Phi": float(phi)})
    return check_from_violations("pumping_damping_sign", violations, samples_tested=tested)


# output ----------------------------------------------------------------------


def write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    n = traj.x.shape[1]
    m = traj.u.shape[1] if traj.u is not None else 0
    header = (["t"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(m)]
              + ["H", "Phi", "dist_A", "branch"])
    branch = traj.branch or ("",) * len(traj.t)
    fmt = "{:.17g}".format
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(traj.t)):
            row = [fmt(traj.t[i])] + [fmt(v) for v in traj.x[i]]
            if m:
                row += [fmt(v) for v in traj.u[i]]
            row += [fmt(traj.H[i]), fmt(traj.Phi[i]), fmt(traj.dist[i]), branch[i]]
            w.writerow(row)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


# commands ---------------------------------------------------------------------


def run_scenario(cfg: ScenarioConfig) -> tuple[int, dict]:
    """Build, simulate, analyze and write outputs; return the exit code and the summary."""
    system = build_from_config(cfg)
    x0 = initial_state(cfg, system.plant.n)
    try:
        traj = simulate(system, x0, cfg.integrator)
    except InvalidInitialState as exc:
        raise ConfigError(f"initial.x: {exc}") from exc
    checks, info = analyze(cfg, system, traj)
    analyses = Report(subject=cfg.name, checks=checks)
    design_report = None
    if cfg.analyses.verify:
        from .verification import verify

        name = VERIFIABLE.get((cfg.plant, cfg.variant))
        if name is None:
            raise ConfigError(f"analyses.verify: no verification suite for {cfg.plant}/{cfg.variant}")
        design_report = verify(name, cfg.analyses.verify_grid, seed=cfg.seed, params=cfg.params)
    passed = analyses.passed and (design_report is None or design_report.passed)

    summary = {
        "scenario": cfg.name,
        "plant": cfg.plant,
        "controller": cfg.variant,
        "seed": cfg.seed,
        "x0": x0.tolist(),
        "passed": passed,
        "analyses": {c.name: bool(c.passed) for c in checks},
        **info,
    }
    if design_report is not None:
        summary["analyses"]["verify"] = design_report.passed

    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        if cfg.write_csv:
            write_trajectory_csv(cfg.out_dir / "trajectory.csv", traj)
        _write_json(cfg.out_dir / "summary.json", summary)
        _write_json(cfg.out_dir / "verification.json", {
            "analyses": analyses.to_dict(),
            "design": design_report.to_dict() if design_report is not None else None,
        })
    except OSError as exc:
        raise ConfigError(f"output.dir: cannot write to {cfg.out_dir}: {exc.strerror or exc}") from exc
    return (EXIT_OK if passed else EXIT_FAIL), summary


def _report_line(check: Check) -> str:
    tag = "PASS" if check.passed else "FAIL"
    extra = " (heuristic)" if check.heuristic else ""
    return f"  [{tag}] {check.name}{extra}: {check.violation_count} violation(s)"


def cmd_run(args) -> int:
    cfg = load_config(args.config, Path(args.out) if args.out else None)
    code, summary = run_scenario(cfg)
    status = "passed" if code == EXIT_OK else "FAILED"
    failed = [k for k, v in summary["analyses"].items() if not v]
    print(f"{cfg.name}: {status}; final dist_A = {summary['final_dist']:.3e}; outputs in {cfg.out_dir}")
    if failed:
        print(f"  failed analyses: {', '.join(failed)}", file=sys.stderr)
    return code


def cmd_verify(args) -> int:
    from .verification import verify

    seed = env_seed(SEED)
    try:
        report = verify(args.design, args.grid, seed=seed)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    for c in report.checks:
        print(_report_line(c))
    if args.out:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "verification.json").write_text(report.to_json())
        except OSError as exc:
            raise ConfigError(f"--out: cannot write to {out}: {exc.strerror or exc}") from exc
    if report.passed:
        print(f"{args.design}: all checks passed")
        return EXIT_OK
    print(f"{args.design}: {report.violation_count} violation(s)", file=sys.stderr)
    return EXIT_FAIL


def parse_sweep_param(spec: str) -> tuple[tuple, list]:
    """``section.key=a:b:steps`` (evenly spaced) or ``section.key=v1,v2,...`` -> (path, values)."""
    try:
        key, rng = spec.split("=", 1)
        if ":" in rng:
            a, b, steps = rng.split(":")
            steps = int(steps)
            if steps < 1:
                raise ValueError
            values = np.linspace(float(a), float(b), steps).tolist() if steps > 1 else [float(a)]
        else:
            values = [float(v) for v in rng.split(",")]
    except ValueError as exc:
        raise ConfigError(f"--param {spec!r}: expected section.key=a:b:steps or section.key=v1,v2") from exc
    path = tuple(key.split("."))
    if len(path) != 2:
        raise ConfigError(f"--param {spec!r}: key must be section.key")
    return path, values


def _sweep_one(job) -> dict:
    data, base_dir, out_dir, assignment = job
    try:
        cfg = parse_config(data, base_dir=Path(base_dir), out_override=Path(out_dir))
        code, summary = run_scenario(cfg)
        return {"params": assignment, "exit_code": code, "out": out_dir, "passed": summary["passed"]}
    except OrbitForgeError as exc:
        return {"params": assignment, "exit_code": EXIT_CONFIG, "out": out_dir, "error": str(exc)}


def cmd_sweep(args) -> int:
    path = Path(args.config)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    base = parse_config(data, base_dir=path.parent, out_override=Path(args.out) if args.out else None)
    axes = [parse_sweep_param(p) for p in args.param]
    jobs = []
    for i, combo in enumerate(itertools.product(*(vals for _, vals in axes))):
        d = copy.deepcopy(data)
        assignment = {}
        for ((section, key), _), v in zip(axes, combo):
            d.setdefault(section, {})[key] = v
            assignment[f"{section}.{key}"] = v
        jobs.append((d, str(path.parent), str(base.out_dir / f"run_{i:04d}"), assignment))
    if args.workers == 1:
        results = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    try:
        base.out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(base.out_dir / "sweep.json", {"scenario": base.name, "runs": results})
    except OSError as exc:
        raise ConfigError(f"output.dir: cannot write to {base.out_dir}: {exc.strerror or exc}") from exc
    codes = [r["exit_code"] for r in results]
    for r in results:
        print(f"  exit {r['exit_code']}: {r['params']}")
    return max(codes) if codes else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orbitforge", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate and analyze one scenario config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run the verification suite of a built-in design")
    p.add_argument("design")
    p.add_argument("--grid", type=int, default=1000, help="number of random grid states")
    p.add_argument("--out", help="write verification.json here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="run a scenario over a cartesian parameter grid")
    p.add_argument("config")
    p.add_argument("--param", action="append", required=True, metavar="SECTION.KEY=A:B:STEPS",
                   help="parameter axis; also accepts SECTION.KEY=V1,V2,...")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteState as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
