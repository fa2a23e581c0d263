"""Scenario configuration files (TOML, sections plant/controller/initial/integrator/analyses/output)."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .numerics import IntegratorSettings
from .ph_core import SEED
from .plants import DEFAULT_VARIANT, PLANTS

SEED_ENV = "ORBITFORGE_SEED"
SECTIONS = ("plant", "controller", "initial", "integrator", "analyses", "output")
VARIANTS = ("msea", "epd", "foc", "custom")


@dataclass(frozen=True)
class Analyses:
    """Requested analyses and the thresholds they are judged against."""

    verify: bool = False
    verify_grid: int = 1000
    rates: tuple = ()
    rate_targets: dict = field(default_factory=dict)
    rate_rel_tol: float = 0.1
    period: bool = False
    period_channel: Optional[str] = None
    period_t_start: float = 0.0
    period_target: Optional[float] = None
    period_rel_tol: float = 0.005
    turning_points: bool = False
    amplitude_target: Optional[float] = None
    amplitude_tol: float = 0.02
    final_dist_max: Optional[float] = None
    phi_max: Optional[float] = None
    phi_by: float = 0.0
    energy_nonincreasing: bool = False
    energy_slack: float = 1e-9
    final_speed_max: Optional[float] = None
    branch_sequence: tuple = ()
    pumping_damping_sign: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    plant: str
    params: dict
    variant: str
    x0: Optional[tuple]
    random_initial: Optional[tuple]
    integrator: IntegratorSettings
    analyses: Analyses
    out_dir: Path
    seed: int = SEED
    custom_file: Optional[Path] = None
    write_csv: bool = True


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing field {where}.{key}")
    return table[key]


def _floats(value, where: str) -> tuple:
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where} must be a list of numbers") from exc
    return out


def env_seed(default: int) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return default
    try:
        return int(raw, 0)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from exc


def parse_config(data: dict, base_dir: Path = Path("."), out_override: Optional[Path] = None) -> ScenarioConfig:
    unknown = set(data) - set(SECTIONS) - {"name", "seed"}
    if unknown:
        raise ConfigError(f"unknown top-level field(s): {', '.join(sorted(unknown))}")
    plant_t = dict(data.get("plant", {}))
    plant = _require(plant_t, "name", "plant")
    if plant not in PLANTS:
        raise ConfigError(f"plant.name: unknown plant {plant!r}; known plants: {', '.join(PLANTS)}")
    params = {k: v for k, v in plant_t.items() if k != "name"}

    ctrl_t = dict(data.get("controller", {}))
    variant = ctrl_t.get("variant", DEFAULT_VARIANT[plant])
    if variant not in VARIANTS:
        raise ConfigError(f"controller.variant: unknown variant {variant!r}")
    custom_file = None
    if variant == "custom":
        custom_file = base_dir / str(_require(ctrl_t, "file", "controller"))

    init_t = dict(data.get("initial", {}))
    x0 = random_initial = None
    if "x" in init_t:
        x0 = _floats(init_t["x"], "initial.x")
    elif "random_low" in init_t and "random_high" in init_t:
        random_initial = (_floats(init_t["random_low"], "initial.random_low"),
                          _floats(init_t["random_high"], "initial.random_high"))
        if len(random_initial[0]) != len(random_initial[1]):
            raise ConfigError("initial.random_low and initial.random_high differ in length")
    else:
        raise ConfigError("missing field initial.x (or initial.random_low/random_high)")

    integ_t = dict(data.get("integrator", {}))
    known = {f.name for f in fields(IntegratorSettings)}
    bad = set(integ_t) - known
    if bad:
        raise ConfigError(f"unknown integrator field(s): {', '.join(sorted(bad))}")
    try:
        integrator = IntegratorSettings(**integ_t)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integrator: {exc}") from exc

    an_t = dict(data.get("analyses", {}))
    known = {f.name for f in fields(Analyses)}
    bad = set(an_t) - known
    if bad:
        raise ConfigError(f"unknown analyses field(s): {', '.join(sorted(bad))}")
    for key in ("rates", "branch_sequence"):
        if key in an_t:
            an_t[key] = tuple(an_t[key])
    analyses = Analyses(**an_t)

    out_t = dict(data.get("output", {}))
    out_dir = out_override or Path(str(out_t.get("dir", "out")))
    seed = env_seed(int(data.get("seed", SEED)))
    return ScenarioConfig(
        name=str(data.get("name", plant)), plant=plant, params=params, variant=variant, x0=x0,
        random_initial=random_initial, integrator=integrator, analyses=analyses,
        out_dir=Path(out_dir), seed=seed, custom_file=custom_file,
        write_csv=bool(out_t.get("csv", True)),
    )


def load_config(path, out_override: Optional[Path] = None) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    return parse_config(data, base_dir=path.parent, out_override=out_override)
