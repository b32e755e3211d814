"""Benchmark configuration: nested dataclasses loaded from strict JSON.

Defaults reproduce the published unicycle benchmark. Unknown keys are
rejected, both by the JSON Schema shipped as ``config.schema.json`` and by the
dataclass loader.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .core import ChanceParams, DiagGaussian
from .dynamics import StochasticModel, UnicycleParams, unicycle_model
from .engine import CidaConfig, StageCost, orbit_tracking_cost
from .safety import HeadingTrackingPolicy, OrbitField, SafeSet

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSection:
    tau: float = 0.2
    speed: float = 5.0
    process_variances: tuple[float, ...] = (0.2, 0.2, 0.1)
    measurement_variances: tuple[float, ...] = (0.1, 0.1)
    omega_max: float = math.pi


@dataclass(frozen=True)
class InitialSection:
    mean: tuple[float, ...] = (10.0, 0.0, -math.pi / 2)
    variances: tuple[float, ...] = (0.2, 0.2, 0.2)


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class SafeSetSection:
    obstacles: tuple[Obstacle, ...] = (
        Obstacle((9.0, -5.0), 3.0),
        Obstacle((-10.0, -9.0), 4.0),
        Obstacle((-7.0, 10.0), 3.0),
    )
    class_kappa_gain: float = 0.05


@dataclass(frozen=True)
class OrbitSection:
    radius: float = 10.0
    gain: float = 0.3


@dataclass(frozen=True)
class PolicySection:
    gain: float = 5.0
    relax_infeasible: bool = True


@dataclass(frozen=True)
class CidaSection:
    epsilon: float = 0.15
    alpha: float = 0.05
    delta: float = 0.05
    M: int = 150
    R: int = 150
    N: int = 10
    gamma: float = 1.0
    constraint_mode: str = "soft"
    search_noise_scale: float = 1.0


@dataclass(frozen=True)
class FieldSection:
    xmin: float = -15.0
    xmax: float = 15.0
    ymin: float = -15.0
    ymax: float = 15.0
    grid_n: int = 31


@dataclass(frozen=True)
class SimulationSection:
    steps: int = 750
    controller: str = "cida"
    seed: int = 0
    particles: int = 1000
    max_degenerate_steps: int = 10


@dataclass(frozen=True)
class SimulationConfig:
    simulation: SimulationSection = SimulationSection()
    model: ModelSection = ModelSection()
    initial: InitialSection = InitialSection()
    safe_set: SafeSetSection = SafeSetSection()
    orbit: OrbitSection = OrbitSection()
    policy: PolicySection = PolicySection()
    cida: CidaSection = CidaSection()
    field: FieldSection = FieldSection()
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        sim = self.simulation
        if sim.steps < 1:
            raise ConfigError("simulation.steps must be >= 1")
        if sim.controller not in ("ce", "cida"):
            raise ConfigError("simulation.controller must be 'ce' or 'cida'")
        if sim.particles < 1:
            raise ConfigError("simulation.particles must be >= 1")
        if not 0 <= sim.seed < 2**64:
            raise ConfigError("simulation.seed must be a 64-bit unsigned integer")
        if self.field.grid_n < 2:
            raise ConfigError("field.grid_n must be >= 2")
        try:
            # build every component once so invalid values surface at load time
            self.build_model()
            self.build_safe_set()
            self.build_orbit()
            self.build_cida()
            self.initial_distribution()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **sections: Any) -> SimulationConfig:
        """Copy with selected fields of sections overridden, e.g. ``replace(simulation={"seed": 3})``."""
        changes = {
            name: dataclasses.replace(getattr(self, name), **values) for name, values in sections.items()
        }
        return dataclasses.replace(self, **changes)

    def build_model(self) -> StochasticModel:
        m = self.model
        return unicycle_model(
            UnicycleParams(m.tau, m.speed), m.process_variances, m.measurement_variances, m.omega_max
        )

    def build_safe_set(self) -> SafeSet:
        s = self.safe_set
        return SafeSet.from_obstacles([(o.center, o.radius) for o in s.obstacles], s.class_kappa_gain)

    def build_orbit(self) -> OrbitField:
        return OrbitField(self.orbit.radius, self.orbit.gain, self.model.speed)

    def build_policy(self) -> HeadingTrackingPolicy:
        return HeadingTrackingPolicy(
            self.build_safe_set(),
            self.build_orbit(),
            self.policy.gain,
            self.model.omega_max,
            self.policy.relax_infeasible,
        )

    def build_cida(self) -> CidaConfig:
        c = self.cida
        chance = ChanceParams(c.epsilon, c.alpha, c.delta, c.M, c.R, c.N, c.gamma)
        return CidaConfig(chance, c.constraint_mode, c.search_noise_scale)

    def build_costs(self) -> StageCost:
        return orbit_tracking_cost(self.orbit.radius)

    def initial_distribution(self) -> DiagGaussian:
        return DiagGaussian(self.initial.mean, self.initial.variances)

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def schema() -> dict[str, Any]:
    text = resources.files("cida").joinpath("config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _build(cls: type, data: Any, path: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}.{name}".lstrip("."))
        elif cls is SafeSetSection and name == "obstacles":
            kwargs[name] = tuple(
                Obstacle(tuple(o["center"]), o["radius"]) for o in value  # schema checked keys
            )
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict[str, Any]) -> SimulationConfig:
    try:
        jsonschema.validate(data, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "config"
        raise ConfigError(f"{where}: {exc.message}") from exc
    return _build(SimulationConfig, data, "")


def load_config(path: str | Path | None = None) -> SimulationConfig:
    """Load a JSON config file; ``None`` gives the benchmark defaults."""
    if path is None:
        return SimulationConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def dump_config(cfg: SimulationConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2)
