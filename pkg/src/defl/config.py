"""Experiment configuration: JSON loading, validation and defaults."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .delay_model import LearningParams, theta_from_local_rounds
from .errors import ConfigError, DeflError
from .planner import OracleGrid, PlanInputs
from .system_model import (
    DeviceProfile,
    Fleet,
    GpuClockModel,
    WirelessSystem,
    cycles_per_sample,
    noise_power_from_density,
)

SCHEMA_VERSION = 1

PLANNER_DEFAULTS = {"grid_b": 200, "grid_alpha": 200, "b_max": 1024.0, "alpha_min": 1e-4, "alpha_max": 20.0}
SIM_DEFAULTS = {
    "task": "quadratic",
    "dimension": 10,
    "noise_sigma_sq": 1.0,
    "smoothness": 1.0,
    "strong_convexity": 0.1,
    "heterogeneity": 1.0,
    "eta": None,
    "identical_data": True,
    "task_seed": 0,
    "n_seeds": 30,
    "local_rounds": None,
    "rounds": None,
    "max_rounds": 2000,
    "target_gap": None,
}
LEARNING_DEFAULTS = {"nu": 1.0, "c": 1.0}


def _schema() -> dict:
    return json.loads(resources.files("defl.data").joinpath("config.schema.json").read_text())


def paper_defaults_path() -> Path:
    return Path(str(resources.files("defl.data").joinpath("paper_defaults.json")))


@dataclass(frozen=True)
class Baseline:
    name: str
    b: int
    V: int
    theta: float | None = None

    def __post_init__(self) -> None:
        if self.b < 1 or self.V < 1:
            raise ValueError(f"baseline {self.name!r}: b and V must be at least 1")
        if self.theta is not None and not 0 < self.theta < 1:
            raise ValueError(f"baseline {self.name!r}: theta must lie in (0, 1)")

    def resolved_theta(self, nu: float) -> tuple[float, bool]:
        """``(theta, derived)``; theta is backed out from ``V`` when not given."""
        if self.theta is not None:
            return self.theta, False
        return theta_from_local_rounds(self.V, nu), True


@dataclass(frozen=True)
class SimSpec:
    task: str = "quadratic"
    dimension: int = 10
    noise_sigma_sq: float = 1.0
    smoothness: float = 1.0
    strong_convexity: float = 0.1
    heterogeneity: float = 1.0
    eta: float | None = None
    identical_data: bool = True
    task_seed: int = 0
    n_seeds: int = 30
    local_rounds: int | None = None
    rounds: int | None = None
    max_rounds: int = 2000
    target_gap: float | None = None

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("sim dimension must be at least 1")
        if self.noise_sigma_sq < 0:
            raise ValueError("noise variance must be non-negative")
        if not 0 < self.strong_convexity <= self.smoothness:
            raise ValueError("need 0 < strong_convexity <= smoothness")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.n_seeds < 1 or self.max_rounds < 1:
            raise ValueError("n_seeds and max_rounds must be at least 1")
        for name in ("local_rounds", "rounds"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.target_gap is not None and not self.target_gap > 0:
            raise ValueError("target_gap must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    fleet: Fleet
    epsilon: float
    nu: float
    c: float
    grid: OracleGrid
    sim: SimSpec
    baselines: tuple[Baseline, ...]
    seed: int = 0
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def M(self) -> int:
        return len(self.fleet)

    def learning(self, alpha: float = 0.0) -> LearningParams:
        return LearningParams(epsilon=self.epsilon, M=self.M, alpha=alpha, nu=self.nu, c=self.c)

    def plan_inputs(self) -> PlanInputs:
        return PlanInputs.from_fleet(self.fleet, self.epsilon, nu=self.nu, c=self.c)

    @property
    def target_gap(self) -> float:
        return self.sim.target_gap if self.sim.target_gap is not None else self.epsilon

    def resolved(self) -> dict:
        """Fully resolved configuration (defaults filled in) for echoing in reports."""
        out = dict(self.raw)
        out["seed"] = self.seed
        out["learning"] = {"epsilon": self.epsilon, "nu": self.nu, "c": self.c}
        out["planner"] = {
            "grid_b": self.grid.n_b,
            "grid_alpha": self.grid.n_alpha,
            "b_max": self.grid.b_max,
            "alpha_min": self.grid.alpha_min,
            "alpha_max": self.grid.alpha_max,
        }
        out["sim"] = asdict(self.sim)
        out["baselines"] = [asdict(b) for b in self.baselines]
        return out


def _device(i: int, rec: dict) -> DeviceProfile:
    did = rec.get("id", i)
    if "cycles_per_sample" in rec:
        if "cycles_per_bit" in rec or "bits_per_sample" in rec:
            raise ValueError(f"device {did!r}: give cycles_per_sample or cycles_per_bit with bits_per_sample, not both")
        g = rec["cycles_per_sample"]
    elif "cycles_per_bit" in rec and "bits_per_sample" in rec:
        g = cycles_per_sample(rec["cycles_per_bit"], rec["bits_per_sample"])
    else:
        raise ValueError(f"device {did!r}: missing cycles_per_sample (or cycles_per_bit and bits_per_sample)")
    clock = GpuClockModel(**rec["clock"]) if "clock" in rec else None
    return DeviceProfile(
        id=did,
        cycles_per_sample=g,
        samples=rec["samples"],
        tx_power=rec["tx_power_w"],
        channel_gain=rec["channel_gain"],
        frequency=rec.get("frequency_hz"),
        clock=clock,
    )


def _wireless(rec: dict) -> WirelessSystem:
    bandwidth = rec["bandwidth_hz"]
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    noise = rec["noise"]
    if "watts" in noise:
        power = noise["watts"]
    else:
        power = noise_power_from_density(noise["dbm_per_hz"], bandwidth)
    return WirelessSystem(bandwidth=bandwidth, noise_power=power, update_bits=rec["update_bits"])


def config_from_dict(data: dict[str, Any], source: str = "<dict>") -> ExperimentConfig:
    """Validate a parsed configuration and resolve defaults.

    Raises:
        ConfigError: naming the offending field or invariant.
    """
    try:
        jsonschema.validate(data, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{source}: field {where}: {exc.message}") from None
    try:
        devices = [_device(i, rec) for i, rec in enumerate(data["fleet"])]
        fleet = Fleet(tuple(devices), _wireless(data["wireless"]))
        learning = {**LEARNING_DEFAULTS, **data["learning"]}
        planner = {**PLANNER_DEFAULTS, **data.get("planner", {})}
        grid = OracleGrid(
            n_b=planner["grid_b"],
            n_alpha=planner["grid_alpha"],
            b_max=float(planner["b_max"]),
            alpha_min=planner["alpha_min"],
            alpha_max=planner["alpha_max"],
        )
        sim = SimSpec(**{**SIM_DEFAULTS, **data.get("sim", {})})
        baselines = tuple(Baseline(**b) for b in data.get("baselines", []))
        if len({b.name for b in baselines}) != len(baselines):
            raise ValueError("baseline names must be unique")
        cfg = ExperimentConfig(
            fleet=fleet,
            epsilon=learning["epsilon"],
            nu=learning["nu"],
            c=learning["c"],
            grid=grid,
            sim=sim,
            baselines=baselines,
            seed=data.get("seed", 0),
            raw=data,
        )
        cfg.learning()  # validates epsilon, nu, c
        for d in fleet.devices:
            if not math.isfinite(d.effective_frequency):
                raise ValueError(f"device {d.id!r}: effective frequency is not finite")
    except ConfigError:
        raise
    except (ValueError, TypeError, DeflError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data, source=str(path))


def load_paper_defaults() -> ExperimentConfig:
    return load_config(paper_defaults_path())
