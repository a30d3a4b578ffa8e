"""Experiment configuration: YAML file with a schema version, overridable from the CLI."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..agent import AgentConfig
from ..errors import ConfigError
from ..macsim import SimConfig

SCHEMA_VERSION = 1
ALGORITHMS = ("d3pg", "ddpg", "beb")


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    algorithm: str = "d3pg"
    interactions: int = 2000
    dt_us: float = 50_000.0
    reward_lambda: float = 450.0
    eval_seconds: float = 20.0
    eval_seed_offset: int = 1000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    checkpoint_every: int = 500
    out_dir: str = "runs/default"

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.interactions < 1:
            raise ConfigError("interactions must be >= 1")
        if not self.dt_us > 0 or not self.eval_seconds > 0 or not self.reward_lambda > 0:
            raise ConfigError("dt_us, eval_seconds and reward_lambda must be positive")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")

    @property
    def eval_periods(self) -> int:
        return max(1, int(round(self.eval_seconds * 1e6 / self.dt_us)))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        sim_kw = {k[4:]: v for k, v in kw.items() if k.startswith("sim.")}
        agent_kw = {k[6:]: v for k, v in kw.items() if k.startswith("agent.")}
        top = {k: v for k, v in kw.items() if "." not in k}
        sim = self.sim.replace(**sim_kw) if sim_kw else self.sim
        agent = replace(self.agent, **agent_kw) if agent_kw else self.agent
        return replace(self, sim=sim, agent=agent, **top)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["agent"]["hidden"] = list(self.agent.hidden)
        return {"schema_version": SCHEMA_VERSION, **d}

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))


def config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    version = d.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version}")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        sim = SimConfig(**d.pop("sim", {}))
        agent = AgentConfig(**d.pop("agent", {}))
        return ExperimentConfig(sim=sim, agent=agent, **d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping")
    return config_from_dict(data)
