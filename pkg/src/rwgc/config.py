"""JSON experiment configuration: task suite, policy, metric and bootstrap
settings, with named scale profiles."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .dynamics import ArmTask, ObstacleSpec, RewardSpec, action_dim, observation_dim
from .errors import ConfigError
from .metrics import PicConfig, PoicConfig
from .policy import PolicySpec
from .rwg import RwgConfig

DEFAULT_PROFILES = {
    "reduced": {"n_policies": 2000, "n_episodes": 100},
    "paper": {"n_policies": 10_000, "n_episodes": 500},
}

_TASK_KEYS = {"links", "reward", "weights", "max_steps", "dt", "obstacle", "masses",
              "goal_threshold", "torque_limit", "velocity_limit", "substeps", "integrator"}
_WEIGHT_KEYS = {"distance": "w_distance", "control": "w_control", "collision": "beta_collision",
                "proximity": "beta_proximity", "alpha": "alpha"}


def task_from_dict(d: dict) -> ArmTask:
    extra = set(d) - _TASK_KEYS
    if extra:
        raise ConfigError(f"unknown task fields: {sorted(extra)}")
    if "links" not in d:
        raise ConfigError("task needs 'links'")
    kind = d.get("reward", "dense")
    weights = d.get("weights", {}) or {}
    bad = set(weights) - set(_WEIGHT_KEYS)
    if bad:
        raise ConfigError(f"unknown reward weights: {sorted(bad)}")
    reward = RewardSpec(kind=kind, **{_WEIGHT_KEYS[k]: float(v) for k, v in weights.items()})
    obstacle = None
    if d.get("obstacle") is not None:
        o = d["obstacle"]
        obstacle = ObstacleSpec(center=tuple(o.get("center", (0.5, 0.5))),
                                radius=float(o.get("radius", 0.02)),
                                thickness=float(o.get("thickness", 0.05)),
                                points=int(o.get("points", 50)))
    elif kind == "obstacle":
        obstacle = ObstacleSpec()
    kwargs = {}
    for key in ("max_steps", "substeps"):
        if key in d:
            kwargs[key] = int(d[key])
    for key in ("dt", "goal_threshold", "torque_limit", "velocity_limit"):
        if key in d:
            kwargs[key] = float(d[key])
    if "integrator" in d:
        kwargs["integrator"] = str(d["integrator"])
    masses = tuple(float(m) for m in d["masses"]) if d.get("masses") is not None else None
    return ArmTask(link_lengths=tuple(float(v) for v in d["links"]), reward=reward,
                   link_masses=masses, obstacle=obstacle, **kwargs)


def task_to_dict(task: ArmTask) -> dict:
    r = task.reward
    weights = {}
    if r.kind != "sparse":
        weights = {"distance": r.w_distance, "control": r.w_control}
        if r.kind == "obstacle":
            weights.update(collision=r.beta_collision, proximity=r.beta_proximity, alpha=r.alpha)
    d = {
        "links": list(task.link_lengths),
        "masses": list(task.link_masses),
        "reward": r.kind,
        "weights": weights,
        "max_steps": int(task.max_steps),
        "dt": task.dt,
        "goal_threshold": task.goal_threshold,
        "torque_limit": task.torque_limit,
        "velocity_limit": task.velocity_limit,
        "integrator": task.integrator,
        "substeps": int(task.substeps),
    }
    if task.obstacle is not None:
        o = task.obstacle
        d["obstacle"] = {"center": list(o.center), "radius": o.radius,
                         "thickness": o.thickness, "points": int(o.points)}
    return d


@dataclass(frozen=True)
class TaskEntry:
    name: str
    task: ArmTask
    policy: dict = field(default_factory=dict)
    n_policies: Optional[int] = None
    n_episodes: Optional[int] = None
    optimal_return: Optional[float] = None

    def policy_spec(self, base: dict) -> PolicySpec:
        merged = {**base, **self.policy}
        return PolicySpec.from_dict(merged, observation_dim(self.task), action_dim(self.task))

    def to_dict(self) -> dict:
        d = {"name": self.name, "task": task_to_dict(self.task)}
        if self.policy:
            d["policy"] = copy.deepcopy(self.policy)
        rwg = {}
        if self.n_policies is not None:
            rwg["n_policies"] = int(self.n_policies)
        if self.n_episodes is not None:
            rwg["n_episodes"] = int(self.n_episodes)
        if rwg:
            d["rwg"] = rwg
        if self.optimal_return is not None:
            d["optimal_return"] = float(self.optimal_return)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TaskEntry":
        extra = set(d) - {"name", "task", "policy", "rwg", "optimal_return"}
        if extra:
            raise ConfigError(f"unknown task entry fields: {sorted(extra)}")
        if not d.get("name"):
            raise ConfigError("every task needs a name")
        rwg = d.get("rwg", {}) or {}
        return cls(name=str(d["name"]), task=task_from_dict(d.get("task", {})),
                   policy=dict(d.get("policy", {}) or {}),
                   n_policies=int(rwg["n_policies"]) if "n_policies" in rwg else None,
                   n_episodes=int(rwg["n_episodes"]) if "n_episodes" in rwg else None,
                   optimal_return=float(d["optimal_return"]) if d.get("optimal_return") is not None else None)


@dataclass(frozen=True)
class ExperimentConfig:
    tasks: tuple = ()
    policy: dict = field(default_factory=dict)
    pic: PicConfig = field(default_factory=PicConfig)
    poic: PoicConfig = field(default_factory=PoicConfig)
    bootstrap_k: int = 1000
    bootstrap_seed: int = 0
    master_seed: int = 0
    profiles: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_PROFILES))
    profile: str = "reduced"
    histogram_bins: int = 50
    output_dir: str = "results"
    name: str = "experiment"

    def __post_init__(self):
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ConfigError("task names must be unique")
        if self.profile not in self.profiles:
            raise ConfigError(f"unknown profile {self.profile!r}")
        for pname, p in self.profiles.items():
            if set(p) - {"n_policies", "n_episodes", "bins"}:
                raise ConfigError(f"profile {pname!r} has unknown fields")
        if self.bootstrap_k < 100:
            raise ConfigError("bootstrap k must be >= 100")
        if self.histogram_bins < 1:
            raise ConfigError("histogram_bins must be >= 1")
        # fail early on bad policy settings; store the normalised form so round trips compare equal
        object.__setattr__(self, "policy", PolicySpec.from_dict(self.policy, 1, 1).to_dict())
        for t in self.tasks:
            t.policy_spec(self.policy)

    def scale(self, entry: TaskEntry) -> tuple[int, int]:
        p = self.profiles[self.profile]
        n = entry.n_policies if entry.n_policies is not None else p["n_policies"]
        m = entry.n_episodes if entry.n_episodes is not None else p["n_episodes"]
        return int(n), int(m)

    def pic_config(self) -> PicConfig:
        bins = self.profiles[self.profile].get("bins")
        return PicConfig(bins=int(bins)) if bins is not None else self.pic

    def poic_config(self, entry: TaskEntry) -> PoicConfig:
        if entry.optimal_return is None:
            return self.poic
        return PoicConfig(self.poic.temperature, entry.optimal_return)

    def rwg_config(self, entry: TaskEntry) -> RwgConfig:
        n, m = self.scale(entry)
        return RwgConfig(n, m, self.master_seed, entry.policy_spec(self.policy), entry.task)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        for key, value in kw.items():
            if value is None:
                continue
            if key in ("n_policies", "n_episodes"):
                for p in d["profiles"].values():
                    p[key] = int(value)
                for t in d["tasks"]:
                    t.get("rwg", {}).pop(key, None)
            elif key == "bootstrap_k":
                d["stats"]["k"] = int(value)
            else:
                d[key] = value
        return ExperimentConfig.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "master_seed": int(self.master_seed),
            "profile": self.profile,
            "profiles": copy.deepcopy(self.profiles),
            "policy": copy.deepcopy(self.policy),
            "pic": {"bins": int(self.pic.bins)},
            "poic": {"temperature": self.poic.temperature, "optimal_return": self.poic.optimal_return},
            "stats": {"k": int(self.bootstrap_k), "seed": int(self.bootstrap_seed)},
            "histogram_bins": int(self.histogram_bins),
            "output_dir": self.output_dir,
            "tasks": [t.to_dict() for t in self.tasks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        allowed = {"name", "master_seed", "profile", "profiles", "policy", "pic", "poic", "stats",
                   "histogram_bins", "output_dir", "tasks"}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        stats = d.get("stats", {}) or {}
        pic_d = d.get("pic", {}) or {}
        poic_d = d.get("poic", {}) or {}
        return cls(
            tasks=tuple(TaskEntry.from_dict(t) for t in d.get("tasks", [])),
            policy=dict(d.get("policy", {}) or {}),
            pic=PicConfig(bins=int(pic_d.get("bins", 100_000))),
            poic=PoicConfig(temperature=float(poic_d.get("temperature", 1.0)),
                            optimal_return=float(poic_d.get("optimal_return", 0.0))),
            bootstrap_k=int(stats.get("k", 1000)),
            bootstrap_seed=int(stats.get("seed", 0)),
            master_seed=int(d.get("master_seed", 0)),
            profiles=copy.deepcopy(d.get("profiles", DEFAULT_PROFILES)),
            profile=d.get("profile", "reduced"),
            histogram_bins=int(d.get("histogram_bins", 50)),
            output_dir=str(d.get("output_dir", "results")),
            name=str(d.get("name", "experiment")),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def load_config(path) -> ExperimentConfig:
    """Read a config file; a bare name falls back to the bundled configs."""
    p = Path(path)
    if p.exists():
        text = p.read_text()
    else:
        bundled = resources.files("rwgc.data").joinpath(p.name)
        if not bundled.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        text = bundled.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)
