"""Run configuration: YAML file plus command-line overrides."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .presets import preset
from .providers import ProviderConfig
from .task import ConfigError, TaskSpec
from .training import TrainConfig

_TASK_SPEC_KEYS = {f.name for f in fields(TaskSpec)}


@dataclass(frozen=True)
class RunConfig:
    task: TaskSpec
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    artifact_dir: Path = Path("artifacts")
    seed: int = 0
    jobs: int = 1
    data: dict = field(default_factory=dict)

    def data_path(self, name: str) -> Optional[Path]:
        p = self.data.get(name)
        return Path(p) if p else None

    def to_dict(self) -> dict:
        prov = asdict(self.provider)
        prov.pop("api_key_env", None)
        return {
            "task": self.task.to_dict(),
            "provider": prov,
            "train": {**asdict(self.train), "betas": list(self.train.betas)},
            "seed": self.seed,
            "data": {k: str(v) for k, v in self.data.items()},
        }


def _task_from(section: dict) -> TaskSpec:
    section = dict(section or {})
    name = section.pop("preset", None)
    unknown = set(section) - _TASK_SPEC_KEYS - {"labels", "verbalizer", "template"}
    if unknown:
        raise ConfigError(f"unknown task keys: {sorted(unknown)}")
    if name:
        from .task import LabelSpace, TemplateSpec, Verbalizer
        overrides = dict(section)
        if "labels" in overrides:
            overrides["label_space"] = LabelSpace(tuple(overrides.pop("labels")))
        if "verbalizer" in overrides:
            overrides["verbalizer"] = Verbalizer(tuple(overrides.pop("verbalizer")))
        if "template" in overrides:
            overrides["template"] = TemplateSpec(overrides.pop("template"))
        return preset(name, **overrides)
    section.setdefault("name", "custom")
    try:
        return TaskSpec.from_dict(section)
    except KeyError as e:
        raise ConfigError(f"task section missing {e}") from None


def _dataclass_from(cls, section: dict):
    section = dict(section or {})
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    if "betas" in section:
        section["betas"] = tuple(section["betas"])
    try:
        return cls(**section)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def load_config(path: Optional[str | Path], overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Read a YAML run config; relative paths resolve against the config's directory."""
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        base = path.parent
    ov = overrides or {}
    task_section = dict(raw.get("task") or {"preset": "sst2"})
    if ov.get("task"):
        task_section = {"preset": ov["task"]}
    for key in ("m", "n", "h", "round_max", "top_k"):
        if ov.get(key) is not None:
            task_section[key] = ov[key]
    if ov.get("h") is not None and ov.get("top_k") is None:
        # a smaller prompt set caps the ensemble size unless top-k is given explicitly
        current = task_section.get("top_k")
        if current is None and task_section.get("preset"):
            current = preset(task_section["preset"]).top_k
        if current is not None:
            task_section["top_k"] = min(int(current), int(ov["h"]))
    task = _task_from(task_section)

    prov_section = dict(raw.get("provider") or {})
    if ov.get("provider"):
        prov_section["kind"] = ov["provider"]
    if ov.get("cache") is not None:
        prov_section["cache"] = ov["cache"]
    seed = int(ov["seed"]) if ov.get("seed") is not None else int(raw.get("seed", 0))
    prov_section.setdefault("seed", seed)
    artifact_dir = Path(ov.get("artifact_dir") or raw.get("artifact_dir") or "artifacts")
    if not artifact_dir.is_absolute():
        artifact_dir = base / artifact_dir
    if prov_section.get("cache_dir"):
        prov_section["cache_dir"] = str(base / prov_section["cache_dir"])
    elif prov_section.get("cache"):
        prov_section["cache_dir"] = str(artifact_dir / "cache")
    provider = _dataclass_from(ProviderConfig, prov_section)

    train_section = dict(raw.get("train") or {})
    train_section.setdefault("seed", seed)
    if ov.get("epochs") is not None:
        train_section["epochs"] = ov["epochs"]
    train = _dataclass_from(TrainConfig, train_section)

    data = {k: str(base / v) for k, v in (raw.get("data") or {}).items() if v}
    for key in ("train", "test"):
        if ov.get(key):
            data[key] = str(ov[key])
    jobs = int(ov.get("jobs") or raw.get("jobs", 1))
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return RunConfig(task=task, provider=provider, train=train, artifact_dir=artifact_dir, seed=seed,
                     jobs=jobs, data=data)


def with_task(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, task=replace(cfg.task, **changes))
