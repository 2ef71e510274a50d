"""Run configuration: strict JSON parsing with unknown-key rejection."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError
from .extractors import ExtractorConfig
from .families import TaskFamily
from .surrogate import SurrogateConfig

STORE_ENV = "TASKSPACE_STORE"


def _strict(cls, obj: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**obj)
    except TypeError as err:
        raise ConfigError(f"bad {where}: {err}") from err


@dataclass
class PoolSpec:
    cap_per_source: int = 30
    seed: int = 0
    pool_id: str = "pool"
    source_families: list = field(default_factory=list)  # family ids from `families`


@dataclass
class RunConfig:
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    surrogate_seed: int = 0
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    method: str = "taskemb"
    pool: PoolSpec = field(default_factory=PoolSpec)
    families: list = field(default_factory=list)
    store: str = "store"
    seed: int = 0
    jobs: int = 1

    def family_by_id(self, family_id: str) -> TaskFamily:
        for fam in self.families:
            if fam.family_id == family_id:
                return fam
        raise ConfigError(f"family {family_id!r} not declared in config")

    def to_json(self) -> dict:
        return {"surrogate": self.surrogate.to_json(),
                "surrogate_seed": self.surrogate_seed,
                "extractor": self.extractor.to_json(),
                "method": self.method,
                "pool": asdict(self.pool),
                "families": [asdict(f) for f in self.families],
                "store": self.store, "seed": self.seed, "jobs": self.jobs}


def load_run_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Parse a config file; CLI overrides win over file values."""
    obj = {}
    if path:
        try:
            with open(path) as f:
                obj = json.load(f)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    obj.update(overrides)

    known = {f.name for f in fields(RunConfig)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    surrogate = SurrogateConfig.from_json(obj.get("surrogate", {})) \
        if obj.get("surrogate") else SurrogateConfig()
    extractor = _strict(ExtractorConfig, obj.get("extractor", {}), "extractor")
    pool = _strict(PoolSpec, obj.get("pool", {}), "pool")
    families = [_strict(TaskFamily, f, "family") for f in obj.get("families", [])]
    method = obj.get("method", "taskemb")
    if method not in ("taskemb", "tupate"):
        raise ConfigError(f"method must be taskemb or tupate, got {method!r}")
    store = obj.get("store") or os.environ.get(STORE_ENV) or "store"
    return RunConfig(surrogate=surrogate,
                     surrogate_seed=int(obj.get("surrogate_seed", 0)),
                     extractor=extractor, method=method, pool=pool,
                     families=families, store=store,
                     seed=int(obj.get("seed", 0)), jobs=int(obj.get("jobs", 1)))
