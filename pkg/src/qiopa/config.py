"""Scenario configuration files.

A config is a YAML mapping with four top-level keys::

    kind: fringe            # fringe | enhancement_map | of_tradeoff | fisher | calibrate | oracle_check
    physics: {...}          # kind-specific parameters, defaults filled in
    run: {trials: 200000, master_seed: 1, workers: 1, batch_size: 100000}
    output: {dir: results}

Grid-valued parameters accept a scalar, a list, or a range mapping
``{start, stop, points, scale: linear|log, endpoint: true|false}``.
Unknown keys are rejected so that typos fail loudly.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

__all__ = [
    "ConfigError",
    "RunSettings",
    "ScenarioConfig",
    "KINDS",
    "DEFAULTS",
    "expand_grid",
    "bundled_configs",
    "load_bundled",
]


class ConfigError(ValueError):
    pass


TWO_PI = 2.0 * math.pi

DEFAULTS: dict[str, dict[str, Any]] = {
    "fringe": {
        "g": 4.5,
        "p": 0.15,
        "eta": 3.0e-4,
        "seed_visibility": 0.45,
        "phi": {"start": 0.0, "stop": TWO_PI, "points": 16, "endpoint": False},
        "single_trials": None,
        "tail_mass": 1.0e-8,
    },
    "enhancement_map": {
        "panel": "enhancement",
        "g": {"start": 0.0, "stop": 5.0, "points": 51},
        "p": 0.5,
        "eta": {"start": 1.0e-4, "stop": 1.0e-1, "points": 61, "scale": "log"},
        "max_points": 250_000,
    },
    "of_tradeoff": {
        "g": 4.5,
        "p": 0.14,
        "eta": 0.005,
        "seed_visibility": 1.0,
        "k": {"start": 0, "stop": 90, "points": 10},
        "phi": {"start": 0.0, "stop": TWO_PI, "points": 8, "endpoint": False},
        "method": "exact",
        "fringe_k": None,
        "tail_mass": 1.0e-8,
    },
    "fisher": {
        "g": 2.0,
        "p": 0.2,
        "eta": 1.0e-4,
        "seed_visibility": 1.0,
        "phi": {"start": 0.1, "stop": math.pi / 2, "points": 5},
        "gaussian_fallback": False,
        "tail_mass": 1.0e-8,
    },
    "calibrate": {
        "data": None,
        "normalized": False,
        "weighting": "poisson",
        "synthetic": {"g_max": 4.5, "eta": 0.1, "n_points": 20, "noise": 0.01},
    },
    "oracle_check": {
        "g": [0.1, 0.3, 0.5, 0.8, 1.0],
        "bound": 1.0e-10,
        "joint_g_max": 0.5,
        "sampler": {"g": 1.0, "p": 0.5, "eta": 0.3, "phi": math.pi / 3, "trials": 1_000_000, "alpha": 1.0e-3},
        "corrupt": False,
    },
}

KINDS = tuple(DEFAULTS)

RUN_DEFAULTS = {"trials": 200_000, "master_seed": 1, "workers": 1, "batch_size": 100_000}


@dataclass(frozen=True)
class RunSettings:
    trials: int = RUN_DEFAULTS["trials"]
    master_seed: int = RUN_DEFAULTS["master_seed"]
    workers: int = RUN_DEFAULTS["workers"]
    batch_size: int = RUN_DEFAULTS["batch_size"]

    def __post_init__(self):
        for name in ("trials", "workers", "batch_size"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"run.{name} must be a positive integer, got {v!r}")
        s = self.master_seed
        if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < 2**64:
            raise ConfigError(f"run.master_seed must be an unsigned 64-bit integer, got {s!r}")


def _merge(base: dict, over: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown key {where}{k}")
        if isinstance(base[k], dict) and isinstance(v, dict) and "start" not in v and "start" not in base[k]:
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def expand_grid(spec, name: str = "grid", integer: bool = False) -> np.ndarray:
    """Turn a scalar, list or range mapping into a 1-D array."""
    if isinstance(spec, dict):
        allowed = {"start", "stop", "points", "scale", "endpoint"}
        if not set(spec) <= allowed or not {"start", "stop", "points"} <= set(spec):
            raise ConfigError(f"{name}: range needs start, stop, points (optional scale, endpoint)")
        n = spec["points"]
        if not isinstance(n, int) or n < 1:
            raise ConfigError(f"{name}.points must be a positive integer")
        scale = spec.get("scale", "linear")
        endpoint = bool(spec.get("endpoint", True))
        if scale == "linear":
            out = np.linspace(float(spec["start"]), float(spec["stop"]), n, endpoint=endpoint)
        elif scale == "log":
            if spec["start"] <= 0 or spec["stop"] <= 0:
                raise ConfigError(f"{name}: log range needs positive bounds")
            out = np.geomspace(float(spec["start"]), float(spec["stop"]), n, endpoint=endpoint)
        else:
            raise ConfigError(f"{name}.scale must be linear or log")
    elif isinstance(spec, (list, tuple)):
        out = np.asarray(spec, dtype=float)
    elif isinstance(spec, (int, float)) and not isinstance(spec, bool):
        out = np.array([float(spec)])
    else:
        raise ConfigError(f"{name}: expected number, list or range mapping, got {spec!r}")
    if out.ndim != 1 or out.size == 0 or not np.all(np.isfinite(out)):
        raise ConfigError(f"{name}: grid must be a non-empty list of finite numbers")
    if integer:
        if np.any(out != np.round(out)):
            raise ConfigError(f"{name}: integer grid expected")
        return np.round(out).astype(np.int64)
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    physics: dict = field(default_factory=dict)
    run: RunSettings = field(default_factory=RunSettings)
    output_dir: str = "results"

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not isinstance(self.physics, dict):
            raise ConfigError("physics must be a mapping")
        object.__setattr__(self, "physics", _merge(DEFAULTS[self.kind], self.physics, "physics."))

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "physics": copy.deepcopy(self.physics),
            "run": {
                "trials": self.run.trials,
                "master_seed": self.run.master_seed,
                "workers": self.run.workers,
                "batch_size": self.run.batch_size,
            },
            "output": {"dir": self.output_dir},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        extra = set(d) - {"kind", "physics", "run", "output"}
        if extra:
            raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
        if "kind" not in d:
            raise ConfigError("config lacks 'kind'")
        run = d.get("run") or {}
        bad = set(run) - set(RUN_DEFAULTS)
        if bad:
            raise ConfigError(f"unknown run keys: {sorted(bad)}")
        output = d.get("output") or {}
        if set(output) - {"dir"}:
            raise ConfigError(f"unknown output keys: {sorted(set(output) - {'dir'})}")
        return cls(
            kind=d["kind"],
            physics=d.get("physics") or {},
            run=RunSettings(**{**RUN_DEFAULTS, **run}),
            output_dir=str(output.get("dir", "results")),
        )

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ScenarioConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_yaml(text)

    # -- identity ----------------------------------------------------------

    def semantic_hash(self) -> str:
        """Hash of everything that can change results.

        The worker count and the output directory are left out: results do
        not depend on them.
        """
        d = self.to_dict()
        d["run"].pop("workers")
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, assignments: list[str] = (), seed: int | None = None,
                       workers: int | None = None, out: str | None = None) -> "ScenarioConfig":
        """Apply ``dotted.key=value`` overrides (values parsed as YAML)."""
        d = self.to_dict()
        for a in assignments:
            if "=" not in a:
                raise ConfigError(f"override {a!r} is not key=value")
            key, raw = a.split("=", 1)
            try:
                value = yaml.safe_load(raw)
            except yaml.YAMLError as exc:
                raise ConfigError(f"override {a!r}: {exc}") from exc
            parts = key.strip().split(".")
            node = d
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"unknown key {key}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown key {key}")
            node[parts[-1]] = value
        if seed is not None:
            d["run"]["master_seed"] = seed
        if workers is not None:
            d["run"]["workers"] = workers
        if out is not None:
            d["output"]["dir"] = out
        return ScenarioConfig.from_dict(d)


def bundled_configs() -> list[str]:
    root = resources.files("qiopa") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_bundled(name: str) -> ScenarioConfig:
    path = resources.files("qiopa") / "configs" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"no bundled config {name!r}; available: {', '.join(bundled_configs())}")
    return ScenarioConfig.from_yaml(path.read_text())
