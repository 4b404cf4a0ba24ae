"""Result archives: a manifest plus CSV tables in one directory."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .tables import format_table, read_table

__all__ = ["ResultArchive", "tool_version"]


def tool_version() -> str:
    from . import __version__

    return __version__


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


@dataclass
class ResultArchive:
    """Manifest (config hash, seed, workers, timestamps, version) plus tables.

    Every table is written with the config hash on its first line.  The
    timestamps live only in ``manifest.json``, so reruns reproduce the CSV
    files byte for byte.
    """

    config_hash: str
    config: dict
    tables: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    documents: dict[str, dict] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    started_at: str = field(default_factory=_now)
    finished_at: str | None = None

    def add_table(self, name: str, columns: dict[str, np.ndarray]):
        if name in self.tables:
            raise ValueError(f"duplicate table {name!r}")
        self.tables[name] = columns

    def manifest(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "master_seed": self.config["run"]["master_seed"],
            "workers": self.config["run"]["workers"],
            "tool_version": tool_version(),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "tables": sorted(f"{n}.csv" for n in self.tables),
            "documents": sorted(f"{n}.json" for n in self.documents),
            "summary": _jsonable(self.summary),
            "config": self.config,
        }

    def write(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        if self.finished_at is None:
            self.finished_at = _now()
        for name, cols in self.tables.items():
            (directory / f"{name}.csv").write_text(format_table(cols, self.config_hash))
        for name, doc in self.documents.items():
            (directory / f"{name}.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
        (directory / "manifest.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "ResultArchive":
        directory = Path(directory)
        man = json.loads((directory / "manifest.json").read_text())
        arch = cls(man["config_hash"], man["config"], summary=man.get("summary", {}),
                   started_at=man["started_at"], finished_at=man["finished_at"])
        for fname in man["tables"]:
            tag, cols = read_table(directory / fname)
            if tag != arch.config_hash:
                raise ValueError(f"{fname} carries manifest hash {tag}, expected {arch.config_hash}")
            arch.tables[fname[:-4]] = cols
        for fname in man.get("documents", []):
            arch.documents[fname[:-5]] = json.loads((directory / fname).read_text())
        return arch
