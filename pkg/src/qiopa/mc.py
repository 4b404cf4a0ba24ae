"""Deterministic Monte Carlo execution.

Trials are cut into fixed-size blocks.  Block ``b`` always draws from the
counter-based stream ``Philox(key=(master_seed, b))``, whichever worker runs
it, and block results are merged in block order.  The output therefore
depends only on ``(master_seed, trials_total, batch_size, scenario)`` and not
on the number of workers or on scheduling.
"""
from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "Estimate",
    "EstimateSet",
    "RunPlan",
    "WorkerError",
    "ScenarioError",
    "SCENARIOS",
    "register_scenario",
    "stream",
    "derive_seed",
    "binomial_sample",
    "run_plan_execute",
    "execute_with_manifest",
]

_U64 = (1 << 64) - 1

Scenario = Callable[[np.random.Generator, int], Mapping[str, np.ndarray]]


def stream(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for block ``index`` of a run."""
    return np.random.Generator(np.random.Philox(key=[int(master_seed) & _U64, int(index) & _U64]))


def derive_seed(master_seed: int, *path: int) -> int:
    """Child seed for a sub-run (e.g. one phase point of a scan)."""
    ss = np.random.SeedSequence([int(master_seed) & _U64, *(int(p) for p in path)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def binomial_sample(n, eta: float, rng: np.random.Generator):
    """Survivors of ``n`` photons each kept with probability ``eta``.

    numpy's sampler is exact for every ``n`` (inversion for small means,
    BTPE rejection otherwise), so no approximate large-n path is needed.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("photon numbers must be nonnegative")
    return rng.binomial(n, eta)


@dataclass(frozen=True)
class Estimate:
    value: float
    std_err: float
    n_samples: int


@dataclass(frozen=True)
class _Acc:
    n: int
    total: Fraction
    m2: float

    @property
    def mean(self) -> float:
        return float(self.total / self.n) if self.n else 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> "_Acc":
        values = np.asarray(values, dtype=float).ravel()
        n = values.size
        if n == 0:
            return cls(0, Fraction(0), 0.0)
        s = math.fsum(values)
        mu = s / n
        m2 = float(np.dot(values - mu, values - mu))
        return cls(n, Fraction(s), m2)

    def merge(self, other: "_Acc") -> "_Acc":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return _Acc(n, self.total + other.total, m2)


@dataclass(frozen=True)
class EstimateSet:
    """Named mean-type estimates with streaming (Chan/Welford) variances.

    Sums are held as exact rationals, so merged values do not depend on the
    merge order; ``m2`` merges with the parallel Welford update.
    """

    accumulators: Mapping[str, _Acc] = field(default_factory=dict)

    @classmethod
    def from_samples(cls, samples: Mapping[str, np.ndarray]) -> "EstimateSet":
        return cls({k: _Acc.of(v) for k, v in samples.items()})

    def merge(self, other: "EstimateSet") -> "EstimateSet":
        out = dict(self.accumulators)
        for k, acc in other.accumulators.items():
            out[k] = out[k].merge(acc) if k in out else acc
        return EstimateSet(out)

    def __getitem__(self, name: str) -> Estimate:
        acc = self.accumulators[name]
        if acc.n > 1:
            sd = math.sqrt(max(acc.m2, 0.0) / (acc.n - 1))
            se = sd / math.sqrt(acc.n)
        else:
            se = 0.0
        return Estimate(acc.mean, se, acc.n)

    def __contains__(self, name: str) -> bool:
        return name in self.accumulators

    def names(self) -> list[str]:
        return sorted(self.accumulators)

    def as_dict(self) -> dict[str, Estimate]:
        return {k: self[k] for k in self.names()}


class ScenarioError(LookupError):
    pass


class WorkerError(RuntimeError):
    def __init__(self, worker: int, block: int, cause: BaseException):
        super().__init__(f"worker {worker} failed on block {block}: {cause!r}")
        self.worker = worker
        self.block = block
        self.__cause__ = cause


SCENARIOS: dict[str, Scenario] = {}


def register_scenario(name: str):
    def deco(fn: Scenario) -> Scenario:
        SCENARIOS[name] = fn
        return fn

    return deco


@register_scenario("constant")
def _constant(rng: np.random.Generator, n: int):
    return {"value": np.ones(n)}


@register_scenario("uniform")
def _uniform(rng: np.random.Generator, n: int):
    return {"value": rng.random(n)}


@dataclass(frozen=True)
class RunPlan:
    master_seed: int
    trials_total: int
    scenario: str | Scenario
    workers: int = 1
    batch_size: int = 100_000
    label: str = ""

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.trials_total < 1 or self.batch_size < 1:
            raise ValueError("trials_total and batch_size must be positive")

    @property
    def n_blocks(self) -> int:
        return -(-self.trials_total // self.batch_size)

    def block_size(self, b: int) -> int:
        return min(self.batch_size, self.trials_total - b * self.batch_size)

    def allocation(self) -> list[list[int]]:
        """Block indices handled by each worker (round robin)."""
        return [list(range(w, self.n_blocks, self.workers)) for w in range(self.workers)]

    def worker_trials(self) -> list[int]:
        return [sum(self.block_size(b) for b in blocks) for blocks in self.allocation()]

    def resolve(self) -> Scenario:
        if callable(self.scenario):
            return self.scenario
        try:
            return SCENARIOS[self.scenario]
        except KeyError:
            raise ScenarioError(f"unknown scenario {self.scenario!r}") from None

    def scenario_hash(self) -> str:
        if isinstance(self.scenario, str):
            ident = self.scenario
        else:
            ident = getattr(self.scenario, "key", None) or getattr(self.scenario, "__qualname__", repr(self.scenario))
        return hashlib.sha256(f"{ident}|{self.label}".encode()).hexdigest()[:16]


def run_plan_execute(plan: RunPlan) -> EstimateSet:
    fn = plan.resolve()

    def run_worker(w: int, blocks: list[int]) -> dict[int, EstimateSet]:
        out = {}
        for b in blocks:
            try:
                out[b] = EstimateSet.from_samples(fn(stream(plan.master_seed, b), plan.block_size(b)))
            except Exception as exc:
                raise WorkerError(w, b, exc) from exc
        return out

    alloc = plan.allocation()
    if plan.workers == 1:
        parts = [run_worker(0, alloc[0])]
    else:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            futures = [pool.submit(run_worker, w, blocks) for w, blocks in enumerate(alloc)]
            parts = [f.result() for f in futures]
    by_block: dict[int, EstimateSet] = {}
    for part in parts:
        by_block.update(part)
    result = EstimateSet()
    for b in range(plan.n_blocks):
        result = result.merge(by_block[b])
    return result


def execute_with_manifest(plan: RunPlan) -> tuple[EstimateSet, dict]:
    """Run ``plan`` and report provenance plus throughput (no correctness contract)."""
    t0 = time.perf_counter()
    est = run_plan_execute(plan)
    wall = time.perf_counter() - t0
    manifest = {
        "master_seed": plan.master_seed,
        "workers": plan.workers,
        "trials_total": plan.trials_total,
        "batch_size": plan.batch_size,
        "scenario_hash": plan.scenario_hash(),
        "wall_time_s": wall,
        "samples_per_s": plan.trials_total / wall if wall > 0 else float("inf"),
    }
    return est, manifest
