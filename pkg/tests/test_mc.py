import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qiopa.mc import (
    EstimateSet,
    RunPlan,
    ScenarioError,
    WorkerError,
    binomial_sample,
    derive_seed,
    execute_with_manifest,
    run_plan_execute,
    stream,
)


def _gauss(rng, n):
    return {"x": rng.standard_normal(n), "y": rng.random(n) ** 2}


def test_streams_are_keyed():
    a = stream(5, 0).random(4)
    np.testing.assert_array_equal(a, stream(5, 0).random(4))
    assert not np.array_equal(a, stream(5, 1).random(4))
    assert not np.array_equal(a, stream(6, 0).random(4))


def test_derive_seed_stable():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(1, 3)
    assert 0 <= derive_seed(2**64 - 1, 0) < 2**64


def test_constant_scenario():
    est = run_plan_execute(RunPlan(1, 1000, "constant", batch_size=300))["value"]
    assert (est.value, est.std_err, est.n_samples) == (1.0, 0.0, 1000)


def test_unknown_scenario():
    with pytest.raises(ScenarioError):
        run_plan_execute(RunPlan(1, 10, "nope"))


def test_worker_error_carries_ids():
    def boom(rng, n):
        raise RuntimeError("bad block")

    with pytest.raises(WorkerError) as info:
        run_plan_execute(RunPlan(1, 10, boom, workers=2, batch_size=5))
    assert info.value.worker in (0, 1)
    assert info.value.block in (0, 1)


@pytest.mark.parametrize("workers", [1, 2, 3, 8])
def test_worker_count_invariance(workers):
    ref = run_plan_execute(RunPlan(42, 10_007, _gauss, workers=1, batch_size=1000)).as_dict()
    got = run_plan_execute(RunPlan(42, 10_007, _gauss, workers=workers, batch_size=1000)).as_dict()
    assert got == ref


@settings(max_examples=30, deadline=None)
@given(trials=st.integers(1, 5000), batch=st.integers(1, 700), workers=st.integers(1, 9))
def test_allocation_covers_trials(trials, batch, workers):
    plan = RunPlan(0, trials, "constant", workers=workers, batch_size=batch)
    assert sum(plan.worker_trials()) == trials
    blocks = sorted(b for w in plan.allocation() for b in w)
    assert blocks == list(range(plan.n_blocks))


def test_std_err_definition():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(1234)
    est = EstimateSet.from_samples({"x": x})["x"]
    assert est.value == pytest.approx(x.mean(), rel=1e-14)
    assert est.std_err == pytest.approx(x.std(ddof=1) / math.sqrt(x.size), rel=1e-12)


def test_merge_associative_and_commutative():
    rng = np.random.default_rng(1)
    a, b, c = (EstimateSet.from_samples({"x": rng.exponential(size=n)}) for n in (10, 333, 57))
    left = a.merge(b.merge(c))["x"]
    right = a.merge(b).merge(c)["x"]
    swapped = c.merge(a).merge(b)["x"]
    for other in (right, swapped):
        assert other.value == left.value
        assert other.n_samples == left.n_samples
        assert other.std_err == pytest.approx(left.std_err, rel=1e-12)


def test_merge_matches_pooled():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(900)
    parts = [EstimateSet.from_samples({"x": x[i:i + 300]}) for i in (0, 300, 600)]
    merged = parts[0].merge(parts[1]).merge(parts[2])["x"]
    pooled = EstimateSet.from_samples({"x": x})["x"]
    assert merged.value == pytest.approx(pooled.value, rel=1e-14)
    assert merged.std_err == pytest.approx(pooled.std_err, rel=1e-12)


def test_binomial_endpoints():
    rng = stream(0, 0)
    n = np.array([0, 5, 10**5])
    np.testing.assert_array_equal(binomial_sample(n, 0.0, rng), 0)
    np.testing.assert_array_equal(binomial_sample(n, 1.0, rng), n)
    with pytest.raises(ValueError):
        binomial_sample(n, 1.5, rng)
    with pytest.raises(ValueError):
        binomial_sample(-1, 0.5, rng)


def test_binomial_large_n_mean():
    m = binomial_sample(np.full(1_000_000, 10**5), 3e-4, stream(3, 0))
    se = m.std(ddof=1) / 1000.0
    assert abs(m.mean() - 30.0) < 4 * se


def test_binomial_large_n_variance():
    m = binomial_sample(np.full(1_000_000, 10**5), 0.5, stream(4, 0))
    assert m.var(ddof=1) == pytest.approx(25_000, rel=0.05)
    assert m.min() >= 0 and m.max() <= 10**5


def test_manifest_reports_throughput():
    est, man = execute_with_manifest(RunPlan(7, 5000, "uniform", workers=2, batch_size=1000, label="u"))
    assert man["trials_total"] == 5000 and man["workers"] == 2
    assert man["samples_per_s"] > 0
    assert len(man["scenario_hash"]) == 16
    assert est["value"].value == pytest.approx(0.5, abs=0.02)


@pytest.mark.parametrize("kw", [dict(workers=0), dict(trials_total=0), dict(batch_size=0)])
def test_plan_validation(kw):
    base = dict(master_seed=1, trials_total=10, scenario="constant")
    with pytest.raises(ValueError):
        RunPlan(**{**base, **kw})
