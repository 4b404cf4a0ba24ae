import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qiopa.archive import ResultArchive
from qiopa.config import (
    KINDS,
    ConfigError,
    RunSettings,
    ScenarioConfig,
    bundled_configs,
    expand_grid,
    load_bundled,
)
from qiopa.scenarios import run_scenario
from qiopa.tables import format_table, parse_table, read_table, write_table

BUNDLED = ["fig2a", "fig2b", "fig2c", "fig2d", "fig3a", "fig3b", "sfig3", "sfig4", "sfig5"]


def test_bundled_set():
    assert bundled_configs() == BUNDLED


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_round_trip(name):
    cfg = load_bundled(name)
    back = ScenarioConfig.from_yaml(cfg.to_yaml())
    assert back.to_dict() == cfg.to_dict()
    assert back.semantic_hash() == cfg.semantic_hash()


@pytest.mark.parametrize("kind", KINDS)
def test_defaults_round_trip(kind):
    cfg = ScenarioConfig(kind)
    assert ScenarioConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_load_from_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("kind: fisher\nphysics: {g: 1.5}\nrun: {master_seed: 9}\n")
    cfg = ScenarioConfig.load(path)
    assert cfg.physics["g"] == 1.5 and cfg.physics["p"] == 0.2
    assert cfg.run.master_seed == 9
    with pytest.raises(ConfigError):
        ScenarioConfig.load(tmp_path / "missing.yaml")


@pytest.mark.parametrize("text", [
    "kind: nope",
    "physics: {}",
    "kind: fisher\nphysics: {gg: 1}",
    "kind: fisher\nrun: {threads: 2}",
    "kind: fisher\nextra: 1",
    "kind: fisher\noutput: {path: x}",
    "kind: fisher\nrun: {trials: 0}",
    "kind: fisher\nrun: {master_seed: -1}",
    "kind: [unclosed",
    "- a list",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_yaml(text)


def test_nested_merge_keeps_defaults():
    cfg = ScenarioConfig("oracle_check", {"sampler": {"trials": 1000}})
    assert cfg.physics["sampler"]["trials"] == 1000
    assert cfg.physics["sampler"]["alpha"] == 1e-3
    with pytest.raises(ConfigError):
        ScenarioConfig("oracle_check", {"sampler": {"trails": 1000}})


def test_range_replaced_wholesale():
    cfg = ScenarioConfig("enhancement_map", {"g": {"start": 1.0, "stop": 2.0, "points": 3}})
    assert "scale" not in cfg.physics["g"]
    cfg = ScenarioConfig("enhancement_map", {"g": [1.0, 2.0]})
    assert cfg.physics["g"] == [1.0, 2.0]


def test_hash_ignores_workers_and_output():
    cfg = ScenarioConfig("fisher")
    h = cfg.semantic_hash()
    assert cfg.with_overrides(workers=4, out="elsewhere").semantic_hash() == h
    assert cfg.with_overrides(seed=2).semantic_hash() != h
    assert cfg.with_overrides(["physics.g=2.5"]).semantic_hash() != h
    assert cfg.with_overrides(["run.trials=1000"]).semantic_hash() != h
    # same value spelled differently is the same config
    assert cfg.with_overrides(["physics.g=2.0"]).semantic_hash() == h


@settings(max_examples=30, deadline=None)
@given(g=st.floats(0.0, 1.0), p=st.floats(0.01, 1.0))
def test_hash_tracks_physics(g, p):
    a = ScenarioConfig("fisher", {"g": g, "p": p})
    b = ScenarioConfig("fisher", {"g": g, "p": p})
    assert a.semantic_hash() == b.semantic_hash()
    c = ScenarioConfig("fisher", {"g": g + 0.5, "p": p})
    assert c.semantic_hash() != a.semantic_hash()


@pytest.mark.parametrize("bad", ["physics.nope=1", "nokey", "run.trials.x=1", "physics.g=[unclosed"])
def test_bad_overrides(bad):
    with pytest.raises(ConfigError):
        ScenarioConfig("fisher").with_overrides([bad])


def test_run_settings_validation():
    assert RunSettings().trials == 200_000
    for kw in (dict(workers=0), dict(batch_size=1.5), dict(trials=True), dict(master_seed=2**64)):
        with pytest.raises(ConfigError):
            RunSettings(**kw)


@pytest.mark.parametrize("spec, expected", [
    (2.5, [2.5]),
    ([1, 2, 3], [1.0, 2.0, 3.0]),
    ({"start": 0, "stop": 1, "points": 3}, [0.0, 0.5, 1.0]),
    ({"start": 1, "stop": 100, "points": 3, "scale": "log"}, [1.0, 10.0, 100.0]),
    ({"start": 0, "stop": 4, "points": 4, "endpoint": False}, [0.0, 1.0, 2.0, 3.0]),
])
def test_expand_grid(spec, expected):
    np.testing.assert_allclose(expand_grid(spec), expected, rtol=1e-14)


@pytest.mark.parametrize("spec", [
    {"start": 0, "stop": 1},
    {"start": 0, "stop": 1, "points": 0},
    {"start": 0, "stop": 1, "points": 3, "scale": "log"},
    {"start": 0, "stop": 1, "points": 3, "scale": "cubic"},
    {"start": 0, "stop": 1, "points": 3, "step": 1},
    [],
    [1.0, float("nan")],
    "abc",
    True,
])
def test_expand_grid_rejects(spec):
    with pytest.raises(ConfigError):
        expand_grid(spec)


def test_expand_integer_grid():
    out = expand_grid({"start": 0, "stop": 90, "points": 10}, integer=True)
    assert out.dtype == np.int64 and out[-1] == 90
    with pytest.raises(ConfigError):
        expand_grid([0.5], integer=True)


# -- tables --------------------------------------------------------------------


def test_table_round_trip_exact():
    rng = np.random.default_rng(0)
    cols = {
        "x": rng.standard_normal(7) * 1e-300,
        "k": np.arange(7, dtype=np.int64),
        "flag": np.array([True, False] * 3 + [True]),
        "y": np.array([np.inf, -np.inf, np.nan, 0.1, 1e308, -0.0, 3.0]),
        "name": np.array(list("abcdefg"), dtype=object),
    }
    tag, back = parse_table(format_table(cols, "deadbeef"))
    assert tag == "deadbeef"
    assert list(back) == list(cols)
    np.testing.assert_array_equal(back["x"], cols["x"])
    np.testing.assert_array_equal(back["k"], cols["k"])
    np.testing.assert_array_equal(back["flag"], cols["flag"].astype(int))
    np.testing.assert_array_equal(back["y"], cols["y"])
    assert back["y"].dtype == float
    assert list(back["name"]) == list("abcdefg")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False), min_size=1, max_size=20))
def test_float_columns_bit_exact(values):
    arr = np.array(values, dtype=float)
    _, back = parse_table(format_table({"v": arr}, "h"))
    np.testing.assert_array_equal(back["v"].astype(float), arr)


def test_table_length_mismatch():
    with pytest.raises(ValueError):
        format_table({"a": np.zeros(2), "b": np.zeros(3)}, "h")


def test_table_files(tmp_path):
    p = write_table(tmp_path / "sub" / "t.csv", {"a": np.array([1.5, 2.5])}, "abc")
    tag, cols = read_table(p)
    assert tag == "abc"
    np.testing.assert_array_equal(cols["a"], [1.5, 2.5])


# -- archives ------------------------------------------------------------------


def test_archive_round_trip(tmp_path):
    cfg = ScenarioConfig("enhancement_map", {"g": [0.0, 4.5], "p": 0.15, "eta": [3e-4]})
    arch = run_scenario(cfg)
    out = arch.write(tmp_path / "a")
    back = ResultArchive.load(out)
    assert back.config_hash == cfg.semantic_hash()
    assert back.config == cfg.to_dict()
    for name, cols in arch.tables.items():
        for col, v in cols.items():
            np.testing.assert_array_equal(back.tables[name][col], v)
    E = back.tables["enhancement"]["E"]
    assert E[0] == pytest.approx(1.0, abs=1e-12)
    assert E[1] == pytest.approx(222.65219836605, rel=1e-10)


def test_archive_detects_foreign_table(tmp_path):
    arch = run_scenario(ScenarioConfig("enhancement_map", {"g": [1.0], "eta": [0.01]}))
    out = arch.write(tmp_path / "a")
    (out / "enhancement.csv").write_text(format_table({"g": np.array([1.0])}, "0000"))
    with pytest.raises(ValueError):
        ResultArchive.load(out)


def test_archive_rejects_duplicate_table():
    arch = ResultArchive("h", ScenarioConfig("fisher").to_dict())
    arch.add_table("t", {"a": np.zeros(1)})
    with pytest.raises(ValueError):
        arch.add_table("t", {"a": np.zeros(1)})


def test_manifest_fields(tmp_path):
    arch = run_scenario(ScenarioConfig("enhancement_map", {"panel": "critical", "eta": [0.1, 1 / 3, 0.45]}))
    man = arch.manifest()
    assert {"config_hash", "master_seed", "workers", "tool_version", "started_at", "finished_at", "tables"} <= set(man)
    crit = arch.tables["critical"]
    assert crit["p_crit"][1] == 1.0
    np.testing.assert_array_equal(crit["achievable"], [1, 0, 0])
    assert math.isclose(crit["p_crit"][0], 0.125)
