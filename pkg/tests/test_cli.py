import json
import subprocess
import sys

import pytest
import yaml

from qiopa.cli import main

FAST = {
    "fringe": ["--set", "run.trials=4000", "--set", "physics.phi.points=4", "--set", "physics.g=1.0", "--set", "physics.eta=0.1"],
    "enhancement-map": ["--set", "physics.g.points=5", "--set", "physics.eta.points=4"],
    "of-tradeoff": ["--set", "physics.method=mc", "--set", "run.trials=3000", "--set", "physics.k=[0,2,5]",
                    "--set", "physics.g=1.5", "--set", "physics.eta=0.2", "--set", "physics.phi.points=4"],
    "fisher": ["--set", "physics.phi=[0.5,1.5]", "--set", "physics.g=1.0"],
    "calibrate": ["--set", "physics.synthetic.n_points=12"],
    "oracle-check": ["--set", "physics.g=[0.2,0.6]", "--set", "physics.sampler.trials=20000"],
}


def _csvs(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


@pytest.mark.parametrize("command", list(FAST))
def test_commands_succeed_and_reproduce(command, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main([command, "--seed", "7", "--out", str(a), *FAST[command]]) == 0
    assert main([command, "--seed", "7", "--workers", "3", "--out", str(b), *FAST[command]]) == 0
    ca, cb = _csvs(a), _csvs(b)
    assert ca and ca == cb
    man = json.loads((a / "manifest.json").read_text())
    assert all(line.decode().startswith(f"# manifest={man['config_hash']}") for line in ca.values())
    assert sorted(man["tables"]) == sorted(ca)


def test_seed_changes_mc_output(tmp_path):
    args = FAST["fringe"]
    assert main(["fringe", "--seed", "1", "--out", str(tmp_path / "a"), *args]) == 0
    assert main(["fringe", "--seed", "2", "--out", str(tmp_path / "b"), *args]) == 0
    assert _csvs(tmp_path / "a") != _csvs(tmp_path / "b")


def test_env_worker_default(tmp_path, monkeypatch):
    monkeypatch.setenv("QIOPA_WORKERS", "3")
    assert main(["fisher", "--out", str(tmp_path / "a"), *FAST["fisher"]]) == 0
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["workers"] == 3
    assert main(["fisher", "--workers", "2", "--out", str(tmp_path / "b"), *FAST["fisher"]]) == 0
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["workers"] == 2
    monkeypatch.setenv("QIOPA_WORKERS", "many")
    assert main(["fisher", "--out", str(tmp_path / "c")]) == 2


def test_flags_before_subcommand(tmp_path):
    assert main(["--seed", "3", "--out", str(tmp_path / "a"), "fisher", *FAST["fisher"]]) == 0
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["master_seed"] == 3


def test_config_file_and_dump(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text("kind: fisher\nphysics: {g: 1.2, phi: [1.0]}\n")
    assert main(["fisher", "--config", str(path), "--dump-config"]) == 0
    dumped = yaml.safe_load(capsys.readouterr().out)
    assert dumped["physics"]["g"] == 1.2
    assert main(["fisher", "--config", str(path), "--out", str(tmp_path / "o")]) == 0


def test_bundled_config_by_name(capsys):
    assert main(["enhancement-map", "--config", "fig2d", "--dump-config"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["physics"]["panel"] == "critical"


def test_list_configs(capsys):
    assert main(["--list-configs"]) == 0
    out = capsys.readouterr().out
    assert "fig2a\tenhancement_map" in out and "sfig5\tof_tradeoff" in out


@pytest.mark.parametrize("argv", [
    [],
    ["fisher", "--set", "physics.nope=1"],
    ["fisher", "--config", "does-not-exist"],
    ["fisher", "--config", "fig2a"],
    ["fisher", "--set", "run.trials=-5"],
    ["fisher", "--corrupt-formula"],
])
def test_config_errors_exit_2(argv, tmp_path):
    assert main([*argv, "--out", str(tmp_path)] if argv else argv) == 2


def test_regime_error_exit_3(tmp_path):
    assert main(["oracle-check", "--set", "physics.g=1.5", "--out", str(tmp_path)]) == 3


def test_fisher_regime_error_exit_3(tmp_path):
    assert main(["fisher", "--set", "physics.g=4.5", "--set", "physics.eta=0.05", "--out", str(tmp_path)]) == 3


def test_corrupted_formula_exit_4(tmp_path):
    out = tmp_path / "o"
    assert main(["oracle-check", "--corrupt-formula", "--out", str(out), *FAST["oracle-check"]]) == 4
    assert (out / "oracle.csv").exists()
    assert json.loads((out / "manifest.json").read_text())["summary"]["passed"] is False


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qiopa.cli", "enhancement-map", "--config", "fig2d", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "critical.csv").exists()
