import pytest

from rlmh.cli import EXIT_CATASTROPHIC, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

CONFIG = """
target: gaussian2d
total_iterations: 1000
freeze_window: 300
episode_length: 200
reference: {n_samples: 400}
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(CONFIG)
    return str(p)


def test_run_ok(cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out), "--seed", "3", "--replicates", "2",
                 "--override", "step_size=0.5"]) == EXIT_OK
    assert (out / "replicate_001" / "trace.csv").exists()
    assert "replicate 1" in capsys.readouterr().out


def test_config_errors_exit_1(cfg, tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    assert main(["run", "--config", cfg, "--override", "bogus=1"]) == EXIT_CONFIG
    assert main(["run", "--config", cfg, "--override", "freeze_window=5000"]) == EXIT_CONFIG
    assert main(["run", "--config", cfg, "--replicates", "0"]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as e:
        main(["run"])
    assert e.value.code == EXIT_CONFIG
    assert main(["sweep", "--config", cfg, "--grid", ",", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_catastrophic_exit_3(cfg, tmp_path):
    args = ["run", "--config", cfg, "--out", str(tmp_path / "o"), "--override", "tuner=ddpg",
            "--override", "step_size=9.99", "--override", "ddpg.noise_sd=0",
            "--override", "failure.saturation_tol=0.01"]
    assert main(args) == EXIT_CATASTROPHIC


def test_sweep_and_export(cfg, tmp_path, capsys):
    assert main(["sweep", "--config", cfg, "--grid", "0.4,0.8", "--out", str(tmp_path / "s")]) == EXIT_OK
    assert (tmp_path / "s" / "sweep.csv").exists()
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "d"), "--override", "tuner=ddpg"]) == EXIT_OK
    ckpt = tmp_path / "d" / "replicate_000" / "actor_final.csv"
    assert main(["export-policy", "--checkpoint", str(ckpt), "--bbox=-2,2,-2,2", "--resolution", "5",
                 "--out", str(tmp_path / "e")]) == EXIT_OK
    assert len((tmp_path / "e" / "policy_grid.csv").read_text().splitlines()) == 37
    assert main(["export-policy", "--bbox=-2,2,-2,2", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_runtime_failure_exit_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("not a checkpoint\n")
    assert main(["export-policy", "--checkpoint", str(bad), "--bbox=-1,1,-1,1", "--out", str(tmp_path)]) == EXIT_RUNTIME
