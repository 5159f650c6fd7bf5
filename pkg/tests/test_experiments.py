import math
from pathlib import Path

import pytest

from tipfront.experiments import ConfigError, ExperimentConfig, parse_config
from tipfront.experiments.cli import main
from tipfront.experiments.commands import (
    cmd_curve,
    cmd_sweep,
    cmd_trajectories,
    read_table,
    speed_point,
)
from tipfront.rates import FecEstModel, Kernel

SMALL = """
# desk-test settings
model = fec_est
c_fec = 0.5
c_est = 0.5
t1 = 10
t2 = 60
n_runs = 6
count = 3
curve_points = 3
trajectory_runs = 4
trajectory_samples = 12
fluct_times = 20, 40, 80
fluct_runs = 30
speed_runs = 10
oracle_runs = 2000
martingale_runs = 100
martingale_times = 5, 10
condition_trials = 2000
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


def test_parse_defaults_and_kernels():
    cfg = parse_config("dispersal = 2: 1 1 1 1 1\nc_est = 0.25\nfluct_times = 1, 2")
    assert cfg.dispersal == Kernel.indicator(2)
    assert cfg.c_est == 0.25 and cfg.fluct_times == (1.0, 2.0)
    model = cfg.build_model()
    assert isinstance(model, FecEstModel) and model.range == 2


def test_dump_round_trip():
    cfg = parse_config(SMALL)
    assert parse_config(cfg.dump()) == cfg


@pytest.mark.parametrize("text", [
    "c_fec = -1",
    "t1 = 10\nt2 = 5",
    "bogus = 3",
    "count = 0",
    "c_fec 0.5",
    "dispersal = 1: 1 1",
    "model = other",
    "c_est = 0.1\nc_est = 0.2",
    "n_runs = many",
])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_cli_bad_config_exit_code(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("t1 = 5\nt2 = 1\n")
    assert main(["sweep", "--config", str(p), "--out-dir", str(tmp_path)]) == 2
    assert main(["sweep", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_sweep_grid_single_free_point(tmp_path):
    cfg = ExperimentConfig(sweep_mode="grid", count=1, t1=10, t2=60, n_runs=5,
                           out_dir=str(tmp_path))
    res = cmd_sweep(cfg)
    assert res.pairs == [(0.0, 0.0)]
    assert res.estimates[0].lambda_hat > 0
    schema, rows = read_table(res.csv_path)
    assert schema == "tipfront.sweep/1"
    assert list(rows[0]) == ["c_fec", "c_est", "speed", "std_error"]
    assert Path(res.svg_path).read_text().startswith("<svg")


def test_repeated_pair_reproduces(tmp_path):
    cfg = ExperimentConfig(t1=10, t2=60, n_runs=5, out_dir=str(tmp_path))
    assert speed_point(cfg, 0.3, 0.6) == speed_point(cfg, 0.3, 0.6)


def test_curve_single_point(tmp_path):
    cfg = ExperimentConfig(curve_points=1, t1=10, t2=60, n_runs=4, out_dir=str(tmp_path))
    res = cmd_curve(cfg)
    _, rows = read_table(res.csv_path)
    assert len(rows) == 1


def test_more_replicas_shrink_error(tmp_path):
    cfg = ExperimentConfig(t1=20, t2=120, out_dir=str(tmp_path))
    a = speed_point(cfg, 1.0, 0.5, n_runs=100)
    b = speed_point(cfg, 1.0, 0.5, n_runs=200)
    assert 0.5 <= b.std_error / a.std_error <= 0.95


def test_trajectories_nondecreasing(tmp_path):
    cfg = parse_config(SMALL).with_overrides(out_dir=str(tmp_path))
    res = cmd_trajectories(cfg)
    _, rows = read_table(res.csv_path)
    by_run = {}
    for r in rows:
        by_run.setdefault(r["run_id"], []).append(int(r["X"]))
    assert len(by_run) == 4
    for xs in by_run.values():
        assert xs == sorted(xs)
    speeds = [tr.X[-1] / tr.t[-1] for tr in res.trajectories]
    mean = sum(speeds) / len(speeds)
    sd = math.sqrt(sum((s - mean) ** 2 for s in speeds) / (len(speeds) - 1))
    assert all(abs(s - mean) <= 3 * sd + 1e-12 for s in speeds)


@pytest.mark.parametrize("verb", ["sweep", "curve", "trajectories", "fluct"])
def test_cli_verbs_deterministic_across_parallelism(verb, cfg_file, tmp_path):
    d1, d2 = tmp_path / "p1", tmp_path / "p3"
    assert main([verb, "--config", str(cfg_file), "--out-dir", str(d1), "--seed", "9"]) == 0
    assert main([verb, "--config", str(cfg_file), "--out-dir", str(d2), "--seed", "9",
                 "--parallelism", "3"]) == 0
    files = sorted(p.name for p in d1.iterdir())
    assert files == sorted(p.name for p in d2.iterdir())
    for name in files:
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes(), name
        if name.endswith(".csv"):
            assert (d1 / name).read_text().startswith("# schema=tipfront.")


def test_seed_changes_output(cfg_file, tmp_path):
    main(["sweep", "--config", str(cfg_file), "--out-dir", str(tmp_path / "a"), "--seed", "1"])
    main(["sweep", "--config", str(cfg_file), "--out-dir", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "sweep.csv").read_bytes() != (tmp_path / "b" / "sweep.csv").read_bytes()


def test_replicas_flag(cfg_file, tmp_path):
    main(["trajectories", "--config", str(cfg_file), "--out-dir", str(tmp_path), "--replicas", "2"])
    _, rows = read_table(tmp_path / "trajectories.csv")
    assert {r["run_id"] for r in rows} == {"0", "1"}


def test_validate_stock_config_passes(cfg_file, tmp_path, capsys):
    assert main(["validate", "--config", str(cfg_file), "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS conditions" in out


def test_validate_catches_wrong_range(cfg_file, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text(SMALL.replace("condition_trials = 2000", "condition_trials = 10000")
                   + "interaction_range = 3\n")
    assert main(["validate", "--config", str(bad), "--out-dir", str(tmp_path)]) == 1
    _, rows = read_table(tmp_path / "validate.csv")
    cond = next(r for r in rows if r["check"] == "conditions")
    assert cond["passed"] == "0" and "locality" in cond["note"]


def test_validate_zero_tolerance_fails(cfg_file, tmp_path, capsys):
    zero = tmp_path / "zero.cfg"
    zero.write_text(SMALL + "tolerance = 0\n")
    assert main(["validate", "--config", str(zero), "--out-dir", str(tmp_path)]) == 1
    assert "FAIL oracle_mean_tip" in capsys.readouterr().out
