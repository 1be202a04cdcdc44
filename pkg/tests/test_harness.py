import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reachguard.config import ConfigError, ExperimentConfig
from reachguard.harness import experiments as ex
from reachguard.harness.cli import main
from reachguard.harness.metrics import compute_metrics, reports_from_csv, reports_to_csv
from reachguard.harness.soundness import check_pipes, random_query, run_soundness
from reachguard.reach import construct_flowpipe


def rec(verdict="safe", elapsed=10.0, iters=5, missed=False, active="complex", area=3.0, collision=False):
    return {"verdict": verdict, "elapsed_ms": elapsed, "iterations": iters, "deadline_missed": missed,
            "active_controller": active, "flowpipe_area": area, "collision": collision}


def test_pmd_example():
    log = [rec()] * 99 + [rec(elapsed=30.0, missed=True)]
    r = compute_metrics([log], t_runtime=0.025)
    assert r.pmd_pct == 1.0 and r.moet_ms == 30.0 and r.moet_ms >= r.mean_et_ms


def test_collision_frequency_example():
    logs = [[rec()], [rec(collision=True)], [rec()], [rec(collision=True)], [rec()]]
    assert compute_metrics(logs).collision_frequency_pct == 40.0


def test_all_safe_example():
    r = compute_metrics([[rec()] * 10, [rec()] * 7])
    assert r.complex_usage_pct == 100.0 and r.safe_action_pct == 100.0 and r.safe_action_pct_sd == 0.0


def test_metrics_errors():
    with pytest.raises(ValueError):
        compute_metrics([])
    with pytest.raises(ValueError):
        compute_metrics([[]])


episode = st.lists(st.builds(rec, verdict=st.sampled_from(["safe", "unsafe"]), elapsed=st.floats(0, 40),
                             iters=st.integers(1, 6), missed=st.booleans(),
                             active=st.sampled_from(["complex", "safety"]), area=st.floats(0, 100),
                             collision=st.booleans()), min_size=1, max_size=20)


@settings(max_examples=100, deadline=None)
@given(st.lists(episode, min_size=1, max_size=6), st.randoms())
def test_metrics_permutation_invariant_and_bounded(logs, rnd):
    a = compute_metrics(logs)
    shuffled = list(logs)
    rnd.shuffle(shuffled)
    assert compute_metrics(shuffled) == a
    for f in ("safe_action_pct", "collision_frequency_pct", "pmd_pct", "complex_usage_pct"):
        assert 0 <= getattr(a, f) <= 100
    assert a.moet_ms >= a.mean_et_ms - 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(episode, min_size=1, max_size=4))
def test_csv_roundtrip(logs):
    r = compute_metrics(logs)
    assert reports_from_csv(reports_to_csv([r, r])) == [r, r]


def test_config_roundtrip_and_validation(tmp_path, monkeypatch):
    cfg = ExperimentConfig(controller="disparity_extender", opponents=2, seed=3)
    p = tmp_path / "c.json"
    cfg.save(p)
    assert ExperimentConfig.load(p) == cfg
    monkeypatch.setenv("REACHGUARD_SEED", "11")
    assert ExperimentConfig.load(p).seed == 11
    monkeypatch.setenv("REACHGUARD_SEED", "x")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig(repeats=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(table_preset=True, speed_setpoint=0.7)
    with pytest.raises(ConfigError):
        ExperimentConfig(physics_hz=30.0)


def test_sweep_requires_sorted_levels():
    with pytest.raises(ValueError):
        ex.run_uncertainty_sweep(ex.sweep_base(), [10, 5])


def test_grid_reports_failing_cell(monkeypatch):
    real = ex._run_one

    def flaky(args):
        cfg, seed = args
        if cfg.speed_setpoint == 1.0:
            raise RuntimeError("boom")
        return real(args)
    monkeypatch.setattr(ex, "_run_one", flaky)
    base = ExperimentConfig(duration=0.5, repeats=1)
    rows = ex.safety_table(base, True, controllers=["pure_pursuit"], opponents=[2], speeds=[0.5, 1.0])
    lines = ex.safety_table_rows(rows)
    assert len(lines) == 2 and lines[0][-1] == "" and "boom" in lines[1][-1]
    assert len(lines[0]) == len(ex.SAFETY_TABLE_HEADER)


def test_replay_cells_record_their_own_log(tmp_path):
    cfg = ExperimentConfig(controller="replay", duration=1.0, repeats=2)
    logs = ex.run_repeats(cfg, workdir=str(tmp_path))
    assert len(logs) == 2 and all(len(lg) == 20 for lg in logs)


def test_soundness_checker_catches_a_shrunk_pipe():
    rng = np.random.default_rng(0)
    qs = [random_query(rng) for _ in range(5)]
    pipes = [construct_flowpipe(q, q.h0)[0] for q in qs]
    assert check_pipes(qs, pipes, n_traj=20)[1] == 0
    for p in pipes:
        mid = p.bounds[:, 0, :].mean(axis=1)
        p.bounds[:, 0, 0] = mid
        p.bounds[:, 0, 1] = mid
    assert check_pipes(qs, pipes, n_traj=20)[1] > 0


def test_small_soundness_run():
    rep = run_soundness(n_queries=20, n_traj=20, seed=5)
    assert rep.ok and rep.samples > 0


def test_cli_run_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["run", "--seed", "7", "--repeats", "1", "--duration", "2", "--out", str(out),
                     "--set", "opponents=2"]) == 0
    assert (a / "episode_seed7.jsonl").read_bytes() == (b / "episode_seed7.jsonl").read_bytes()
    m = json.loads((a / "metrics.json").read_text())
    assert m["periods"] == 40


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert main(["run", "--set", "controller=nope", "--out", str(tmp_path)]) != 0
    assert main(["run", "--set", "bogus=1", "--out", str(tmp_path)]) != 0
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) != 0
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_cli_table_and_timing_shapes(tmp_path):
    assert main(["table2", "--repeats", "1", "--duration", "0.5", "--speeds", "0.5", "--out", str(tmp_path),
                 "--set", "opponents=2"]) == 0
    lines = (tmp_path / "table2.csv").read_text().splitlines()
    assert lines[0].split(",") == ex.SAFETY_TABLE_HEADER
    assert len(lines) == 1 + len(ex.TABLE_CONTROLLERS) * len(ex.TABLE_OPPONENTS)
    assert main(["timing", "--runtime-ms", "10,25", "--speeds", "0.5,1.0", "--duration", "0.5",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "timing.csv").read_text().splitlines()
    assert lines[0].split(",") == ex.TIMING_HEADER and len(lines) == 5


def test_cli_sweep_and_soundness(tmp_path):
    assert main(["sweep", "--pcts", "0,30", "--duration", "1", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].split(",") == ex.SWEEP_HEADER and len(lines) == 3
    assert (tmp_path / "sweep.dat").read_text().startswith("# ")
    assert main(["soundness", "--queries", "5", "--trajectories", "10", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "soundness.json").read_text())["violations"] == 0
