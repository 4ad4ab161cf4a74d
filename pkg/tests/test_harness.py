import math

import pytest
from hypothesis import given, strategies as st

from mas_emergence.cli import main
from mas_emergence.harness import (CSV_HEADER, ExperimentConfig, SweepConfig, read_csv, replay_trace,
                                   run_experiment, stats, summary_text, sweep_coin_settings, sweep_settings,
                                   write_csv)


def test_stats_examples():
    s = stats([5, 5, 5])
    assert (s.mean, s.stddev, s.ci95) == (5, 0, (5, 5))
    assert stats([1, 3]).mean == 2
    assert stats([7]).stddev == 0.0
    with pytest.raises(ValueError):
        stats([])


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40))
def test_ci_is_symmetric_normal_approximation(xs):
    s = stats(xs)
    half = 1.96 * s.stddev / math.sqrt(len(xs))
    assert s.ci95[0] == pytest.approx(s.mean - half, abs=1e-9)
    assert s.ci95[1] == pytest.approx(s.mean + half, abs=1e-9)


def test_canonical_coin_record(tmp_path):
    recs, traces = run_experiment(ExperimentConfig("coin_quadrant", out_dir=tmp_path))
    (r,) = recs
    assert (r.steps_total, r.coins_agent1, r.coins_agent2, r.emergent, r.chasing) == (20, 0, 5, True, True)
    assert (tmp_path / "runs.csv").read_text().splitlines()[0] == ",".join(CSV_HEADER)
    assert (tmp_path / "summary.txt").exists()
    frames = replay_trace(tmp_path / "traces" / f"{r.run_id}.json")
    assert len(frames) == len(traces[0].states)


def test_empty_seed_list_writes_nothing(tmp_path):
    recs, _ = run_experiment(ExperimentConfig("coin_quadrant", seeds=[], out_dir=tmp_path / "o"))
    assert recs == []
    assert not (tmp_path / "o").exists()


def test_csv_round_trip_and_determinism(tmp_path):
    cfg = ExperimentConfig("two_rooms", remediation="on", seeds=[3, 1, 2])
    recs, _ = run_experiment(cfg)
    write_csv(recs, tmp_path / "a.csv")
    write_csv(run_experiment(cfg)[0], tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert b"\r\n" not in (tmp_path / "a.csv").read_bytes()
    back = read_csv(tmp_path / "a.csv")
    assert back == sorted(recs, key=lambda r: r.seed)
    assert {"true", "false"} >= {ln.split(",")[8] for ln in (tmp_path / "a.csv").read_text().splitlines()[1:]}


def test_empty_csv_is_header_only(tmp_path):
    write_csv([], tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == ",".join(CSV_HEADER) + "\n"
    assert read_csv(tmp_path / "e.csv") == []


def test_summary_means_match_stats():
    recs, _ = run_experiment(ExperimentConfig("two_rooms", remediation="on", seeds=list(range(8))))
    s = stats([r.steps_total for r in recs])
    assert f"mean={s.mean:.2f}" in summary_text(recs)


def test_single_setting_sweep():
    summary = sweep_coin_settings(ExperimentConfig("coin_quadrant", sweep=SweepConfig(1, (2, 12))))
    assert len(summary.rows) == 1
    row = summary.rows[0]
    assert summary.mean_reduction == row.baseline_steps - row.remediated_steps


def test_sweep_settings_seeded():
    a = sweep_settings(20, (2, 12))
    assert a == sweep_settings(20, (2, 12))
    assert [s for s, _ in a] == list(range(20))
    assert all(2 <= n <= 12 for _, n in a)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("coin_quadrant", agent_type="dqn")
    with pytest.raises(ValueError):
        ExperimentConfig("coin_quadrant", remediation="maybe")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--scenario", "coin_quadrant", "--seed", "0", "--out", str(tmp_path)]) == 0
    assert "coin_quadrant tsp remediation=off n=1" in capsys.readouterr().out
    trace = next((tmp_path / "traces").iterdir())
    assert main(["render", str(trace)]) == 0
    assert main(["run", "--scenario", str(tmp_path / "nope.txt")]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("name: x\n\n1?\n")
    assert main(["run", "--scenario", str(bad)]) == 1
    assert main(["sweep", "--scenario", "coin_quadrant", "--settings", "0"]) == 1
    assert main(["sweep", "--scenario", "coin_quadrant", "--settings", "2"]) == 0
