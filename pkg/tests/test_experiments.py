import csv
import io
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from odtmarket.cli import main
from odtmarket.experiments import (
    CSV_COLUMNS, ConfigError, ScenarioConfig, format_config, generate_scenario, parse_config, run_campaign,
    run_large_scale, run_replication, summarize, worker_count,
)
from odtmarket.mechanism import FixedRate, OptimizedSweep

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestConfig:
    def test_parse(self):
        cfg = parse_config("n_passengers = 7  # comment\n\nalpha_r: 3\nfirst_feasible = no\nmode = exact\n")
        assert (cfg.n_passengers, cfg.alpha_r, cfg.first_feasible) == (7, 3.0, False)

    def test_round_trip(self):
        cfg = ScenarioConfig(n_passengers=11, alpha_d=2.5, seed=9, first_feasible=False)
        assert parse_config(format_config(cfg)) == cfg

    @pytest.mark.parametrize("text", [
        "speed = 3",
        "n_passengers = 3\nn_passengers = 4",
        "n_passengers = many",
        "n_passengers",
        "mode = fancy",
        "n_passengers = 21",
        "eps_step = 0",
        "alpha_r = -1",
        "first_feasible = maybe",
    ])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_large_scale_allows_many_passengers(self):
        cfg = parse_config("mode = large_scale\nn_passengers = 90\nn_vehicles = 30")
        pol = cfg.policies()
        assert pol["optimized"].objective == "truncated" and pol["optimized"].first_feasible
        assert pol["fixed"] == FixedRate(pooling=False)

    def test_exact_policies(self):
        pol = ScenarioConfig().policies()
        assert pol["optimized"] == OptimizedSweep(0.2, "separable", 12, False, "optimized")
        assert pol["hard"].eps_step > 1
        assert pol["fixed"].pooling

    def test_shipped_configs_parse(self):
        for path in CONFIGS.glob("*.cfg"):
            parse_config(path.read_text())

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv("ODT_THREADS", "1")
        assert worker_count() == 1
        monkeypatch.setenv("ODT_THREADS", "x")
        with pytest.raises(ConfigError):
            worker_count()


class TestScenario:
    def test_request_invariants(self):
        cfg = ScenarioConfig(n_passengers=20)
        scen = generate_scenario(cfg, np.random.default_rng(0))
        for req in scen.requests:
            ride = scen.travel.time(req.pickup, req.dropoff)
            assert 0 <= req.earliest_pickup <= req.latest_pickup < req.latest_dropoff
            assert req.latest_pickup - req.earliest_pickup <= cfg.max_pickup_window
            assert req.latest_dropoff == pytest.approx(req.latest_pickup + ride + cfg.dropoff_slack)
            assert req.distance_km == pytest.approx(scen.travel.dist(req.pickup, req.dropoff))
        assert set(scen.thresholds) == {r.id for r in scen.requests}

    def test_window_openings_uniform(self):
        cfg = ScenarioConfig(n_passengers=20, interval_minutes=60)
        rng = np.random.default_rng(1)
        starts = [r.earliest_pickup for _ in range(300) for r in generate_scenario(cfg, rng).requests]
        assert stats.kstest(np.array(starts) / 60, "uniform").pvalue > 0.01

    def test_depot_at_centre(self):
        scen = generate_scenario(ScenarioConfig(n_passengers=3, region_km=8), np.random.default_rng(0))
        assert scen.travel.depot == 0
        assert np.all(scen.travel.distance[0] <= np.hypot(4, 4) + 1e-12)


def test_summary_interval():
    s = summarize([1.0, 2.0, 3.0, 4.0])
    assert s.mean == 2.5 and s.n == 4
    assert s.half_width == pytest.approx(1.96 * np.std([1, 2, 3, 4], ddof=1) / 2)
    assert s.overlaps(summarize([4.0, 4.5])) and not s.overlaps(summarize([10.0, 10.0]))


def test_replication_uses_common_scenario():
    res = run_replication(ScenarioConfig(n_passengers=6), 3)
    assert set(res) == {"optimized", "hard", "fixed"}
    assert res == run_replication(ScenarioConfig(n_passengers=6), 3)
    assert res["optimized"]["expected_profit"] >= res["hard"]["expected_profit"]
    assert res["optimized"]["expected_profit"] >= res["fixed"]["expected_profit"] - 1e-12


def test_campaign_report(tmp_path):
    report = run_campaign(ScenarioConfig(n_passengers=5), 6, n_values=[4, 6], workers=1)
    report.write(tmp_path)
    rows = list(csv.DictReader(io.StringIO((tmp_path / "report.csv").read_text())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 2 * 3 * 5
    data = json.loads((tmp_path / "report.json").read_text())
    assert set(data["summaries"]) == {"4", "6"}
    assert len(data["replications"]["6"]) == 6


def test_parallel_matches_serial():
    cfg = ScenarioConfig(n_passengers=5)
    serial = run_campaign(cfg, 8, workers=1).to_csv()
    assert run_campaign(cfg, 8, workers=2).to_csv() == serial


def test_large_scale_mode_required():
    with pytest.raises(ConfigError):
        run_large_scale(ScenarioConfig(), 2)


class TestCli:
    def write_cfg(self, tmp_path, text="n_passengers = 6\nn_vehicles = 3\n"):
        path = tmp_path / "run.cfg"
        path.write_text(text)
        return str(path)

    def test_simulate(self, tmp_path, capsys):
        cfg = self.write_cfg(tmp_path)
        assert main(["simulate", "--config", cfg, "--trace", "--policy", "fixed"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["policy"] == "fixed" and "trace" in out
        assert main(["simulate", "--config", cfg]) == 0
        assert "trace" not in json.loads(capsys.readouterr().out)

    def test_campaign_is_byte_identical(self, tmp_path):
        cfg = self.write_cfg(tmp_path)
        for name in ("a", "b"):
            assert main(["campaign", "--config", cfg, "--reps", "4", "--out", str(tmp_path / name),
                         "--n-values", "4,5"]) == 0
        assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()

    def test_seed_override_changes_report(self, tmp_path):
        cfg = self.write_cfg(tmp_path)
        main(["campaign", "--config", cfg, "--reps", "4", "--out", str(tmp_path / "a")])
        main(["campaign", "--config", cfg, "--reps", "4", "--out", str(tmp_path / "b"), "--seed", "5"])
        assert (tmp_path / "a" / "report.csv").read_bytes() != (tmp_path / "b" / "report.csv").read_bytes()

    def test_rate_analysis(self, tmp_path):
        out = tmp_path / "rate.csv"
        args = ["rate-analysis", "--lambda", "0.1", "--zeta", "1", "--nu", "20", "--t-min", "1", "--t-max", "10",
                "--points", "5", "--out", str(out)]
        assert main(args) == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 5 and float(rows[-1]["T"]) == 10.0

    def test_validate(self, tmp_path, capsys):
        assert main(["validate", "--config", self.write_cfg(tmp_path)]) == 0
        assert capsys.readouterr().out.startswith("ok:")

    @pytest.mark.parametrize("args", [
        ["validate", "--config", "/nonexistent.cfg"],
        ["rate-analysis", "--lambda", "-1", "--zeta", "1", "--nu", "20", "--t-min", "1", "--t-max", "2",
         "--points", "2", "--out", "/dev/null"],
    ])
    def test_config_errors_exit_2(self, args, capsys):
        assert main(args) == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_key_exit_2(self, tmp_path):
        assert main(["validate", "--config", self.write_cfg(tmp_path, "bogus = 1\n")]) == 2
