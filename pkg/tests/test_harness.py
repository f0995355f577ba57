from __future__ import annotations

import io

import pytest

from coinroute.cli import main
from coinroute.harness import (REPORT_HEADER, ExperimentConfig, ExperimentReport, ReportRow, braess_check,
                               default_metric_mode, load_configs, parse_regimes, run_experiment, run_seeds,
                               steering_sweep)
from coinroute.topology import ConfigurationError

FAST = dict(window_waves=20, warmup_waves=40, measure_waves=60, bootstrap_waves=20)

CONFIG = """
[DEFAULT]
runs = 2
seed = 3
window_waves = 20
warmup_waves = 40
measure_waves = 60

[hex]
family = Hex
regimes = 1; 3
policies = ISPA, MB
steering = 0.5

[bootes]
family = Bootes4
regimes = 2,2
"""


def test_load_configs():
    cfgs = load_configs(CONFIG)
    assert [c.name for c in cfgs] == ["hex", "bootes"]
    hx, bt = cfgs
    assert hx.regimes == ((1,), (3,)) and hx.policies == ("ISPA", "MB") and hx.runs == 2
    assert bt.policies == ("ISPA",) and bt.mode == "global-per-packet"
    assert parse_regimes("1,1; 2,2") == ((1, 1), (2, 2))


@pytest.mark.parametrize("bad", [
    "[x]\nfamily = Hex\nregimes = 1,2\n",
    "[x]\nfamily = Torus\nregimes = 1\n",
    "[x]\nfamily = Hex\nregimes = 1\nruns = 0\n",
    "[x]\nfamily = Hex\nregimes = 1\ncolour = red\n",
    "[x]\nfamily = Hex\n",
])
def test_bad_configs(bad):
    with pytest.raises(ConfigurationError):
        load_configs(bad)


def test_metric_mode_defaults():
    assert default_metric_mode("Ray") == "sum-over-sources"
    assert default_metric_mode("Butterfly") == "sum-over-sources"
    assert default_metric_mode("Bootes2") == "global-per-packet"


def test_run_seeds_are_stable_prefixes():
    assert run_seeds(0, 5)[:3] == run_seeds(0, 3)
    assert len(set(run_seeds(0, 20))) == 20


def test_run_experiment_and_braess():
    cfg = ExperimentConfig("Hex", ((1,), (3,)), policies=("ISPA", "FK"), runs=2, **FAST)
    rep = run_experiment(cfg)
    assert len(rep.rows) == 2 * 2 * 2 and not rep.failures
    summary = braess_check(rep)
    assert summary.regimes("ISPA") == [(3,)]
    assert summary.regimes("FK") == []
    assert rep.cell("NetB", (3,), "ISPA").braess is True
    assert run_experiment(cfg).rows == rep.rows


def test_single_run_has_zero_stddev():
    rep = run_experiment(ExperimentConfig("Hex", ((2,),), runs=1, **FAST))
    assert all(r.stddev == 0 for r in rep.rows)


def test_csv_round_trip():
    cfg = ExperimentConfig("Bootes4", ((1, 1),), policies=("ISPA", "MB"), steering=(0.0, 0.5), runs=2, **FAST)
    rep = run_experiment(cfg)
    text = rep.to_csv_text()
    assert text.splitlines()[0] == ",".join(REPORT_HEADER)
    again = ExperimentReport.from_csv(io.StringIO(text))
    assert again.rows == rep.rows
    assert again.to_csv_text() == text


def test_failures_are_collected(monkeypatch):
    import coinroute.harness as h

    real = h.run_policy

    def flaky(spec, sim, pol):
        if pol.policy == "FK":
            raise RuntimeError("boom")
        return real(spec, sim, pol)

    monkeypatch.setattr(h, "run_policy", flaky)
    rep = run_experiment(ExperimentConfig("Hex", ((1,),), policies=("ISPA", "FK"), runs=2, **FAST))
    assert len(rep.rows) == 2 and len(rep.failures) == 2
    assert "boom" in rep.failures[0][1]


def test_braess_missing_variant_is_noted():
    rep = ExperimentReport([ReportRow("Hex", "NetA", (1,), "ISPA", None, "global-per-packet", 55.5, 0.0)])
    s = braess_check(rep)
    assert s.entries == [] and "missing" in s.notes[0]


def test_steering_sweep_includes_endpoints():
    cfg = ExperimentConfig("Hex", ((2,),), variants=("NetB",), runs=1, **FAST)
    rep = steering_sweep(cfg, [0.5])
    assert sorted(r.steering for r in rep.rows) == [0.0, 0.5, 1.0]
    assert {r.policy for r in rep.rows} == {"MB"}


def test_parallel_workers_match_serial():
    cfg = ExperimentConfig("Hex", ((3,),), runs=2, **FAST)
    from dataclasses import replace
    assert run_experiment(replace(cfg, workers=2)).rows == run_experiment(cfg).rows


def test_cli_simulate_and_sweep(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(CONFIG)
    out = io.StringIO()
    assert main(["simulate", str(cfg)], out=out) == 0
    lines = out.getvalue().splitlines()
    assert lines[0] == ",".join(REPORT_HEADER)
    assert any(line.startswith("Bootes4,NetB,\"(2,2)\",ISPA") for line in lines)
    csv_path = tmp_path / "sweep.csv"
    assert main(["sweep", str(cfg), "--steering", "0,1", "-o", str(csv_path)], out=io.StringIO()) == 0
    assert ExperimentReport.from_csv(csv_path.read_text().splitlines()).rows
    out = io.StringIO()
    assert main(["braess", str(cfg)], out=out) == 0
    assert "PARADOX" in out.getvalue()


def test_cli_analyze():
    out = io.StringIO()
    assert main(["analyze", "lb"], out=out) == 0
    text = out.getvalue()
    for value in ("0.618034", "0.380059", "0.548339", "0.370678", "holds"):
        assert value in text
    out = io.StringIO()
    main(["analyze", "hex-static"], out=out)
    assert "61" in out.getvalue() and "92 92 92" in out.getvalue()
    out = io.StringIO()
    main(["analyze", "two-router"], out=out)
    assert "8 each" in out.getvalue() and "(4 total)" in out.getvalue()


def test_cli_run_writes_trace_and_log(tmp_path):
    trace, log = tmp_path / "t.csv", tmp_path / "d.csv"
    out = io.StringIO()
    code = main(["run", "--family", "Hex", "--variant", "NetB", "--loads", "3", "--policy", "MB",
                 "--window", "10", "--warmup", "10", "--measure", "20", "--bootstrap", "5",
                 "--trace", str(trace), "--decision-log", str(log)], out=out)
    assert code == 0 and "mean=" in out.getvalue()
    assert trace.read_text().startswith("wave,router,dest,throughput,windowed_load,router_cost")
    assert log.read_text().startswith("wave,router,dest,policy,chosen,estimate")


def test_cli_run_network_file(tmp_path):
    from coinroute.topology import BenchmarkId, build_benchmark, dumps
    path = tmp_path / "net.txt"
    path.write_text(dumps(build_benchmark(BenchmarkId("Hex", "NetB"), 1)))
    out = io.StringIO()
    assert main(["run", "--network", str(path), "--window", "5", "--warmup", "5", "--measure", "10"], out=out) == 0
    assert "mean=31.0000" in out.getvalue()


def test_cli_error_exit(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[x]\nfamily = Nope\nregimes = 1\n")
    assert main(["simulate", str(bad)], out=io.StringIO()) == 2
