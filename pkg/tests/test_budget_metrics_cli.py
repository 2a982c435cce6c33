import json
from collections import Counter

import numpy as np
import pytest

from qmemsim import cli
from qmemsim.budget import ATOMS, TABLE_I, EfficiencyBudget, click_probability, end_to_end_efficiency
from qmemsim.controller import Instruction, Op, Outcome, Trace, queue_policy, write_sequence
from qmemsim.metrics import MetricsReport, compute_metrics
from qmemsim.scenarios import ConfigError, Scenario, config_hash, resolve_config, run_scenario


def test_table_one_product():
    assert end_to_end_efficiency(TABLE_I) == pytest.approx(0.0050, abs=0.0002)
    assert len(TABLE_I.entries) == 9


def test_budget_validation_and_replace():
    with pytest.raises(ValueError):
        EfficiencyBudget((("x", 0.0),))
    with pytest.raises(ValueError):
        end_to_end_efficiency(EfficiencyBudget(()))
    with pytest.raises(KeyError):
        TABLE_I.replace("nope", 0.5)
    doubled = TABLE_I.replace(ATOMS, 0.11)
    assert end_to_end_efficiency(doubled) == pytest.approx(2 * end_to_end_efficiency(TABLE_I))


def test_click_probability():
    eta = end_to_end_efficiency(TABLE_I)
    assert click_probability(0.055) == pytest.approx(1 - np.exp(-0.5 * eta))
    assert click_probability(0.055, n_bar=0.0) == 0.0


def recount(trace, threshold):
    """One-pass oracle written independently of compute_metrics."""
    ops = [(i.op.value, i.cell, i.forced, o.kind, o.fidelity, o.storage_time_us) for i, o in trace.records]
    writes = sum(op == "W" for op, *_ in ops)
    filling = np.cumsum([1 if op == "W" else -1 for op, *_ in ops])
    got = [r for r in ops if r[3] in ("retrieved", "forced_retrieved")]
    return {
        "n_writes": writes,
        "n_reads": len(ops) - writes,
        "forced": sum(r[2] for r in ops),
        "filling": filling.tolist(),
        "access": Counter(r[1] for r in ops),
        "storage": sorted(r[5] for r in got),
        "below": sum(r[4] < threshold for r in got),
    }


@pytest.mark.parametrize("kind,seed", [("raqm250", 1), ("raqm1000", 2), ("buffer", 3), ("stack_general", 4)])
def test_metrics_against_recount_oracle(kind, seed):
    res = run_scenario(Scenario(kind, seed, {"postselect": False}))
    rep = compute_metrics(res.trace, 0.9)
    ref = recount(res.trace, 0.9)
    assert (rep.n_writes, rep.n_reads, rep.n_forced) == (ref["n_writes"], ref["n_reads"], ref["forced"])
    assert rep.filling == ref["filling"]
    assert rep.access_counts == [ref["access"].get(c, 0) for c in range(1, 73)]
    assert sorted(rep.storage_times) == ref["storage"]
    assert len(rep.below_threshold) == ref["below"]
    assert rep.mean_access_all == pytest.approx(len(res.trace.records) / 72)
    assert rep.mean_access_visited >= rep.mean_access_all


def test_metrics_report_round_trip():
    rep = run_scenario(Scenario("raqm250", 5)).metrics
    core = {k: v for k, v in rep.items() if k not in ("seed", "config_hash", "kind")}
    again = MetricsReport.loads(MetricsReport.from_dict(core).dumps())
    assert again.to_dict() == core


def test_empty_trace_metrics():
    rep = compute_metrics(Trace())
    assert rep.n_instructions == 0 and rep.forced_fraction == 0.0


def test_below_threshold_listing():
    trace = Trace([(Instruction.write(0, 1, "H"), Outcome("stored", "H")),
                   (Instruction.read(1, 1), Outcome("retrieved", "H", 0.5, 2.0, 0.001))])
    rep = compute_metrics(trace, 2 / 3)
    assert rep.below_threshold == [{"slot": 1, "cell": 1, "pol": "H", "fidelity": 0.5}]
    assert rep.fidelity_by_pol == {"H": {"mean": 0.5, "std": 0.0, "n": 1}}


def test_config_resolution():
    assert resolve_config("raqm1000")["window_us"] == 500.0
    assert resolve_config("epr_reshuffle")["calibration"] == "careful"
    with pytest.raises(ConfigError):
        resolve_config("nope")
    with pytest.raises(ConfigError):
        resolve_config("raqm250", {"bogus": 1})
    with pytest.raises(ConfigError):
        resolve_config("raqm250", {"calibration": "sloppy"})
    a, b = resolve_config("raqm250"), resolve_config("raqm250", {"n_bar": 0.4})
    assert config_hash("raqm250", a) != config_hash("raqm250", b)


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("kind", ["raqm250", "stack72", "epr_reshuffle", "crosstalk_probe"])
def test_cli_run_is_byte_reproducible(tmp_path, kind, capsys):
    assert cli.main(["run", kind, "--seed", "3", "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", kind, "--seed", "3", "--out", str(tmp_path / "b")]) == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b
    assert {"trace.json", "metrics.json", "config.json"} <= set(a)
    assert any(k.startswith("plot/") for k in a)
    for name, blob in a.items():
        if name.startswith("plot/"):
            assert blob.startswith(b"# kind=" + kind.encode() + b" seed=3 config_hash=")


def test_cli_seed_changes_output(tmp_path):
    cli.main(["run", "raqm250", "--seed", "1", "--out", str(tmp_path / "a")])
    cli.main(["run", "raqm250", "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a/trace.json").read_bytes() != (tmp_path / "b/trace.json").read_bytes()


def test_cli_config_errors_exit_1(tmp_path, capsys):
    assert cli.main(["run", "nonsense", "--out", str(tmp_path / "x")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"physics": {"crosstalk_round_infidelity": 5}}))
    assert cli.main(["run", "raqm250", "--config", str(bad), "--out", str(tmp_path / "y")]) == 1
    bad.write_text("{not json")
    assert cli.main(["run", "raqm250", "--config", str(bad), "--out", str(tmp_path / "z")]) == 1
    assert cli.main(["sweep", "raqm250", "--seeds", "5..1", "--out", str(tmp_path / "s")]) == 1
    assert "config error" in capsys.readouterr().err


def test_cli_config_override_applies(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_ops": 40, "calibration": "ideal"}))
    assert cli.main(["run", "raqm250", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    m = json.loads((tmp_path / "r/metrics.json").read_text())
    assert m["n_instructions"] == 40


def test_cli_validate(tmp_path, capsys):
    good = tmp_path / "good.txt"
    write_sequence(good, queue_policy(10))
    assert cli.main(["validate", str(good)]) == 0
    bad = tmp_path / "bad.txt"
    bad.write_text("0 W 1 H\n1 R 1\n2 R 1\n")
    assert cli.main(["validate", str(bad)]) == 2
    assert "read_empty" in capsys.readouterr().out
    late = tmp_path / "late.txt"
    late.write_text("0 W 1 H\n300 R 1\n")
    assert cli.main(["validate", str(late)]) == 0
    assert cli.main(["validate", str(late), "--window", "500"]) == 2
    garbage = tmp_path / "garbage.txt"
    garbage.write_text("zero W one\n")
    assert cli.main(["validate", str(garbage)]) == 1
    assert cli.main(["validate", str(tmp_path / "missing.txt")]) == 1


def test_cli_metrics_reproduces_run(tmp_path, capsys):
    cli.main(["run", "raqm1000", "--seed", "4", "--out", str(tmp_path / "r")])
    assert cli.main(["metrics", str(tmp_path / "r/trace.json"), "--out", str(tmp_path / "m.json")]) == 0
    recomputed = json.loads((tmp_path / "m.json").read_text())
    stored = json.loads((tmp_path / "r/metrics.json").read_text())
    assert all(stored[k] == v for k, v in recomputed.items())
    (tmp_path / "broken.json").write_text("[]")
    assert cli.main(["metrics", str(tmp_path / "broken.json")]) == 1


def test_cli_sweep(tmp_path, capsys):
    out = tmp_path / "sw"
    assert cli.main(["sweep", "queue72", "--seeds", "1..4", "--out", str(out), "--keep-runs"]) == 0
    summary = json.loads((out / "sweep.json").read_text())
    assert summary["n_failed"] == 0 and summary["seeds"] == [1, 4]
    assert summary["aggregate"]["mean_storage_time"]["mean"] == 144.0
    assert len((out / "sweep.csv").read_text().splitlines()) == 5
    assert (out / "seed3" / "trace.json").exists()


def test_cli_sweep_parallel_matches_serial(tmp_path, capsys):
    cli.main(["sweep", "raqm250", "--seeds", "0..5", "--out", str(tmp_path / "s")])
    cli.main(["sweep", "raqm250", "--seeds", "0..5", "--out", str(tmp_path / "p"), "--jobs", "2"])
    assert (tmp_path / "s/sweep.csv").read_bytes() == (tmp_path / "p/sweep.csv").read_bytes()


def test_sequence_scenarios_report_no_violations():
    for kind in ("raqm250", "raqm1000", "queue72", "stack72", "buffer", "queue_general", "stack_general"):
        res = run_scenario(Scenario(kind, 11))
        assert res.ok, res.violations
        reads = [i for i, _ in res.trace.records if i.op is Op.READ]
        assert reads
