"""Scenario runner: builds array, converters and source from a config and emits artifacts.

Every artifact carries the seed and a hash of the resolved configuration so a
run can be replayed bit for bit.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import controller as ctl
from .dlcz import SourceParams, catch_freeze_reshuffle_release, pair_fidelity_via_tomography
from .encoding import IDENTITY, ConverterBank, mean_converter_channel
from .memarray import MemoryArray, PhysicsParams
from .metrics import DEFAULT_THRESHOLD, compute_metrics
from .qstate import LABELS, fidelity_to_pure, polarization, polarization_to_density

SEQUENCE_KINDS = ("raqm250", "raqm1000", "queue72", "stack72", "buffer", "queue_general", "stack_general")
KINDS = SEQUENCE_KINDS + ("epr_reshuffle", "crosstalk_probe", "single_cell_fidelity")

DEFAULTS = {
    "physics": {},
    "physics_file": None,
    "calibration": "fast",
    "input_jitter": None,
    "postselect": True,
    "blind": False,
    "n_bar": 0.5,
    "threshold": DEFAULT_THRESHOLD,
    "window_us": None,
    "n_ops": None,
    "source": {},
    "release_order": [2, 4, 1, 3],
    "tomography_shots": 10_000,
    "buffer_receive_us": 356.0,
    "probe_cell": 34,
    "probe_rounds": 10,
    "probe_storage_us": 55.0,
    "single_cells": [1, 4, 20, 22, 34, 53],
    "single_times_us": [15.0, 100.0, 200.0, 300.0, 400.0, 500.0],
}

KIND_DEFAULTS = {
    "raqm250": {"n_ops": 250},
    "raqm1000": {"n_ops": 1000, "window_us": ctl.WINDOW_US},
    "epr_reshuffle": {"calibration": "careful"},
    "crosstalk_probe": {"calibration": "careful"},
    "single_cell_fidelity": {"calibration": "careful"},
}


class ConfigError(ValueError):
    pass


def resolve_config(kind: str, overrides: dict | None = None) -> dict:
    if kind not in KINDS:
        raise ConfigError(f"unknown scenario {kind!r}; expected one of {', '.join(KINDS)}")
    cfg = copy.deepcopy(DEFAULTS)
    cfg.update(copy.deepcopy(KIND_DEFAULTS.get(kind, {})))
    overrides = overrides or {}
    unknown = set(overrides) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(copy.deepcopy(overrides))
    if cfg["calibration"] not in ("fast", "careful", "ideal"):
        raise ConfigError(f"unknown calibration {cfg['calibration']!r}")
    return cfg


def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def config_hash(kind: str, cfg: dict) -> str:
    blob = json.dumps({"kind": kind, "config": cfg}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Scenario:
    kind: str
    seed: int = 0
    params: dict = field(default_factory=dict)
    threshold: float | None = None

    def config(self) -> dict:
        over = dict(self.params)
        if self.threshold is not None:
            over["threshold"] = self.threshold
        return resolve_config(self.kind, over)


@dataclass
class ScenarioResult:
    scenario: Scenario
    config: dict
    config_hash: str
    trace: ctl.Trace
    metrics: dict
    panels: dict  # panel name -> (header, rows)
    violations: list = field(default_factory=list)
    sequence: list | None = None

    @property
    def ok(self) -> bool:
        return not self.violations


def _physics(cfg):
    try:
        if cfg["physics_file"]:
            base = PhysicsParams.load(cfg["physics_file"]).to_dict()
        else:
            base = {}
        base.update(cfg["physics"])
        return PhysicsParams.from_dict(base)
    except (OSError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad physics parameters: {exc}") from exc


def _bank(cfg, rng):
    if cfg["calibration"] == "ideal":
        return ConverterBank.ideal()
    return ConverterBank.sample(cfg["calibration"], rng, input_jitter=cfg["input_jitter"])


def _source(cfg):
    try:
        return SourceParams(**cfg["source"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad source parameters: {exc}") from exc


def build_sequence(kind: str, cfg: dict, rng: np.random.Generator) -> list:
    n = ctl.N_CELLS
    if kind in ("raqm250", "raqm1000"):
        return ctl.generate_random_sequence(cfg["n_ops"], rng, window_us=cfg["window_us"])
    if kind == "queue72":
        return ctl.queue_policy(n, rng=rng)
    if kind == "stack72":
        return ctl.stack_policy(n, rng=rng)
    if kind == "buffer":
        receive = int(round(cfg["buffer_receive_us"] / ctl.SLOT_US))
        arrivals = ctl.random_arrivals(n, receive, rng)
        flush = [int(c) for c in rng.permutation(np.arange(1, n + 1))]
        return ctl.buffer_policy(arrivals, flush, rng=rng)
    if kind == "queue_general":
        return ctl.general_container_sequence("queue", n, rng)
    if kind == "stack_general":
        return ctl.general_container_sequence("stack", n, rng)
    raise ConfigError(f"{kind} is not a sequence scenario")


def check_trace_invariants(kind: str, seq, trace: ctl.Trace, metrics, window_us) -> list[str]:
    bad = [f"{v.kind} at slot {v.slot}: {v.message}" for v in ctl.validate_sequence(seq, window_us)]
    if metrics.filling and (min(metrics.filling) < 0 or max(metrics.filling) > ctl.N_CELLS):
        bad.append("filling number left [0, 72]")
    if metrics.n_writes - metrics.n_reads != metrics.final_filling:
        bad.append("writes - reads differs from final filling")
    if window_us is not None and metrics.max_storage_time > window_us:
        bad.append(f"storage time {metrics.max_storage_time} exceeds the {window_us} us window")
    reads = [i.cell for i, _ in trace.records if i.op is ctl.Op.READ]
    writes = [i.cell for i, _ in trace.records if i.op is ctl.Op.WRITE]
    if kind in ("queue72", "queue_general") and reads != writes:
        bad.append("queue output order differs from input order")
    if kind == "stack72" and reads != writes[::-1]:
        bad.append("stack output order is not reversed")
    return bad


def _sequence_panels(metrics, trace):
    thr = metrics.threshold
    fid_rows = [
        (i.slot, i.cell, o.pol, o.storage_time_us, o.fidelity, int(o.fidelity < thr))
        for i, o in trace.records if o.kind in ("retrieved", "forced_retrieved")
    ]
    return {
        "filling": (("instruction", "filling"), list(enumerate(metrics.filling))),
        "accesses": (("cell", "accesses"), [(c + 1, a) for c, a in enumerate(metrics.access_counts)]),
        "storage_hist": (("storage_us", "count"), [tuple(r) for r in metrics.storage_histogram]),
        "fidelities": (("slot", "cell", "pol", "storage_us", "fidelity", "below_threshold"), fid_rows),
        "fidelity_by_pol": (("pol", "mean", "std", "n"),
                            [(p, v["mean"], v["std"], v["n"]) for p, v in metrics.fidelity_by_pol.items()]),
    }


def _run_sequence_kind(sc, cfg, rng):
    params = _physics(cfg)
    bank = _bank(cfg, rng)
    seq = build_sequence(sc.kind, cfg, rng)
    array = MemoryArray(params, postselect=cfg["postselect"])
    trace = ctl.run_sequence(seq, array, bank, rng, blind=cfg["blind"], n_bar=cfg["n_bar"])
    metrics = compute_metrics(trace, cfg["threshold"])
    return seq, trace, metrics


def _run_epr(sc, cfg, rng):
    params = _physics(cfg)
    bank = _bank(cfg, rng)
    array = MemoryArray(params, postselect=cfg["postselect"])
    records = catch_freeze_reshuffle_release(cfg["release_order"], _source(cfg), array, bank, rng)
    rows, out = [], []
    for r in records:
        est = None
        if r.rho_final is not None and cfg["tomography_shots"]:
            est, _ = pair_fidelity_via_tomography(r, cfg["tomography_shots"], rng)
        d = r.to_dict()
        d["tomography_estimate"] = est
        out.append(d)
        rows.append((r.pair_id, r.herald_time, r.cell, r.write_slot, r.release_slot,
                     r.storage_time_us, r.fidelity, est))
    metrics = {
        "release_order": [r.pair_id for r in records],
        "pairs": out,
        "fidelity_by_pair": {str(d["pair_id"]): d["fidelity"] for d in out},
    }
    panels = {"epr_pairs": (("pair_id", "herald_us", "cell", "write_slot", "release_slot",
                             "storage_us", "fidelity", "tomography_estimate"), rows)}
    return metrics, panels


def probe_fidelity(array_params, bank, cell, pol, storage_us, rounds):
    """Shot-averaged fidelity of one stored qubit after ``rounds`` passes over its neighbors."""
    array = MemoryArray(array_params, postselect=True)
    rho = mean_converter_channel(polarization_to_density(pol), bank.input, IDENTITY)
    array.write(cell, rho, 0.0, None)
    for _ in range(rounds):
        for coord in sorted(array.geometry.neighbors(cell)):
            array.access_micro(coord)
    res = array.read(cell, storage_us, None)
    out = mean_converter_channel(res.rho, IDENTITY, bank.output(cell))
    return fidelity_to_pure(out, pol.ket)


def _run_crosstalk(sc, cfg, rng):
    params = _physics(cfg)
    bank = _bank(cfg, rng)
    cell, t = cfg["probe_cell"], cfg["probe_storage_us"]
    rounds = list(range(cfg["probe_rounds"] + 1))
    rows, avg = [], []
    for r in rounds:
        f = [probe_fidelity(params, bank, cell, polarization(p), t, r) for p in LABELS]
        avg.append(float(np.mean(f)))
        rows.append((r, avg[-1], *f))
    slope, intercept = np.polyfit(rounds, 100 * np.array(avg), 1)
    resid = 100 * np.array(avg) - (slope * np.array(rounds) + intercept)
    metrics = {"cell": cell, "storage_us": t, "rounds": rounds, "fidelity": avg,
               "slope_percent_per_round": float(slope), "max_linear_residual_percent": float(np.abs(resid).max())}
    panels = {"crosstalk": (("rounds", "fidelity_avg", *(f"fidelity_{p}" for p in LABELS)), rows)}
    return metrics, panels


def _run_single_cell(sc, cfg, rng):
    params = _physics(cfg)
    bank = _bank(cfg, rng)
    rows = []
    table: dict = {}
    for cell in cfg["single_cells"]:
        for t in cfg["single_times_us"]:
            f = [probe_fidelity(params, bank, cell, polarization(p), t, 0) for p in LABELS]
            table.setdefault(str(cell), {})[repr(float(t))] = {"by_pol": dict(zip(LABELS, f)), "mean": float(np.mean(f))}
            rows += [(cell, t, p, v) for p, v in zip(LABELS, f)]
    metrics = {"cells": table}
    panels = {"single_cell": (("cell", "storage_us", "pol", "fidelity"), rows)}
    return metrics, panels


def run_scenario(sc: Scenario, out_dir=None) -> ScenarioResult:
    """Execute one scenario; with ``out_dir`` set, write trace, metrics and panel files there."""
    cfg = sc.config()
    chash = config_hash(sc.kind, cfg)
    rng = np.random.default_rng(sc.seed)
    meta = {"kind": sc.kind, "seed": sc.seed, "config_hash": chash, "threshold": cfg["threshold"]}
    seq = None
    violations = []
    if sc.kind in SEQUENCE_KINDS:
        seq, trace, rep = _run_sequence_kind(sc, cfg, rng)
        trace.meta = meta
        violations = check_trace_invariants(sc.kind, seq, trace, rep, cfg["window_us"])
        if compute_metrics(ctl.Trace.loads(trace.dumps()), cfg["threshold"]) != rep:
            violations.append("metrics do not reproduce from the serialized trace")
        metrics = rep.to_dict()
        panels = _sequence_panels(rep, trace)
    else:
        trace = ctl.Trace(meta=meta)
        runner = {"epr_reshuffle": _run_epr, "crosstalk_probe": _run_crosstalk,
                  "single_cell_fidelity": _run_single_cell}[sc.kind]
        metrics, panels = runner(sc, cfg, rng)
        if sc.kind == "epr_reshuffle":
            trace.meta = dict(meta, epr=metrics["pairs"])
    metrics = dict(metrics, seed=sc.seed, config_hash=chash, kind=sc.kind)
    result = ScenarioResult(sc, cfg, chash, trace, metrics, panels, violations, seq)
    if out_dir is not None:
        write_artifacts(result, out_dir)
    return result


def panel_csv(header, rows, meta: dict) -> str:
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def write_artifacts(result: ScenarioResult, out_dir) -> Path:
    out = Path(out_dir)
    (out / "plot").mkdir(parents=True, exist_ok=True)
    meta = {"kind": result.scenario.kind, "seed": result.scenario.seed, "config_hash": result.config_hash}
    (out / "trace.json").write_text(result.trace.dumps())
    (out / "metrics.json").write_text(json.dumps(result.metrics, sort_keys=True, indent=1))
    (out / "config.json").write_text(json.dumps(dict(meta, config=result.config), sort_keys=True, indent=1, default=str))
    if result.sequence is not None:
        (out / "sequence.txt").write_text(
            "# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n" + ctl.format_sequence(result.sequence))
    for name, (header, rows) in result.panels.items():
        (out / "plot" / f"{name}.csv").write_text(panel_csv(header, rows, meta))
    if result.violations:
        (out / "violations.txt").write_text("\n".join(result.violations) + "\n")
    return out


SUMMARY_KEYS = ("forced_fraction", "mean_storage_time", "max_storage_time", "mean_fidelity",
                "mean_access_all", "mean_access_visited", "max_access", "final_filling", "n_retrieved")


def summarize(result: ScenarioResult) -> dict:
    """Flat per-run scalars for sweeps."""
    m = result.metrics
    row = {"seed": result.scenario.seed, "ok": result.ok}
    if result.scenario.kind in SEQUENCE_KINDS:
        row.update({k: m[k] for k in SUMMARY_KEYS})
        row["tail_mean_filling"] = float(np.mean(m["filling"][50:])) if len(m["filling"]) > 50 else 0.0
        row["n_below_threshold"] = len(m["below_threshold"])
        for p, v in m["fidelity_by_pol"].items():
            row[f"fidelity_{p}"] = v["mean"]
    elif result.scenario.kind == "epr_reshuffle":
        for d in m["pairs"]:
            row[f"fidelity_pair{d['pair_id']}"] = d["fidelity"]
            row[f"storage_pair{d['pair_id']}"] = d["storage_time_us"]
    elif result.scenario.kind == "crosstalk_probe":
        row["slope_percent_per_round"] = m["slope_percent_per_round"]
    else:
        for cell, times in m["cells"].items():
            for t, v in times.items():
                row[f"cell{cell}_t{t}"] = v["mean"]
    return row
