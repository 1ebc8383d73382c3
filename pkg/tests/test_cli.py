import csv
import hashlib
import io
import json

import pytest

from disaggplan.cli import FRONTIER_COLUMNS, main
from disaggplan.desk import shipped_text

SMALL = json.loads(shipped_text("llama70b_prefill_heavy"))
SMALL["traffic"] = {"kind": "static", "isl": 2048, "osl": 128}
SMALL["sla"] = {"ftl_cutoff": 10.0, "ttl_targets": [0.01, 0.02, 0.05]}
SMALL["search"] = {
    "tp_degrees": [4, 8],
    "pp_stages": [1],
    "cpp_chunk_sizes": [1024],
    "batch_sizes": [1, 16, 64],
    "max_gpus_per_replica": 8,
}
SMALL["analysis"] = {"interactivity_window": [10.0, 500.0], "rate_tolerance": 0.03}

MIX = json.loads(json.dumps(SMALL))
MIX["traffic"] = {"kind": "empirical", "samples": [{"isl": 1536, "osl": 96, "weight": 0.5}, {"isl": 2560, "osl": 160, "weight": 0.5}]}


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return str(p)


def run(*argv) -> int:
    return main([str(a) for a in argv])


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_plan_structure(cfg, tmp_path):
    out = tmp_path / "plan"
    assert run("plan", "--config", cfg, "--out", out) == 0
    rows = read_csv(out / "frontier.csv")
    assert list(rows[0]) == list(FRONTIER_COLUMNS)
    modes = {r["mode"] for r in rows}
    assert modes <= {"disagg", "colocated", "colocated-piggyback"} and "disagg" in modes
    svg = (out / "frontier.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "plan"
    listed = {o["file"]: o["sha256"] for o in manifest["outputs"]}
    assert set(listed) == {"frontier.csv", "frontier.svg"}
    for name, digest in listed.items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


def test_plan_row_count_matches_frontiers(cfg, tmp_path):
    from disaggplan.desk import build_plan
    from disaggplan.workload import load_document

    out = tmp_path / "plan"
    assert run("plan", "--config", cfg, "--out", out) == 0
    plan = build_plan(load_document(json.dumps(SMALL)))
    assert len(read_csv(out / "frontier.csv")) == len(plan.disagg) + len(plan.colocated)


def test_plan_deterministic(cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("plan", "--config", cfg, "--out", a) == 0
    assert run("plan", "--config", cfg, "--out", b) == 0
    assert outputs(a) == outputs(b)
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    assert ma == mb


def test_bundled_config_by_name(tmp_path):
    assert run("plan", "--config", "nonexistent_desk", "--out", tmp_path) == 2


def test_unsatisfiable_ttl_names_ttl(cfg, tmp_path, capsys):
    assert run("plan", "--config", cfg, "--out", tmp_path, "--ttl-targets", "1e-6") == 3
    assert "TTL" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    bad = json.loads(json.dumps(SMALL))
    bad["model"]["num_kv_heads"] = 0
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    assert run("plan", "--config", p, "--out", tmp_path / "o") == 2
    assert "num_kv_heads" in capsys.readouterr().err
    p.write_text("{")
    assert run("plan", "--config", p, "--out", tmp_path / "o") == 2


def test_usage_errors(cfg, tmp_path):
    assert run("plan") == 2
    assert run("sweep", "--config", cfg, "--out", tmp_path, "--sweep", "colour=red") == 2
    assert run("sweep", "--config", cfg, "--out", tmp_path, "--sweep", "traffic=") == 2
    assert run("--version") == 0


def test_traffic_sweep(cfg, tmp_path):
    out = tmp_path / "sweep"
    assert run("sweep", "--config", cfg, "--out", out, "--sweep", "traffic=2048:128,512:512,1024:256,256:1024") == 0
    rows = read_csv(out / "comparison.csv")
    cells = {r["traffic"] for r in rows}
    assert cells == {"2048:128", "512:512", "1024:256", "256:1024"}
    # one row per cell, mode and target
    assert len(rows) == 4 * 2 * 3
    assert (out / "comparison.svg").read_text().count("font-weight=\"bold\"") == 4


def test_ratio_sweep(cfg, tmp_path):
    out = tmp_path / "ratio"
    assert run("sweep", "--config", cfg, "--out", out, "--sweep", "ratio=0.5,3.5,optimal") == 0
    rows = read_csv(out / "comparison.csv")
    assert {r["ratio"] for r in rows} == {"0.5", "3.5", "optimal"}
    svg = (out / "comparison.svg").read_text()
    assert svg.count("<polyline") == 3
    short = tmp_path / "short"
    assert run("sweep", "--config", cfg, "--out", short, "--ratio", "0.5,3.5,optimal") == 0
    assert outputs(short) == outputs(out)
    assert run("sweep", "--config", cfg, "--out", short, "--ratio", "0.5", "--sweep", "ratio=1") == 2
    assert run("sweep", "--config", cfg, "--out", short) == 2


def test_compare(cfg, tmp_path):
    out = tmp_path / "cmp"
    assert run("compare", "--config", cfg, "--out", out) == 0
    rows = read_csv(out / "comparison.csv")
    assert len(rows) == 2 * 3
    assert all(r["winner"] in ("disagg", "colocated", "") for r in rows)


def test_bandwidth_verdict_flips(cfg, tmp_path):
    hi, lo = tmp_path / "hi", tmp_path / "lo"
    assert run("bandwidth", "--config", cfg, "--out", hi, "--kv-bw", "1e15") == 0
    assert run("bandwidth", "--config", cfg, "--out", lo, "--kv-bw", "1") == 0
    assert {r["verdict"] for r in read_csv(hi / "bandwidth.csv")} == {"sufficient"}
    assert {r["verdict"] for r in read_csv(lo / "bandwidth.csv")} == {"insufficient"}
    again = tmp_path / "again"
    assert run("bandwidth", "--config", cfg, "--out", again, "--kv-bw", "1") == 0
    assert outputs(lo) == outputs(again)
    assert run("bandwidth", "--config", cfg, "--out", again, "--kv-bw", "-1") == 2


@pytest.mark.parametrize("mode", ["colocated", "disagg"])
def test_simulate_seeded_deterministic(cfg, tmp_path, mode):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("simulate", "--config", cfg, "--out", a, "--mode", mode, "--seed", 3) == 0
    assert run("simulate", "--config", cfg, "--out", b, "--mode", mode, "--seed", 3) == 0
    assert outputs(a) == outputs(b)
    body = json.loads((a / "sim.json").read_text())
    assert body["mode"] == mode and body["seed"] == 3
    assert body["result"]["completed"] > 0


def test_simulate_one_request_trace(cfg, tmp_path):
    trace = tmp_path / "t.csv"
    trace.write_text("arrival_time,isl,osl\n0.25,2048,128\n")
    out = tmp_path / "sim"
    assert run("simulate", "--config", cfg, "--out", out, "--trace", trace) == 0
    (row,) = read_csv(out / "requests.csv")
    assert float(row["arrival"]) <= float(row["first_token_time"]) <= float(row["finish_time"])


def test_simulate_bad_trace_names_line(cfg, tmp_path, capsys):
    trace = tmp_path / "t.csv"
    trace.write_text("0,2048,128\n1,2048,128\n2,oops,128\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o", "--trace", trace) == 2
    assert "line 3" in capsys.readouterr().err


def test_simulate_dynamic_gap_report(tmp_path):
    p = tmp_path / "mix.json"
    p.write_text(json.dumps(MIX))
    out = tmp_path / "dyn"
    assert run("simulate", "--config", p, "--out", out, "--mode", "dynamic-colocated") == 0
    rows = read_csv(out / "gaps.csv")
    assert [float(r["ttl_target"]) for r in rows] == [0.01, 0.02, 0.05]
    body = json.loads((out / "sim.json").read_text())
    assert body["p50_isl"] == 2048 and body["reference"] == "analytic"
