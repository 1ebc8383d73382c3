import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import desk_hw, llama70b, tp_map
from disaggplan.enumerate import SearchSpace
from disaggplan.kvbw import egress_bw, sharding_width
from disaggplan.pareto import disagg_deployments
from disaggplan.perfmodel import DecodeStepCost, combine, estimate_colocated, prefill_breakdown
from disaggplan.simulate import (
    Request,
    TraceError,
    colocated_horizon,
    compare_dynamic_vs_p50,
    disagg_horizon,
    read_trace,
    requests_csv,
    requests_for,
    run_colocated,
    run_disagg,
    sample_traffic,
)
from disaggplan.workload import Empirical, SlaSpec, Static, kv_bytes_per_request

SLA = SlaSpec((0.01, 0.02, 0.05))
SPACE = SearchSpace((4, 8), (), (1,), (1024,), (1, 16, 64), 8)


# traffic ----------------------------------------------------------------------------


def test_sample_static():
    reqs = sample_traffic(Static(16384, 2048), 3, 0)
    assert [(r.isl, r.osl) for r in reqs] == [(16384, 2048)] * 3
    assert all(r.arrival_time == 0.0 for r in reqs)


def test_sample_deterministic_and_degenerate():
    mix = Empirical(((100, 10, 0.5), (200, 20, 0.5)))
    pairs = lambda rs: [(r.isl, r.osl, r.arrival_time) for r in rs]
    assert pairs(sample_traffic(mix, 50, 7)) == pairs(sample_traffic(mix, 50, 7))
    assert pairs(sample_traffic(mix, 50, 7)) != pairs(sample_traffic(mix, 50, 8))
    assert pairs(sample_traffic(Empirical(((100, 10, 1.0),)), 5, 3)) == pairs(sample_traffic(Static(100, 10), 5, 3))
    with pytest.raises(ValueError):
        sample_traffic(mix, 0, 0)


def test_sample_weights_and_poisson():
    mix = Empirical(((100, 10, 0.8), (200, 20, 0.2)))
    share = sum(r.isl == 100 for r in sample_traffic(mix, 5000, 1)) / 5000
    assert share == pytest.approx(0.8, abs=0.03)
    reqs = sample_traffic(Static(10, 10), 4000, 2, arrival_rate=50.0)
    gaps = [b.arrival_time - a.arrival_time for a, b in zip(reqs, reqs[1:])]
    assert statistics.mean(gaps) == pytest.approx(1 / 50, rel=0.05)


# co-located -------------------------------------------------------------------------


def test_single_request_no_contention():
    m, hw = llama70b(), desk_hw()
    pt = estimate_colocated(m, hw, tp_map(8), 1, None, 1024, 16)
    r = run_colocated(m, hw, pt, [Request(0, 0.0, 1024, 16)], 10.0, warmup=0.0, preload=False)
    (q,) = r.requests
    assert r.completed == 1
    assert q.ftl == pytest.approx(combine(prefill_breakdown(m, hw, tp_map(8), (1024,))[0]), rel=1e-12)
    step = DecodeStepCost(m, hw, tp_map(8))
    # decode step k reads the prompt plus the k tokens generated so far
    expected = sum(step(1, 1024 + k) for k in range(15)) / 15
    assert q.ttl == pytest.approx(expected, rel=1e-12)
    assert q.arrival_time <= q.first_token_time <= q.finish_time


def test_too_short_horizon_flags_no_completions():
    m, hw = llama70b(), desk_hw()
    pt = estimate_colocated(m, hw, tp_map(8), 1, None, 1024, 16)
    r = run_colocated(m, hw, pt, [Request(0, 0.0, 1024, 16)], 1e-4, warmup=0.0, preload=False)
    assert r.no_completions and r.to_dict()["no_completions"]


def small_colocated(chunk):
    m, hw = llama70b(), desk_hw()
    pt = estimate_colocated(m, hw, tp_map(8), 32, chunk, 2048, 128)
    h = colocated_horizon(pt)
    reqs = sample_traffic(Static(2048, 128), requests_for(pt.per_gpu_token_rate * pt.gpus / 128, h, 32), 5)
    return pt, run_colocated(m, hw, pt, reqs, h)


def test_colocated_is_deterministic():
    _, a = small_colocated(512)
    _, b = small_colocated(512)
    assert a.to_dict() == b.to_dict()
    assert requests_csv(a.requests) == requests_csv(b.requests)


@pytest.mark.parametrize("chunk", [None, 512])
def test_colocated_matches_analytical(chunk):
    pt, r = small_colocated(chunk)
    assert r.throughput_tokens_per_sec_per_gpu == pytest.approx(pt.per_gpu_token_rate, rel=0.15)
    assert r.p50_ttl == pytest.approx(pt.ttl_effective, rel=0.15)
    for q in r.requests:
        if q.first_token_time is not None:
            assert q.first_token_time >= q.arrival_time
        if q.done and not q.preloaded:
            assert q.finish_time >= q.first_token_time


def test_piggybacking_smooths_token_gaps():
    _, stall = small_colocated(None)
    _, piggy = small_colocated(512)
    assert piggy.token_gap_variance < stall.token_gap_variance


# disaggregated ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def deployment():
    m, hw = llama70b(), desk_hw()
    points = disagg_deployments(m, hw, SPACE, SLA, Static(2048, 128))
    # the largest decode batch keeps the run short and both pools busy
    return m, hw, max(points, key=lambda p: (p.decode.batch, -p.total_gpus))


def run_dep(m, hw, d, bw, seed=1):
    h = disagg_horizon(d, 128)
    rate = d.overall_tokens_per_sec_per_gpu * d.total_gpus / 128
    slots = d.decode.batch * d.num_decode_gpus // d.decode.mapping.gpus
    return run_disagg(m, hw, d, sample_traffic(Static(2048, 128), requests_for(rate, h, slots), seed), h, bw)


def need(m, d):
    return egress_bw(m, d.prefill.batch, 2048, d.ftl, sharding_width(d.prefill.mapping, m))


def test_disagg_overlapped_transfer_costs_at_most_one_layer(deployment):
    m, hw, d = deployment
    bw = need(m, d)
    r = run_dep(m, hw, d, bw)
    layer = d.prefill.batch * 2048 * m.kv_bytes_per_token_per_layer / (bw * sharding_width(d.prefill.mapping, m))
    assert d.ftl <= r.p50_ftl <= d.ftl + layer * (1 + 1e-9)
    assert r.throughput_tokens_per_sec_per_gpu == pytest.approx(d.overall_tokens_per_sec_per_gpu, rel=0.15)
    assert r.p50_ttl == pytest.approx(d.ttl, rel=0.15)


def test_disagg_tiny_bandwidth_pays_whole_transfer(deployment):
    m, hw, d = deployment
    bw = need(m, d) / 1000
    req = Request(0, 0.0, 2048, 128)
    r = run_disagg(m, hw, d, [req], 1e5, bw, warmup=0.0, preload=False)
    (q,) = r.requests
    transfer = kv_bytes_per_request(m, 2048) / (bw * sharding_width(d.prefill.mapping, m))
    # layers stream out during compute, so at most the prefill time is hidden
    assert transfer <= q.ftl <= transfer + d.ftl


def test_disagg_pools_equally_busy(deployment):
    m, hw, d = deployment
    r = run_dep(m, hw, d, need(m, d))
    u = r.utilization
    assert set(u) >= {"prefill", "decode"}
    # request flow is matched, so neither pool idles much more than the other
    assert abs(u["prefill"] - u["decode"]) <= 0.03 + d.flow_imbalance


def test_prefill_batch_wider_than_decode_pool_still_flows():
    m, hw = llama70b(), desk_hw()
    points = disagg_deployments(m, hw, SPACE, SLA, Static(2048, 128))
    narrow = [p for p in points if p.prefill.batch > p.decode.batch * p.num_decode_gpus // p.decode.mapping.gpus]
    assert narrow
    d = min(narrow, key=lambda p: p.total_gpus)
    r = run_dep(m, hw, d, need(m, d))
    assert r.completed > 0
    assert r.throughput_tokens_per_sec_per_gpu == pytest.approx(d.overall_tokens_per_sec_per_gpu, rel=0.15)


def test_disagg_deterministic_and_monotone(deployment):
    m, hw, d = deployment
    a, b = run_dep(m, hw, d, need(m, d)), run_dep(m, hw, d, need(m, d))
    assert a.to_dict() == b.to_dict()
    for q in a.requests:
        if q.done and not q.preloaded:
            assert q.arrival_time <= q.first_token_time <= q.decode_start_time <= q.finish_time


# P50 proxy --------------------------------------------------------------------------


def test_dynamic_comparison_degenerate_pattern_has_zero_gap():
    m, hw = llama70b(), desk_hw()
    disguised = Empirical(((2048, 128, 1.0),))
    cmp = compare_dynamic_vs_p50(m, hw, SPACE, SLA, disguised, 0, max_configs=4, reference="simulated")
    assert cmp.p50 == (2048, 128)
    assert [r.gap for r in cmp.rows] == [0.0] * len(SLA.ttl_targets)
    assert cmp.to_dict()["reference"] == "simulated"


def test_dynamic_comparison_rows_per_target():
    m, hw = llama70b(), desk_hw()
    mix = Empirical(((1536, 96, 0.5), (2560, 160, 0.5)))
    cmp = compare_dynamic_vs_p50(m, hw, SPACE, SLA, mix, 0, max_configs=4)
    assert [r.ttl_target for r in cmp.rows] == list(SLA.ttl_targets)
    assert cmp.median_gap < 0.2
    with pytest.raises(ValueError):
        compare_dynamic_vs_p50(m, hw, SPACE, SLA, mix, 0, mode="neither")


# traces -----------------------------------------------------------------------------


def test_read_trace():
    reqs = read_trace("arrival_time,isl,osl\n0.5,10,4\n0.0,20,2\n\n")
    assert [(r.arrival_time, r.isl, r.osl) for r in reqs] == [(0.0, 20, 2), (0.5, 10, 4)]


@pytest.mark.parametrize(
    "text, line",
    [("0,1\n", 1), ("0,10,4\n1,x,4\n", 2), ("0,10,4\n0,10,4\n-1,10,4\n", 3), ("0,0,4\n", 1), ("0,5,1\n", 1), ("nan,5,4\n", 1)],
)
def test_trace_errors_name_the_line(text, line):
    with pytest.raises(TraceError) as err:
        read_trace(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(0, 1e3), st.integers(1, 10**6), st.integers(2, 10**5)), min_size=1, max_size=20))
def test_trace_round_trip(rows):
    text = "".join(f"{a!r},{i},{o}\n" for a, i, o in rows)
    reqs = read_trace(text)
    assert sorted((r.arrival_time, r.isl, r.osl) for r in reqs) == sorted(rows)
    assert [r.arrival_time for r in reqs] == sorted(r.arrival_time for r in reqs)
