import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import desk_hw, ep_map, llama70b, small_moe_mla, tp_map
from disaggplan.perfmodel import (
    COMPONENTS,
    DecodeStepCost,
    Work,
    allreduce_time,
    alltoall_time,
    combine,
    estimate_colocated,
    estimate_decode,
    estimate_prefill,
    iteration_time,
    piggyback_mix,
    piggyback_steady_state,
    weight_bytes_per_gpu,
)
from disaggplan.workload import HardwareSpec, MappingError, ModelArch, dense, gqa


def unit_model() -> ModelArch:
    # 168 params per layer, 64-param LM head, 16 KV bytes per token per layer
    return ModelArch("unit", 1, 4, 1, 4, 1, gqa(), dense(8), 16, 2.0)


def test_combine_rule():
    b = dict.fromkeys(COMPONENTS, 0.0)
    b.update(gemm=1.0, attention=0.5, weight_load=2.0, kv_load=0.25, allreduce=0.1, stall=0.2)
    assert combine(b) == pytest.approx(2.25 + 0.3)
    b.update(gemm=5.0)
    assert combine(b) == pytest.approx(5.5 + 0.3)


def test_collective_formulas():
    assert allreduce_time(1e6, 1, 1e9, 1e-6) == 0.0
    assert allreduce_time(1e6, 8, 1e9, 1e-6) == pytest.approx(2 * 7 / 8 * 1e-3 + 6e-6)
    assert alltoall_time(1e6, 8, 1e9, 1e-6) == pytest.approx(7 / 8 * 1e-3 + 3e-6)
    assert alltoall_time(1e6, 5, 1e9, 0.0) == pytest.approx(4 / 5 * 1e-3)


def test_memory_bound_decode_by_hand():
    # weights 168*2 + head 64*2 = 464 B, KV (11 cached + 1 new) * 16 = 192 B
    hw = HardwareSpec(1e12, 1e3, 1e9, 8, 1e9, 1e9, 0.0, 1.0)
    d = estimate_decode(unit_model(), hw, tp_map(1), 1, 10, 2)
    assert d.latency == pytest.approx(0.656)
    assert d.breakdown["weight_load"] == pytest.approx(0.464)
    assert d.breakdown["kv_load"] == pytest.approx(0.192)
    assert d.per_gpu_token_rate == pytest.approx(1 / 0.656)


def test_compute_bound_prefill_by_hand():
    # 8 tokens * 2 * 160 GEMM params + causal attention 4 * 4 * 32 pairs + head 2 * 64
    hw = HardwareSpec(1e3, 1e15, 1e9, 8, 1e9, 1e9, 0.0, 1.0)
    p = estimate_prefill(unit_model(), hw, tp_map(1), 1, 8)
    assert p.latency == pytest.approx(3.2)
    assert p.breakdown["attention"] == pytest.approx(0.512)
    assert p.per_gpu_request_rate == pytest.approx(1 / 3.2)


MAPPINGS = [tp_map(1), tp_map(2), tp_map(4), tp_map(8), tp_map(4, 2), tp_map(2, 4, 512), tp_map(8, 1, 1024)]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(MAPPINGS), st.sampled_from([1, 4, 8, 32]), st.sampled_from([256, 1024, 4096]))
def test_breakdowns_reproduce_latency(mapping, batch, isl):
    m, hw = llama70b(), desk_hw()
    p = estimate_prefill(m, hw, mapping, batch, isl)
    assert combine(p.breakdown) == pytest.approx(p.latency, rel=1e-12)
    if batch >= mapping.pp_stages:
        d = estimate_decode(m, hw, mapping, batch, isl, 256)
        assert combine(d.breakdown) == pytest.approx(d.latency, rel=1e-12)
    for chunk in (None, 512):
        c = estimate_colocated(m, hw, tp_map(mapping.width), batch, chunk, isl, 256)
        assert set(c.breakdown) >= set(COMPONENTS) - {"stall"}
        if chunk is None:
            assert combine(c.breakdown) == pytest.approx(c.ttl_effective, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 256), st.floats(0, 1e7), st.sampled_from([tp_map(1), tp_map(8), tp_map(4, 2), ep_map(8, 16)]))
def test_step_cost_matches_iteration_time(n, ctx, mapping):
    m, hw = small_moe_mla(), desk_hw()
    if mapping.attn_tp > m.num_q_heads:
        return
    direct = iteration_time(m, hw, mapping, Work.decode(n, ctx))
    assert DecodeStepCost(m, hw, mapping)(n, ctx) == pytest.approx(direct, rel=1e-9)


def test_decode_interacts_with_batch():
    m, hw = llama70b(), desk_hw()
    lat = [estimate_decode(m, hw, tp_map(8), b, 4096, 512).latency for b in (1, 2, 8, 32, 128)]
    assert lat == sorted(lat)
    rate = [estimate_decode(m, hw, tp_map(8), b, 4096, 512).per_gpu_token_rate for b in (1, 2, 8, 32)]
    assert rate == sorted(rate)


def test_weights_split_by_tensor_parallel_degree():
    m = llama70b()
    w1 = weight_bytes_per_gpu(m, tp_map(1))
    # norms are replicated on every rank
    norms = m.num_layers * m.norm_params_per_layer * m.weight_bytes_per_param
    assert weight_bytes_per_gpu(m, tp_map(8)) == pytest.approx(w1 / 8 + norms * 7 / 8)
    assert weight_bytes_per_gpu(m, tp_map(4, 2)) == pytest.approx(w1 / 8 + norms * 3 / 8)


def test_allreduce_appears_only_with_tp():
    m, hw = llama70b(), desk_hw()
    assert estimate_decode(m, hw, tp_map(1), 8, 1024, 128).breakdown["allreduce"] == 0.0
    assert estimate_decode(m, hw, tp_map(8), 8, 1024, 128).breakdown["allreduce"] > 0.0


def test_tp_sweep_has_interior_optimum_with_costly_messages():
    # slow links make wide tensor parallelism lose to its own collectives
    m, hw = llama70b(), desk_hw(per_message_latency=2e-6)
    lat = {n: estimate_decode(m, hw, tp_map(n), 16, 1024, 128).latency for n in (1, 2, 4, 8, 16, 32, 64)}
    best = min(lat, key=lat.get)
    assert 1 < best < 64


def test_hbm_overflow_reported_not_raised():
    d = estimate_decode(llama70b(), desk_hw(hbm_capacity=1e9), tp_map(8), 8, 1024, 128)
    assert not d.feasible
    assert estimate_decode(llama70b(), desk_hw(), tp_map(8), 8, 1024, 128).feasible


def test_invalid_inputs():
    m, hw = llama70b(), desk_hw()
    with pytest.raises(MappingError):
        estimate_decode(m, hw, tp_map(4, 2), 1, 1024, 128)
    with pytest.raises(ValueError):
        estimate_decode(m, hw, tp_map(8), 8, 1024, 1)
    with pytest.raises(ValueError):
        estimate_prefill(m, hw, tp_map(8), 0, 1024)


def test_pipeline_bubble_only_with_stages():
    m, hw = llama70b(), desk_hw()
    assert estimate_prefill(m, hw, tp_map(8, 1, 1024), 1, 8192).breakdown["pp_bubble"] == 0.0
    assert estimate_prefill(m, hw, tp_map(8, 4, 1024), 1, 8192).breakdown["pp_bubble"] > 0.0


def test_chunking_without_pipeline_costs_time():
    m, hw = llama70b(), desk_hw()
    whole = estimate_prefill(m, hw, tp_map(8), 1, 8192).latency
    chunked = [estimate_prefill(m, hw, tp_map(8, 1, c), 1, 8192).latency for c in (4096, 1024, 256)]
    assert whole <= chunked[0] <= chunked[1] <= chunked[2]


def test_chunked_pipelining_cuts_long_prompt_latency():
    m, hw = llama70b(), desk_hw()
    base = estimate_prefill(m, hw, tp_map(8, 1, 2048), 1, 65536)
    staged = estimate_prefill(m, hw, tp_map(8, 4, 2048), 1, 65536)
    assert staged.latency < base.latency
    # four times the GPUs never buy more than four times the speed
    assert base.latency / staged.latency <= 4.0


# co-located --------------------------------------------------------------------------


def test_piggyback_steady_state_rates():
    rate, n = piggyback_steady_state(64, 512, 2048, 257)
    assert n == 4
    assert rate == pytest.approx(min(512 / 2048, 64 / 260))
    rate, n = piggyback_steady_state(4, 512, 1000, 100)
    assert (rate, n) == (pytest.approx(4 / 101), 2)


@given(st.integers(1, 512), st.sampled_from([128, 512, 2048]), st.integers(1, 8192), st.integers(2, 4096))
def test_piggyback_mix_weights(batch, chunk, isl, osl):
    rate, n = piggyback_steady_state(batch, chunk, isl, osl)
    mix, decode = piggyback_mix(batch, chunk, isl, osl)
    assert sum(w for w, _ in mix) == pytest.approx(1.0)
    prompt = sum(w * part.tokens for w, part in mix)
    assert prompt == pytest.approx(rate * isl)
    assert decode.seqs == pytest.approx(rate * (osl - 1))
    assert decode.seqs <= batch + 1e-9


def test_stall_model_by_recomputation():
    m, hw = llama70b(), desk_hw()
    b, isl, osl = 64, 4096, 33
    c = estimate_colocated(m, hw, tp_map(8), b, None, isl, osl)
    dec = estimate_decode(m, hw, tp_map(8), b, isl, osl)
    admitted = math.ceil(b / (osl - 1))
    first = estimate_prefill(m, hw, tp_map(8), admitted, isl)
    stalls = b / admitted
    assert c.ttl_effective == pytest.approx(dec.latency + (stalls - 1) * first.latency / (osl - 1))
    assert c.ftl_effective == pytest.approx(first.latency)
    cycle = (osl - 1) * dec.latency + stalls * first.latency
    assert c.per_gpu_token_rate == pytest.approx(b * osl / (cycle * 8))


def test_single_slot_has_no_stall():
    m, hw = llama70b(), desk_hw()
    c = estimate_colocated(m, hw, tp_map(8), 1, None, 1024, 128)
    assert c.breakdown["stall"] == 0.0
    c = estimate_colocated(m, hw, tp_map(8), 1, 512, 1024, 128)
    # the slot holds its own prompt for part of the cycle, so it decodes a little under one sequence
    assert c.ttl_effective == pytest.approx(estimate_decode(m, hw, tp_map(8), 1, 1024, 128).latency, rel=1e-3)


def test_piggybacking_smooths_token_latency():
    m, hw = llama70b(), desk_hw()
    stall = estimate_colocated(m, hw, tp_map(8), 64, None, 8192, 256)
    piggy = estimate_colocated(m, hw, tp_map(8), 64, 512, 8192, 256)
    assert piggy.ttl_effective < stall.ttl_effective


def test_mla_reuse_trades_compute_for_memory():
    m, hw = small_moe_mla(), desk_hw()
    mapping = ep_map(4, 4)
    plain = estimate_colocated(m, hw, mapping, 32, 256, 2048, 64)
    reuse = estimate_colocated(m, hw, mapping, 32, 256, 2048, 64, mla_reuse=True)
    assert plain.breakdown["mla_reproject"] > 0.0
    assert reuse.breakdown["mla_reproject"] == 0.0
    assert reuse.breakdown["kv_load"] > plain.breakdown["kv_load"]
    assert reuse.hbm_used > plain.hbm_used


def test_chunk_flag_consistency():
    m, hw = llama70b(), desk_hw()
    assert estimate_colocated(m, hw, tp_map(8), 8, 512, 1024, 64).piggybacked
    assert not estimate_colocated(m, hw, tp_map(8), 8, None, 1024, 64).piggybacked
    with pytest.raises(ValueError):
        estimate_colocated(m, hw, tp_map(8), 8, 0, 1024, 64)
