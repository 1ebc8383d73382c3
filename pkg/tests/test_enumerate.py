import itertools

import pytest

from conftest import desk_hw, llama70b, small_gqa, small_moe_mla
from disaggplan.enumerate import EnumStats, SearchSpace, enumerate_colocated, enumerate_decode, enumerate_prefill, mappings
from disaggplan.perfmodel import estimate_decode
from disaggplan.workload import MappingError, ParallelismMapping, ShardKind, SlaSpec, dp, tp


def small_space(**kw) -> SearchSpace:
    args = dict(
        tp_degrees=(1, 2, 4, 8),
        ep_degrees=(2, 4, 8),
        pp_stages=(1, 2),
        cpp_chunk_sizes=(256, 512),
        batch_sizes=(1, 4, 16, 64),
        max_gpus_per_replica=16,
    )
    args.update(kw)
    return SearchSpace(**args)


def test_default_space_respects_domain_and_heads():
    m = small_gqa(num_q_heads=8, num_kv_heads=2)
    s = SearchSpace.default(m, desk_hw(nvlink_domain_size=4))
    assert s.tp_degrees == (1, 2, 4)
    assert s.ep_degrees == ()
    s = SearchSpace.default(small_moe_mla(), desk_hw())
    assert s.ep_degrees == (2, 4, 8, 16)


def test_from_dict_overlays_defaults():
    m, hw = llama70b(), desk_hw()
    s = SearchSpace.from_dict({"pp_stages": [1, 2], "tp_degrees": [4, 8]}, m, hw)
    assert s.pp_stages == (1, 2) and s.tp_degrees == (4, 8)
    assert s.batch_sizes == SearchSpace.default(m, hw).batch_sizes
    assert s.max_gpus_per_replica == 16
    with pytest.raises(ValueError):
        small_space(batch_sizes=())


def test_mappings_are_valid_and_sorted():
    m, hw = small_moe_mla(), desk_hw()
    space = small_space()
    maps = mappings(m, hw, space, (1, 2))
    assert maps == sorted(maps, key=ParallelismMapping.sort_key)
    assert len(set(maps)) == len(maps)
    for mp in maps:
        mp.validate_for(m, hw)
        assert mp.gpus <= space.max_gpus_per_replica
    kinds = {(mp.attn.kind, mp.ffn.kind) for mp in maps}
    assert (ShardKind.TP, ShardKind.EP) in kinds and (ShardKind.DP, ShardKind.EP) in kinds


def test_mappings_match_brute_force():
    m, hw = small_gqa(num_q_heads=4, num_kv_heads=2), desk_hw()
    space = small_space(tp_degrees=(1, 2, 4, 8))
    expected = set()
    attn = [tp(t) for t in space.tp_degrees] + [dp(t) for t in space.tp_degrees if t > 1]
    for a, f, pp in itertools.product(attn, [tp(t) for t in space.tp_degrees], (1, 2)):
        try:
            mp = ParallelismMapping(a, f, pp)
            mp.validate_for(m, hw)
        except MappingError:
            continue
        if mp.gpus <= space.max_gpus_per_replica:
            expected.add(mp)
    assert set(mappings(m, hw, space, (1, 2))) == expected


def test_prefill_enumeration_filters_and_counts():
    m, hw = llama70b(), desk_hw()
    sla = SlaSpec((0.01, 0.05), ftl_cutoff=0.5)
    stats = EnumStats()
    out = enumerate_prefill(m, hw, small_space(), sla, 4096, stats=stats)
    assert out
    assert all(p.feasible and p.latency <= 0.5 for p in out)
    rates = [p.per_gpu_request_rate for p in out]
    assert rates == sorted(rates, reverse=True)
    assert stats.emitted == len(out)
    assert stats.candidates == stats.emitted + stats.invalid_mapping + stats.infeasible_memory + stats.over_ftl
    assert stats.over_ftl > 0
    # chunked options only where a pipeline can overlap them
    assert all(p.mapping.cpp_chunk_tokens is None or p.mapping.pp_stages > 1 for p in out)


def test_decode_enumeration_drops_memory_overflow():
    m, hw = llama70b(), desk_hw(hbm_capacity=40e9)
    stats = EnumStats()
    space = small_space()
    out = enumerate_decode(m, hw, space, 8192, 1024, stats=stats)
    assert stats.infeasible_memory > 0
    assert all(p.feasible for p in out)
    for p in out:
        again = estimate_decode(m, hw, p.mapping, p.batch, 8192, 1024)
        assert again.latency == p.latency
    assert stats.candidates == stats.emitted + stats.invalid_mapping + stats.infeasible_memory


def test_colocated_enumeration_has_both_kinds():
    m, hw = llama70b(), desk_hw()
    out = enumerate_colocated(m, hw, small_space(), 2048, 256)
    kinds = {p.piggybacked for p in out}
    assert kinds == {True, False}
    assert not any(p.piggybacked for p in enumerate_colocated(m, hw, small_space(), 2048, 256, piggyback=False))


def test_parallel_evaluation_is_identical():
    m, hw = llama70b(), desk_hw()
    space = small_space(batch_sizes=tuple(2**k for k in range(11)))
    one = enumerate_colocated(m, hw, space, 2048, 256, workers=1)
    two = enumerate_colocated(m, hw, space, 2048, 256, workers=2)
    assert one == two
