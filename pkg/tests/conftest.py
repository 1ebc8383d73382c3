from __future__ import annotations

import pytest

from disaggplan.workload import HardwareSpec, ModelArch, ParallelismMapping, dense, ep, gqa, mla, moe, tp

# filled by test_acceptance, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, what = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {what}")


def small_gqa(**kw) -> ModelArch:
    args = dict(
        name="tiny",
        num_layers=2,
        hidden_dim=1024,
        num_q_heads=16,
        d_head=64,
        num_kv_heads=4,
        attention=gqa(),
        ffn=dense(4096),
        vocab_size=32000,
        weight_bytes_per_param=2.0,
        activation_bytes=2.0,
        kv_element_bytes=2.0,
    )
    args.update(kw)
    return ModelArch(**args)


def llama70b() -> ModelArch:
    return ModelArch("70b", 80, 8192, 64, 128, 8, gqa(), dense(28672), 128256, 0.5, 2.0, 1.0)


def small_moe_mla() -> ModelArch:
    return ModelArch("tiny-moe", 4, 1024, 16, 64, 16, mla(128), moe(16, 2, 512), 32000, 1.0, 2.0, 1.0)


def desk_hw(**kw) -> HardwareSpec:
    args = dict(
        flops_dense=4.5e15,
        hbm_bandwidth=8e12,
        hbm_capacity=192e9,
        nvlink_domain_size=72,
        nvlink_bw_per_gpu=9e11,
        scaleout_bw_per_gpu=1e11,
        per_message_latency=1e-7,
        compute_efficiency=0.5,
    )
    args.update(kw)
    return HardwareSpec(**args)


def tp_map(n: int, pp: int = 1, chunk: int | None = None) -> ParallelismMapping:
    return ParallelismMapping(tp(n), tp(n), pp, chunk)


def ep_map(a: int, e: int, pp: int = 1, chunk: int | None = None) -> ParallelismMapping:
    return ParallelismMapping(tp(a), ep(e), pp, chunk)


@pytest.fixture
def hw() -> HardwareSpec:
    return desk_hw()
