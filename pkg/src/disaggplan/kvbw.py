"""KV-cache transfer bandwidth between prefill and decode pools.

Egress (prefill side) must move a batch's KV within its FTL for transfer to
overlap prefill compute layer by layer. Ingress (decode side) has the whole
decode residency of a request, ``TTL * OSL``, to absorb it. Both are per
GPU that holds a distinct KV shard.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .ratematch import DeploymentPoint
from .workload import ModelArch, ParallelismMapping, ShardKind, TrafficPattern, p50_pow2


class Binding(str, enum.Enum):
    EGRESS = "egress"
    INGRESS = "ingress"


def _q(x) -> Fraction:
    # floats are read as the decimal they print as, so 0.01 s is exactly 1/100
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def _result(num: Fraction, den: Fraction) -> float:
    q = num / den
    return int(q) if q.denominator == 1 else float(q)


def egress_bw(model: ModelArch, batch_prefill: int, isl: int, ftl: float, num_prefill_gpus_sharding: float) -> float:
    """``layers * batch * isl * kv_bytes_per_token_per_layer / (ftl * gpus)`` in bytes/s."""
    for name, v in (("batch_prefill", batch_prefill), ("isl", isl)):
        if v < 1:
            raise ValueError(f"{name} must be >= 1")
    if not ftl > 0 or not num_prefill_gpus_sharding > 0:
        raise ZeroDivisionError("ftl and sharding GPU count must be positive")
    num = model.num_layers * batch_prefill * isl * _q(model.kv_bytes_per_token_per_layer)
    return _result(num, _q(ftl) * _q(num_prefill_gpus_sharding))


def ingress_bw(
    model: ModelArch,
    batch_decode: int,
    isl: int,
    ttl: float,
    osl: int,
    num_decode_gpus_sharding: float,
) -> float:
    """``layers * batch * isl * kv_bytes_per_token_per_layer / (ttl * osl * gpus)`` in bytes/s."""
    for name, v in (("batch_decode", batch_decode), ("isl", isl)):
        if v < 1:
            raise ValueError(f"{name} must be >= 1")
    if not ttl > 0 or not osl > 0 or not num_decode_gpus_sharding > 0:
        raise ZeroDivisionError("ttl, osl and sharding GPU count must be positive")
    num = model.num_layers * batch_decode * isl * _q(model.kv_bytes_per_token_per_layer)
    return _result(num, _q(ttl) * osl * _q(num_decode_gpus_sharding))


def duplication_factor(mapping: ParallelismMapping, model: ModelArch) -> float:
    """KV replication across tensor-parallel attention ranks: ``max(1, tp / kv heads)``.

    MLA has a single shardable latent, so the factor is the TP degree.
    Data-parallel attention replicates requests, not KV, and gets 1.
    """
    if mapping.attn.kind is ShardKind.DP:
        return 1.0
    return max(1.0, mapping.attn_tp / model.kv_shardable_heads)


def sharding_width(mapping: ParallelismMapping, model: ModelArch) -> float:
    """GPUs of one instance holding distinct KV."""
    return mapping.gpus / duplication_factor(mapping, model)


@dataclass(frozen=True)
class BandwidthReport:
    egress_per_gpu: float
    ingress_per_gpu: float
    binding: Binding
    duplication_factor: float
    prefill_duplication_factor: float
    ftl: float
    ttl: float
    isl: int
    osl: int
    batch_prefill: int
    batch_decode: int
    prefill_gpus: int
    decode_gpus: int
    provisioned: float

    @property
    def required(self) -> float:
        return max(self.egress_per_gpu, self.ingress_per_gpu)

    @property
    def sufficient(self) -> bool:
        return self.provisioned >= self.required

    @property
    def verdict(self) -> str:
        return "sufficient" if self.sufficient else "insufficient"


def report_for(point: DeploymentPoint, model: ModelArch, isl: int, osl: int, provisioned: float) -> BandwidthReport:
    pm, dm = point.prefill.mapping, point.decode.mapping
    eg = egress_bw(model, point.prefill.batch, isl, point.ftl, sharding_width(pm, model))
    # sized for full decode batches, an upper bound when prefill binds
    ig = ingress_bw(model, point.decode.batch, isl, point.decode.latency, osl, sharding_width(dm, model))
    return BandwidthReport(
        egress_per_gpu=eg,
        ingress_per_gpu=ig,
        binding=Binding.EGRESS if eg >= ig else Binding.INGRESS,
        duplication_factor=duplication_factor(dm, model),
        prefill_duplication_factor=duplication_factor(pm, model),
        ftl=point.ftl,
        ttl=point.decode.latency,
        isl=isl,
        osl=osl,
        batch_prefill=point.prefill.batch,
        batch_decode=point.decode.batch,
        prefill_gpus=point.num_prefill_gpus,
        decode_gpus=point.num_decode_gpus,
        provisioned=provisioned,
    )


def bandwidth_sweep(
    deployments: Sequence[DeploymentPoint],
    traffic: TrafficPattern,
    model: ModelArch,
    provisioned: float,
) -> list[BandwidthReport]:
    """One report per deployment, judged against ``provisioned`` bytes/s per GPU."""
    isl, osl = p50_pow2(traffic)
    return [report_for(p, model, isl, osl, provisioned) for p in deployments]


CSV_COLUMNS = (
    "ttl_target",
    "isl",
    "osl",
    "egress_Bps",
    "ingress_Bps",
    "binding",
    "duplication_factor",
    "provisioned_Bps",
    "verdict",
)


def report_row(r: BandwidthReport, ttl_target: float | str = "") -> dict:
    return {
        "ttl_target": ttl_target,
        "isl": r.isl,
        "osl": r.osl,
        "egress_Bps": r.egress_per_gpu,
        "ingress_Bps": r.ingress_per_gpu,
        "binding": r.binding.value,
        "duplication_factor": r.duplication_factor,
        "provisioned_Bps": r.provisioned,
        "verdict": r.verdict,
    }
