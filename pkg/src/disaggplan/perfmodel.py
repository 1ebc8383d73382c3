"""Analytical roofline estimator for prefill, decode and co-located serving.

Cost of one forward pass through one pipeline stage, on the busiest GPU:

* compute = (GEMM flops + attention flops + MLA re-projection flops)
  / (flops_dense * compute_efficiency)
* memory = (weight bytes + KV bytes) / hbm_bandwidth
* communication: ring all-reduce moves ``2(n-1)/n`` of the message,
  all-to-all moves ``(n-1)/n``; both pay ``per_message_latency`` per step,
  with ``ceil(log2 n)`` steps per phase (two phases for all-reduce).

A stage pass costs ``max(compute, memory) + communication``. Phase latency is
evaluated from component totals with one rule everywhere::

    latency = max(gemm + attention + mla_reproject, weight_load + kv_load)
              + allreduce + alltoall + p2p + pp_bubble + stall

:func:`combine` implements that rule and every breakdown reproduces its
latency through it exactly.

Prefill with chunked pipelining runs ``n`` chunks through ``pp`` stages with
identical per-stage times per chunk (balanced stages), so the schedule is a
proportionate flow shop: ``sum(t_i) + (pp - 1) * max(t_i)``. The second term
is the ``pp_bubble`` component.

Decode splits the batch into ``pp`` micro-batches; a token traverses all
stages, so ``TTL = pp * stage_time(batch / pp)``. Context is evaluated at
``isl + osl / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .workload import (
    HardwareSpec,
    MappingError,
    ModelArch,
    ParallelismMapping,
    ShardKind,
)

COMPUTE_KEYS = ("gemm", "attention", "mla_reproject")
MEMORY_KEYS = ("weight_load", "kv_load")
ADDITIVE_KEYS = ("allreduce", "alltoall", "p2p", "pp_bubble", "stall")
COMPONENTS = COMPUTE_KEYS + MEMORY_KEYS + ADDITIVE_KEYS


class Phase(str, Enum):
    PREFILL = "prefill"
    DECODE = "decode"


def combine(breakdown: dict[str, float]) -> float:
    """Latency implied by a breakdown (see module docstring)."""
    compute = sum(breakdown.get(k, 0.0) for k in COMPUTE_KEYS)
    memory = sum(breakdown.get(k, 0.0) for k in MEMORY_KEYS)
    return max(compute, memory) + sum(breakdown.get(k, 0.0) for k in ADDITIVE_KEYS)


def _zero() -> dict[str, float]:
    return dict.fromkeys(COMPONENTS, 0.0)


def _scaled(b: dict[str, float], k: float) -> dict[str, float]:
    return {key: v * k for key, v in b.items()}


def _added(a: dict[str, float], b: dict[str, float]) -> dict[str, float]:
    return {key: a.get(key, 0.0) + b.get(key, 0.0) for key in COMPONENTS}


@dataclass(frozen=True)
class Work:
    """Aggregate token work of one pass, summed over the sequences in it.

    ``attn_pairs`` counts query/key pairs: a sequence with ``q`` new tokens
    after ``c`` cached ones contributes ``q * (c + q / 2)`` (causal).
    ``kv_tokens`` counts KV entries touched (``c + q`` per sequence).
    ``reproject`` counts cached tokens whose MLA latent is up-projected again.
    """

    seqs: float = 0.0
    tokens: float = 0.0
    attn_pairs: float = 0.0
    kv_tokens: float = 0.0
    emit: float = 0.0
    reproject: float = 0.0

    def __add__(self, other: "Work") -> "Work":
        return Work(
            self.seqs + other.seqs,
            self.tokens + other.tokens,
            self.attn_pairs + other.attn_pairs,
            self.kv_tokens + other.kv_tokens,
            self.emit + other.emit,
            self.reproject + other.reproject,
        )

    def scaled(self, k: float) -> "Work":
        return Work(*(k * v for v in (self.seqs, self.tokens, self.attn_pairs, self.kv_tokens, self.emit, self.reproject)))

    @classmethod
    def decode(cls, seqs: float, context_total: float) -> "Work":
        """One decode step for ``seqs`` sequences whose cached lengths sum to ``context_total``."""
        return cls(seqs, seqs, context_total + 0.5 * seqs, context_total + seqs, seqs)

    @classmethod
    def chunk(cls, seqs: float, new_tokens: float, cached: float, emit: bool = False, reproject: bool = False) -> "Work":
        """``reproject`` marks chunks that rebuild MLA K/V for cached tokens (piggybacking)."""
        q, c = new_tokens, cached
        return cls(
            seqs,
            seqs * q,
            seqs * q * (c + 0.5 * q),
            seqs * (c + q),
            seqs if emit else 0.0,
            seqs * c if reproject else 0.0,
        )


# --------------------------------------------------------------------------- #
# collectives
# --------------------------------------------------------------------------- #


def _steps(n: int) -> int:
    return math.ceil(math.log2(n)) if n > 1 else 0


def allreduce_time(message_bytes: float, n: int, bandwidth: float, latency: float) -> float:
    if n <= 1:
        return 0.0
    return 2 * (n - 1) / n * message_bytes / bandwidth + 2 * _steps(n) * latency


def alltoall_time(message_bytes: float, n: int, bandwidth: float, latency: float) -> float:
    if n <= 1:
        return 0.0
    return (n - 1) / n * message_bytes / bandwidth + _steps(n) * latency


# --------------------------------------------------------------------------- #
# per-GPU static quantities
# --------------------------------------------------------------------------- #


def kv_unique_width(model: ModelArch, mapping: ParallelismMapping) -> int:
    """GPUs of one attention replica that hold distinct KV (``min(tp, heads)``)."""
    return min(mapping.attn_tp, model.kv_shardable_heads)


def _layers_per_stage(model: ModelArch, mapping: ParallelismMapping) -> float:
    return model.num_layers / mapping.pp_stages


def _attn_share(seqs: float, replicas: int) -> float:
    """Fraction of the pass's attention work landing on the busiest replica."""
    if replicas <= 1 or seqs <= 0:
        return 1.0
    return min(1.0, math.ceil(seqs - 1e-9) / replicas / seqs)


def weight_bytes_per_gpu(model: ModelArch, mapping: ParallelismMapping) -> float:
    tp_a = mapping.attn_tp
    ffn = mapping.ffn
    if not model.ffn.is_moe:
        ffn_params = model.expert_params / ffn.degree
    elif ffn.kind is ShardKind.EP:
        ffn_params = model.ffn.num_experts / ffn.degree * model.expert_params + model.router_params_per_layer
    else:
        ffn_params = model.ffn_params_per_layer / ffn.degree
    per_layer = model.attn_params_per_layer / tp_a + ffn_params + model.norm_params_per_layer
    layers = _layers_per_stage(model, mapping)
    embed = model.embedding_params / (mapping.width * mapping.pp_stages)
    return (layers * per_layer + embed) * model.weight_bytes_per_param


def kv_bytes_per_gpu(model: ModelArch, mapping: ParallelismMapping, seqs: float, tokens_per_seq: float) -> float:
    share = _attn_share(seqs, mapping.attn_replicas)
    layers = _layers_per_stage(model, mapping)
    return seqs * share * tokens_per_seq * model.kv_bytes_per_token_per_layer * layers / kv_unique_width(model, mapping)


def mla_reuse_bytes_per_gpu(model: ModelArch, mapping: ParallelismMapping, cached_tokens: float) -> float:
    """HBM held by up-projected K/V of earlier chunks when MLA reuse is on."""
    if not model.is_mla:
        return 0.0
    per_token = 2 * model.num_q_heads * model.d_head * model.activation_bytes / mapping.attn_tp
    return cached_tokens * per_token * _layers_per_stage(model, mapping)


# --------------------------------------------------------------------------- #
# one stage pass
# --------------------------------------------------------------------------- #


def stage_pass(
    model: ModelArch,
    hw: HardwareSpec,
    mapping: ParallelismMapping,
    work: Work,
    *,
    mla_reuse: bool = False,
) -> dict[str, float]:
    """Component times of ``work`` through one pipeline stage on its busiest GPU."""
    out = _zero()
    w = mapping.width
    h = model.hidden_dim
    act = model.activation_bytes
    wb = model.weight_bytes_per_param
    flops = hw.effective_flops
    hbm = hw.hbm_bandwidth
    bw, lat = hw.nvlink_bw_per_gpu, hw.per_message_latency
    layers = _layers_per_stage(model, mapping)

    if work.tokens > 0:
        # attention --------------------------------------------------------------
        tp_a = mapping.attn_tp
        share = _attn_share(work.seqs, mapping.attn_replicas)
        tok_a = work.tokens * share
        gemm = 2 * model.attn_params_per_layer * tok_a / tp_a
        attn = 4 * model.num_q_heads * model.d_head * work.attn_pairs * share / tp_a
        weights = (model.attn_params_per_layer + model.norm_params_per_layer) * wb / tp_a
        kv = work.kv_tokens * share * model.kv_bytes_per_token_per_layer / kv_unique_width(model, mapping)
        reproject = 0.0
        if model.is_mla and work.reproject > 0:
            if mla_reuse:
                kv += work.reproject * share * 2 * model.num_q_heads * model.d_head * act / tp_a
            else:
                reproject = 2 * model.mla_up_params_per_layer * work.reproject * share / tp_a
        allreduce = allreduce_time(tok_a * h * act, tp_a, bw, lat)

        # FFN --------------------------------------------------------------------
        deg = mapping.ffn.degree
        tok_f = max(work.tokens / mapping.ffn_replicas, min(work.tokens, 1.0))
        alltoall = 0.0
        if not model.ffn.is_moe:
            gemm += 2 * model.expert_params * tok_f / deg
            weights += model.expert_params * wb / deg
            allreduce += allreduce_time(tok_f * h * act, deg, bw, lat)
        else:
            n_exp, k = model.ffn.num_experts, model.ffn.top_k
            touched = 1.0 - (1.0 - k / n_exp) ** tok_f
            gemm += 2 * model.router_params_per_layer * tok_f / deg
            gemm += 2 * k * model.expert_params * tok_f / deg
            if mapping.ffn.kind is ShardKind.EP:
                weights += (n_exp / deg) * touched * model.expert_params * wb
                weights += model.router_params_per_layer * wb
                a2a_bytes = 2 * (tok_f / deg) * k * h * act
                alltoall = 2 * alltoall_time(a2a_bytes / 2, deg, bw, lat)
            else:
                weights += (n_exp * touched * model.expert_params + model.router_params_per_layer) * wb / deg
                allreduce += allreduce_time(tok_f * h * act, deg, bw, lat)

        out["gemm"] += layers * gemm / flops
        out["attention"] += layers * attn / flops
        out["mla_reproject"] += layers * reproject / flops
        out["weight_load"] += layers * weights / hbm
        out["kv_load"] += layers * kv / hbm
        out["allreduce"] += layers * allreduce
        out["alltoall"] += layers * alltoall

        if mapping.pp_stages > 1:
            link = hw.nvlink_bw_per_gpu if mapping.gpus <= hw.nvlink_domain_size else hw.scaleout_bw_per_gpu
            send = work.tokens * h * act / w / link + lat
            out["p2p"] += send * (mapping.pp_stages - 1) / mapping.pp_stages

    if work.emit > 0:
        # LM head, vocab-parallel over the stage, spread evenly over stages
        head = model.vocab_size * h
        out["gemm"] += 2 * head * work.emit / w / mapping.pp_stages / flops
        out["weight_load"] += head * wb / w / mapping.pp_stages / hbm
    return out


# --------------------------------------------------------------------------- #
# phase estimates
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class PhasePerf:
    phase: Phase
    latency: float
    per_gpu_request_rate: float
    per_gpu_token_rate: float
    batch: int
    mapping: ParallelismMapping
    hbm_used: float
    breakdown: dict[str, float] = field(compare=False)
    feasible: bool = True
    isl: int = 0
    osl: int = 0

    @property
    def gpus(self) -> int:
        return self.mapping.gpus

    def sort_key(self) -> tuple:
        return (self.mapping.sort_key(), self.batch)

    def to_dict(self) -> dict:
        return {
            "phase": self.phase.value,
            "mapping": self.mapping.label,
            "gpus": self.gpus,
            "batch": self.batch,
            "latency": self.latency,
            "per_gpu_request_rate": self.per_gpu_request_rate,
            "per_gpu_token_rate": self.per_gpu_token_rate,
            "hbm_used": self.hbm_used,
            "feasible": self.feasible,
            "breakdown": dict(self.breakdown),
        }


def _check(model: ModelArch, hw: HardwareSpec, mapping: ParallelismMapping, batch: int) -> None:
    mapping.validate_for(model, hw)
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")


def prefill_breakdown(
    model: ModelArch,
    hw: HardwareSpec,
    mapping: ParallelismMapping,
    isls: tuple[int, ...],
) -> tuple[dict[str, float], float]:
    """Breakdown of prefilling ``isls`` together; returns (breakdown, max stage time).

    Sequences advance through chunks in lock-step; a chunk holds up to
    ``cpp_chunk_tokens`` tokens of every sequence that still has input left.
    """
    longest = max(isls)
    chunk = mapping.cpp_chunk_tokens or longest
    chunk = min(chunk, longest)
    total = _zero()
    worst = 0.0

    if len(set(isls)) == 1:
        # stage costs are affine in the cached length, so full chunks collapse
        # to their mean and the last full chunk is the slowest one
        seqs = len(isls)
        n_full, rem = divmod(longest, chunk)
        if n_full:
            mean = stage_pass(model, hw, mapping, Work.chunk(seqs, chunk, chunk * (n_full - 1) / 2))
            total = _added(total, _scaled(mean, n_full))
            last = stage_pass(model, hw, mapping, Work.chunk(seqs, chunk, chunk * (n_full - 1)))
            worst = combine(last)
        if rem:
            tail = stage_pass(model, hw, mapping, Work.chunk(seqs, rem, chunk * n_full))
            total = _added(total, tail)
            worst = max(worst, combine(tail))
    else:
        n_chunks = math.ceil(longest / chunk)
        for i in range(n_chunks):
            start = i * chunk
            work = Work()
            for isl in isls:
                if isl > start:
                    work = work + Work.chunk(1, min(chunk, isl - start), start)
            stage = stage_pass(model, hw, mapping, work)
            total = _added(total, stage)
            worst = max(worst, combine(stage))

    head = stage_pass(model, hw, mapping, Work(emit=len(isls)))
    total = _added(total, head)
    total["pp_bubble"] = (mapping.pp_stages - 1) * worst
    return total, worst


def estimate_prefill(
    model: ModelArch,
    hw: HardwareSpec,
    mapping: ParallelismMapping,
    batch: int,
    isl: int,
) -> PhasePerf:
    """FTL and per-GPU request rate of prefilling ``batch`` requests of ``isl`` tokens.

    Raises :class:`MappingError` for mappings the model cannot use. Exceeding
    HBM capacity is reported through ``feasible`` rather than raised.
    """
    _check(model, hw, mapping, batch)
    if isl < 1:
        raise ValueError("isl must be >= 1")
    breakdown, _ = prefill_breakdown(model, hw, mapping, (isl,) * batch)
    latency = combine(breakdown)
    hbm = weight_bytes_per_gpu(model, mapping) + kv_bytes_per_gpu(model, mapping, batch, isl)
    g = mapping.gpus
    return PhasePerf(
        phase=Phase.PREFILL,
        latency=latency,
        per_gpu_request_rate=batch / (latency * g),
        per_gpu_token_rate=batch * isl / (latency * g),
        batch=batch,
        mapping=mapping,
        hbm_used=hbm,
        breakdown=breakdown,
        feasible=hbm <= hw.hbm_capacity,
        isl=isl,
    )


def decode_breakdown(
    model: ModelArch,
    hw: HardwareSpec,
    mapping: ParallelismMapping,
    work: Work,
    *,
    mla_reuse: bool = False,
) -> dict[str, float]:
    """One iteration of ``work`` with the batch split into ``pp`` micro-batches."""
    pp = mapping.pp_stages
    stage = stage_pass(model, hw, mapping, work.scaled(1.0 / pp), mla_reuse=mla_reuse)
    return _scaled(stage, pp)


def iteration_time(
    model: ModelArch,
    hw: HardwareSpec,
    mapping: ParallelismMapping,
    work: Work,
    *,
    mla_reuse: bool = False,
) -> float:
    """Wall time of one serving iteration; the cost callback used by the simulator."""
    return combine(decode_breakdown(model, hw, mapping, work, mla_reuse=mla_reuse))


class DecodeStepCost:
    """:func:`iteration_time` of decode-only steps, memoized per batch size.

    For a fixed number of sequences every component is affine in the total
    cached context, so two evaluations per batch size suffice.
    """

    _PROBE = 1.0e6

    def __init__(self, model: ModelArch, hw: HardwareSpec, mapping: ParallelismMapping, *, mla_reuse: bool = False):
        self._args = (model, hw, mapping)
        self._mla_reuse = mla_reuse
        self._lines: dict[int, tuple[dict[str, float], dict[str, float]]] = {}

    def _line(self, seqs: int) -> tuple[dict[str, float], dict[str, float]]:
        line = self._lines.get(seqs)
        if line is None:
            at0 = decode_breakdown(*self._args, Work.decode(seqs, 0.0), mla_reuse=self._mla_reuse)
            at1 = decode_breakdown(*self._args, Work.decode(seqs, self._PROBE), mla_reuse=self._mla_reuse)
            line = (at0, {k: (at1[k] - at0[k]) / self._PROBE for k in at0})
            self._lines[seqs] = line
        return line

    def __call__(self, seqs: int, context_total: float) -> float:
        at0, slope = self._line(seqs)
        return combine({k: at0[k] + slope[k] * context_total for k in at0})


def estimate_decode(
    model: ModelArch,
    hw: HardwareSpec,
    mapping: ParallelismMapping,
    batch: int,
    isl: int,
    osl: int,
) -> PhasePerf:
    """Per-token latency (TTL) and per-GPU token rate of a decode instance."""
    _check(model, hw, mapping, batch)
    if osl < 2:
        raise ValueError("osl must be >= 2")
    if batch < mapping.pp_stages:
        raise MappingError(f"batch {batch} cannot fill {mapping.pp_stages} pipeline micro-batches")
    context = isl + osl / 2
    breakdown = decode_breakdown(model, hw, mapping, Work.decode(batch, batch * context))
    latency = combine(breakdown)
    hbm = weight_bytes_per_gpu(model, mapping) + kv_bytes_per_gpu(model, mapping, batch, isl + osl)
    token_rate = batch / (latency * mapping.gpus)
    return PhasePerf(
        phase=Phase.DECODE,
        latency=latency,
        per_gpu_request_rate=token_rate / (osl - 1),
        per_gpu_token_rate=token_rate,
        batch=batch,
        mapping=mapping,
        hbm_used=hbm,
        breakdown=breakdown,
        feasible=hbm <= hw.hbm_capacity,
        isl=isl,
        osl=osl,
    )


# --------------------------------------------------------------------------- #
# co-located serving
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ColocatedPoint:
    mapping: ParallelismMapping
    batch: int
    chunk_tokens: int | None
    ttl_effective: float
    ftl_effective: float
    per_gpu_token_rate: float
    piggybacked: bool
    hbm_used: float = 0.0
    feasible: bool = True
    breakdown: dict[str, float] = field(default_factory=dict, compare=False)
    isl: int = 0
    osl: int = 0
    mla_reuse: bool = False

    def __post_init__(self) -> None:
        if self.piggybacked != (self.chunk_tokens is not None):
            raise ValueError("piggybacked must be set exactly when chunk_tokens is present")

    @property
    def gpus(self) -> int:
        return self.mapping.gpus

    def sort_key(self) -> tuple:
        return (self.mapping.sort_key(), self.batch, self.chunk_tokens or 0)

    def to_dict(self) -> dict:
        return {
            "mapping": self.mapping.label,
            "gpus": self.gpus,
            "batch": self.batch,
            "chunk_tokens": self.chunk_tokens,
            "piggybacked": self.piggybacked,
            "ttl_effective": self.ttl_effective,
            "ftl_effective": self.ftl_effective,
            "per_gpu_token_rate": self.per_gpu_token_rate,
            "hbm_used": self.hbm_used,
            "feasible": self.feasible,
            "breakdown": dict(self.breakdown),
        }


def piggyback_steady_state(batch: int, chunk: int, isl: int, osl: int) -> tuple[float, int]:
    """Requests completed per iteration and chunks per request.

    Prefill capacity admits ``chunk / isl`` requests per iteration; slots cap
    the rate at ``batch / (osl - 1 + n_chunks)`` because each request holds
    its slot for its prefill chunks and its ``osl - 1`` decode steps.
    """
    n_chunks = math.ceil(isl / chunk)
    rate = min(chunk / isl, batch / (osl - 1 + n_chunks))
    return rate, n_chunks


def piggyback_work(batch: int, chunk: int, isl: int, osl: int) -> tuple[Work, float, int]:
    """Average per-iteration work in piggybacked steady state."""
    rate, n_chunks = piggyback_steady_state(batch, chunk, isl, osl)
    mix, decode = piggyback_mix(batch, chunk, isl, osl)
    prefill = Work()
    for weight, part in mix:
        prefill = prefill + part.scaled(weight)
    return decode + prefill, rate, n_chunks


def _chunks(chunk: int, isl: int) -> list[Work]:
    n_chunks = math.ceil(isl / chunk)
    out = []
    for i in range(n_chunks):
        start = i * chunk
        q = min(chunk, isl - start)
        out.append(Work.chunk(1, q, start, emit=i == n_chunks - 1, reproject=True))
    return out


def piggyback_mix(batch: int, chunk: int, isl: int, osl: int) -> tuple[list[tuple[float, Work]], Work]:
    """Iteration types of the piggybacked steady state and the decode work every iteration carries.

    When slots bind, at most one chunk rides along at a time, so a fraction
    ``rate`` of iterations carries each chunk of the prompt and the rest are
    decode-only (``Work()``). When prefill binds, every iteration is
    ``chunk`` prompt tokens that may straddle two requests, and the chunks
    are averaged into a single type.
    """
    rate, n_chunks = piggyback_steady_state(batch, chunk, isl, osl)
    decoding = rate * (osl - 1)
    decode = Work.decode(decoding, decoding * (isl + osl / 2))
    parts = _chunks(chunk, isl)
    if rate * n_chunks <= 1 + 1e-12:
        mix = [(rate, w) for w in parts]
        idle = 1.0 - rate * n_chunks
        if idle > 1e-12:
            mix.append((idle, Work()))
        return mix, decode
    avg = Work()
    for w in parts:
        avg = avg + w.scaled(rate)
    return [(1.0, avg)], decode


def estimate_colocated(
    model: ModelArch,
    hw: HardwareSpec,
    mapping: ParallelismMapping,
    batch: int,
    chunk_tokens: int | None,
    isl: int,
    osl: int,
    *,
    mla_reuse: bool = False,
) -> ColocatedPoint:
    """Steady-state operating point of one co-located instance.

    With ``chunk_tokens`` every iteration carries the decode tokens of the
    running requests plus up to ``chunk_tokens`` prefill tokens. Without it,
    whole prefills of the newly admitted requests stall decoding, one stall
    per admission group over a request lifetime of ``osl - 1`` decode steps.
    """
    _check(model, hw, mapping, batch)
    if osl < 2:
        raise ValueError("osl must be >= 2")
    plain = replace(mapping, cpp_chunk_tokens=None)
    g = mapping.gpus
    weights = weight_bytes_per_gpu(model, mapping)
    slots_kv = kv_bytes_per_gpu(model, mapping, batch, isl + osl)

    if chunk_tokens is not None:
        if chunk_tokens < 1:
            raise ValueError("chunk_tokens must be >= 1")
        chunk = min(chunk_tokens, isl)
        rate, n_chunks = piggyback_steady_state(batch, chunk, isl, osl)
        mix, decode = piggyback_mix(batch, chunk, isl, osl)
        # mean over iteration types of each type's roofline time; the breakdown
        # is the same weighted mean per component
        breakdown = _zero()
        t_iter = 0.0
        t_chunks = 0.0
        t_plain = 0.0
        for weight, part in mix:
            b = decode_breakdown(model, hw, plain, decode + part, mla_reuse=mla_reuse)
            t = combine(b)
            breakdown = _added(breakdown, _scaled(b, weight))
            t_iter += weight * t
            if part.tokens > 0:
                t_chunks += weight * t
            else:
                t_plain = t
        slot_bound = rate * n_chunks <= 1 + 1e-12
        ttl = t_iter
        if slot_bound:
            # a request's own chunks precede its first token, so its decode
            # steps carry only the other slots' chunks
            share = min(1.0, (batch - 1) * n_chunks / (osl - 1))
            ttl = (1 - share) * t_plain + share * t_chunks / (rate * n_chunks)
        hbm = weights + slots_kv
        if mla_reuse:
            hbm += mla_reuse_bytes_per_gpu(model, mapping, max(1.0, rate * n_chunks) * isl)
        return ColocatedPoint(
            mapping=mapping,
            batch=batch,
            chunk_tokens=chunk_tokens,
            ttl_effective=ttl,
            # iterations that carry one request's chunks
            ftl_effective=t_chunks / rate if slot_bound else n_chunks * t_iter,
            per_gpu_token_rate=rate * osl / (t_iter * g),
            piggybacked=True,
            hbm_used=hbm,
            feasible=hbm <= hw.hbm_capacity,
            breakdown=breakdown,
            isl=isl,
            osl=osl,
            mla_reuse=mla_reuse,
        )

    dec = estimate_decode(model, hw, plain, batch, isl, osl)
    # slots free up one request lifetime apart, so each stall prefills the
    # requests admitted since the last one; a request waits out every stall
    # of its lifetime except its own
    admitted = max(1, math.ceil(batch / (osl - 1)))
    first = estimate_prefill(model, hw, plain, admitted, isl)
    stalls = batch / admitted
    stall = (stalls - 1) * first.latency / (osl - 1)
    breakdown = dict(dec.breakdown)
    breakdown["stall"] = stall
    ttl = combine(breakdown)
    cycle = (osl - 1) * dec.latency + stalls * first.latency
    return ColocatedPoint(
        mapping=mapping,
        batch=batch,
        chunk_tokens=None,
        ttl_effective=ttl,
        ftl_effective=first.latency,
        per_gpu_token_rate=batch * osl / (cycle * g),
        piggybacked=False,
        hbm_used=dec.hbm_used,
        feasible=dec.feasible,
        breakdown=breakdown,
        isl=isl,
        osl=osl,
    )
