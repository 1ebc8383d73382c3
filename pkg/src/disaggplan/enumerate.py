"""Design-space enumeration with feasibility filtering."""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .perfmodel import (
    ColocatedPoint,
    PhasePerf,
    estimate_colocated,
    estimate_decode,
    estimate_prefill,
)
from .workload import (
    HardwareSpec,
    MappingError,
    ModelArch,
    ParallelismMapping,
    Shard,
    SlaSpec,
    dp,
    ep,
    tp,
)


def _pow2_upto(limit: int, start: int = 1) -> tuple[int, ...]:
    out, v = [], start
    while v <= limit:
        out.append(v)
        v *= 2
    return tuple(out)


@dataclass(frozen=True)
class SearchSpace:
    tp_degrees: tuple[int, ...]
    ep_degrees: tuple[int, ...]
    pp_stages: tuple[int, ...]
    cpp_chunk_sizes: tuple[int, ...]
    batch_sizes: tuple[int, ...]
    max_gpus_per_replica: int
    prefill_batch_sizes: tuple[int, ...] | None = None
    decode_pp_stages: tuple[int, ...] | None = None
    colocated_pp_stages: tuple[int, ...] | None = None
    dp_attention: bool = True

    def __post_init__(self) -> None:
        for name in ("tp_degrees", "pp_stages", "batch_sizes"):
            values = getattr(self, name)
            if not values:
                raise ValueError(f"{name} must be non-empty")
            if any(v < 1 for v in values):
                raise ValueError(f"{name} entries must be >= 1")
        for name in ("ep_degrees", "cpp_chunk_sizes"):
            if any(v < 1 for v in getattr(self, name)):
                raise ValueError(f"{name} entries must be >= 1")
        if self.max_gpus_per_replica < 1:
            raise ValueError("max_gpus_per_replica must be >= 1")

    # phase-specific views --------------------------------------------------------

    @property
    def prefill_batches(self) -> tuple[int, ...]:
        return self.prefill_batch_sizes or self.batch_sizes

    @property
    def decode_pp(self) -> tuple[int, ...]:
        return self.decode_pp_stages or (1,)

    @property
    def colocated_pp(self) -> tuple[int, ...]:
        return self.colocated_pp_stages or (1,)

    @classmethod
    def default(cls, model: ModelArch, hw: HardwareSpec) -> "SearchSpace":
        tps = _pow2_upto(min(hw.nvlink_domain_size, model.num_q_heads, 64))
        eps = _pow2_upto(min(hw.nvlink_domain_size, model.ffn.num_experts, 64), 2) if model.ffn.is_moe else ()
        pps = tuple(p for p in _pow2_upto(16) if p <= model.num_layers)
        width = max(tps + eps)
        return cls(
            tp_degrees=tps,
            ep_degrees=eps,
            pp_stages=pps,
            cpp_chunk_sizes=_pow2_upto(8192, 512),
            batch_sizes=_pow2_upto(1024),
            max_gpus_per_replica=width * max(pps),
        )

    @classmethod
    def from_dict(cls, d: dict, model: ModelArch, hw: HardwareSpec) -> "SearchSpace":
        """Overlay a ``search`` config section on the default space."""
        base = cls.default(model, hw)
        merged = {}
        for name in cls.__dataclass_fields__:
            if name in d:
                v = d[name]
                merged[name] = tuple(v) if isinstance(v, list) else v
            else:
                merged[name] = getattr(base, name)
        if "max_gpus_per_replica" not in d:
            width = max(merged["tp_degrees"] + tuple(merged["ep_degrees"]))
            pps = merged["pp_stages"] + (merged["decode_pp_stages"] or ()) + (merged["colocated_pp_stages"] or ())
            merged["max_gpus_per_replica"] = width * max(pps)
        return cls(**merged)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items() if v is not None}


@dataclass
class EnumStats:
    """Counters of one enumeration; ``emitted = candidates - every rejection``."""

    candidates: int = 0
    invalid_mapping: int = 0
    infeasible_memory: int = 0
    over_ftl: int = 0
    emitted: int = 0

    def merge(self, other: "EnumStats") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))


def _shards(model: ModelArch, space: SearchSpace) -> tuple[list[Shard], list[Shard]]:
    attn = [tp(t) for t in space.tp_degrees]
    if space.dp_attention:
        attn += [dp(d) for d in space.tp_degrees if d > 1]
    ffn = [tp(t) for t in space.tp_degrees]
    if model.ffn.is_moe:
        ffn += [ep(e) for e in space.ep_degrees]
    return attn, ffn


def mappings(
    model: ModelArch,
    hw: HardwareSpec,
    space: SearchSpace,
    pp_stages: Iterable[int],
    chunks: Callable[[int], Sequence[int | None]] = lambda pp: (None,),
    stats: EnumStats | None = None,
) -> list[ParallelismMapping]:
    """Valid mappings of the space, in canonical order.

    Shard pairs whose widths do not nest, or that exceed the replica budget,
    are not mappings at all and are skipped silently; pairs that form a
    mapping the model or hardware rejects count as ``invalid_mapping``.
    """
    attn, ffn = _shards(model, space)
    out = []
    for a, f, pp in itertools.product(attn, ffn, sorted(set(pp_stages))):
        hi, lo = max(a.degree, f.degree), min(a.degree, f.degree)
        if hi % lo or hi * pp > space.max_gpus_per_replica:
            continue
        for chunk in chunks(pp):
            m = ParallelismMapping(a, f, pp, chunk)
            try:
                m.validate_for(model, hw)
            except MappingError:
                if stats is not None:
                    stats.invalid_mapping += 1
                continue
            out.append(m)
    out.sort(key=ParallelismMapping.sort_key)
    return out


def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("DISAGGPLAN_WORKERS", "1") or 1)
    return max(1, workers)


def _evaluate(fn: Callable, tasks: list[tuple], workers: int | None) -> list:
    n = _workers(workers)
    if n == 1 or len(tasks) < 256:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, *zip(*tasks), chunksize=max(1, math.ceil(len(tasks) / (4 * n)))))


def _try(fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except MappingError:
        return None


def _prefill_task(model, hw, mapping, batch, isl):
    return _try(estimate_prefill, model, hw, mapping, batch, isl)


def _decode_task(model, hw, mapping, batch, isl, osl):
    return _try(estimate_decode, model, hw, mapping, batch, isl, osl)


def _colocated_task(model, hw, mapping, batch, chunk, isl, osl, mla_reuse):
    return _try(estimate_colocated, model, hw, mapping, batch, chunk, isl, osl, mla_reuse=mla_reuse)


def enumerate_prefill(
    model: ModelArch,
    hw: HardwareSpec,
    space: SearchSpace,
    sla: SlaSpec,
    isl: int,
    *,
    stats: EnumStats | None = None,
    workers: int | None = None,
) -> list[PhasePerf]:
    """Every feasible prefill (mapping, batch) with FTL within the cutoff, best rate first.

    Chunk sizes apply only to pipelined mappings; with one stage chunking has
    nothing to overlap with.
    """
    st = EnumStats()
    chunk_opts = lambda pp: (None,) + tuple(c for c in space.cpp_chunk_sizes if c < isl) if pp > 1 else (None,)
    maps = mappings(model, hw, space, space.pp_stages, chunk_opts, st)
    tasks = [(model, hw, m, b, isl) for m in maps for b in space.prefill_batches]
    st.candidates = len(tasks) + st.invalid_mapping
    out = []
    for perf in _evaluate(_prefill_task, tasks, workers):
        if perf is None:
            st.invalid_mapping += 1
        elif not perf.feasible:
            st.infeasible_memory += 1
        elif perf.latency > sla.ftl_cutoff:
            st.over_ftl += 1
        else:
            out.append(perf)
    out.sort(key=lambda p: (-p.per_gpu_request_rate, p.sort_key()))
    st.emitted = len(out)
    if stats is not None:
        stats.merge(st)
    return out


def enumerate_decode(
    model: ModelArch,
    hw: HardwareSpec,
    space: SearchSpace,
    isl: int,
    osl: int,
    *,
    stats: EnumStats | None = None,
    workers: int | None = None,
) -> list[PhasePerf]:
    """Every memory-feasible decode (mapping, batch), in canonical order."""
    st = EnumStats()
    maps = mappings(model, hw, space, space.decode_pp, stats=st)
    tasks = [(model, hw, m, b, isl, osl) for m in maps for b in space.batch_sizes]
    st.candidates = len(tasks) + st.invalid_mapping
    out = []
    for perf in _evaluate(_decode_task, tasks, workers):
        if perf is None:
            st.invalid_mapping += 1
        elif not perf.feasible:
            st.infeasible_memory += 1
        else:
            out.append(perf)
    out.sort(key=PhasePerf.sort_key)
    st.emitted = len(out)
    if stats is not None:
        stats.merge(st)
    return out


def enumerate_colocated(
    model: ModelArch,
    hw: HardwareSpec,
    space: SearchSpace,
    isl: int,
    osl: int,
    *,
    mla_reuse: bool = False,
    piggyback: bool = True,
    stats: EnumStats | None = None,
    workers: int | None = None,
) -> list[ColocatedPoint]:
    """Piggybacked and non-piggybacked co-located points, in canonical order."""
    st = EnumStats()
    maps = mappings(model, hw, space, space.colocated_pp, stats=st)
    chunks: tuple[int | None, ...] = (None,)
    if piggyback:
        chunks += tuple(sorted(set(space.cpp_chunk_sizes)))
    tasks = [(model, hw, m, b, c, isl, osl, mla_reuse) for m in maps for b in space.batch_sizes for c in chunks]
    st.candidates = len(tasks) + st.invalid_mapping
    out = []
    for point in _evaluate(_colocated_task, tasks, workers):
        if point is None:
            st.invalid_mapping += 1
        elif not point.feasible:
            st.infeasible_memory += 1
        else:
            out.append(point)
    out.sort(key=ColocatedPoint.sort_key)
    st.emitted = len(out)
    if stats is not None:
        stats.merge(st)
    return out
