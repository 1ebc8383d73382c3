"""Discrete-event serving simulator, used as an oracle for the analytical model.

Granularity is one model iteration. Iteration cost comes from the same
roofline the planner uses (:func:`perfmodel.iteration_time`), so the
simulator checks scheduling and queueing, not a second cost model.

Arrivals are closed loop by default: a request arrives the moment capacity
frees for it. Runs start from a staggered steady state (slots preloaded with
requests at evenly spread decode progress); preloaded requests never count
toward latency statistics, and the first ``warmup`` fraction of the horizon
is excluded from every metric.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
import random
import statistics
from collections import deque
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Iterable, Sequence

from .enumerate import SearchSpace
from .pareto import (
    FrontierPoint,
    colocated_frontier_from,
    disagg_deployments,
    disagg_frontier_from,
    pareto_filter,
)
from .perfmodel import (
    ColocatedPoint,
    Work,
    combine,
    DecodeStepCost,
    iteration_time,
    piggyback_steady_state,
    prefill_breakdown,
)
from .enumerate import enumerate_colocated
from .kvbw import sharding_width
from .ratematch import DeploymentPoint
from .workload import (
    HardwareSpec,
    ModelArch,
    SlaSpec,
    Static,
    TrafficPattern,
    kv_bytes_per_request,
    p50_pow2,
)

__all__ = [
    "Request",
    "SimResult",
    "TraceError",
    "sample_traffic",
    "p50_pow2",
    "run_colocated",
    "run_disagg",
    "compare_dynamic_vs_p50",
    "read_trace",
    "requests_csv",
]


@dataclass
class Request:
    id: int
    arrival_time: float
    isl: int
    osl: int
    first_token_time: float | None = None
    finish_time: float | None = None
    decode_start_time: float | None = None
    preloaded: bool = False

    @property
    def done(self) -> bool:
        return self.finish_time is not None

    @property
    def ftl(self) -> float:
        return self.first_token_time - self.arrival_time

    @property
    def ttl(self) -> float:
        return (self.finish_time - self.first_token_time) / (self.osl - 1)


class TraceError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def sample_traffic(
    pattern: TrafficPattern,
    n: int,
    seed: int,
    *,
    arrival_rate: float | None = None,
) -> list[Request]:
    """``n`` requests drawn from ``pattern``.

    Without ``arrival_rate`` every arrival time is 0 and the simulator
    stamps it on admission (closed loop). With it, arrivals are Poisson.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    samples = pattern.samples
    if len(samples) == 1:
        picks = [samples[0]] * n
    else:
        picks = rng.choices(samples, weights=[w for _, _, w in samples], k=n)
    t = 0.0
    out = []
    for i, (isl, osl, _) in enumerate(picks):
        if arrival_rate is not None:
            t += rng.expovariate(arrival_rate)
        out.append(Request(i, t, isl, osl))
    return out


# --------------------------------------------------------------------------- #
# results
# --------------------------------------------------------------------------- #


@dataclass
class SimResult:
    throughput_tokens_per_sec_per_gpu: float
    p50_ftl: float
    p50_ttl: float
    requests: list[Request]
    events: dict[str, int]
    gpus: int
    window: tuple[float, float]
    tokens_in_window: int = 0
    completed: int = 0
    token_gap_mean: float = math.nan
    token_gap_variance: float = math.nan
    utilization: dict[str, float] = field(default_factory=dict)
    exhausted: bool = False

    @property
    def no_completions(self) -> bool:
        return self.completed == 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "throughput_tokens_per_sec_per_gpu": self.throughput_tokens_per_sec_per_gpu,
            "p50_ftl": self.p50_ftl,
            "p50_ttl": self.p50_ttl,
            "completed": self.completed,
            "no_completions": self.no_completions,
            "tokens_in_window": self.tokens_in_window,
            "gpus": self.gpus,
            "window": list(self.window),
            "token_gap_mean": self.token_gap_mean,
            "token_gap_variance": self.token_gap_variance,
            "utilization": dict(sorted(self.utilization.items())),
            "events": dict(sorted(self.events.items())),
            "exhausted": self.exhausted,
        }


class _Meter:
    """Window-restricted token and gap accounting."""

    def __init__(self, start: float, end: float):
        self.start, self.end = start, end
        self.tokens = 0
        self.gap_w = 0.0
        self.gap_sum = 0.0
        self.gap_sq = 0.0

    def inside(self, t: float) -> bool:
        return self.start <= t <= self.end

    def emit(self, t: float, tokens: int) -> None:
        if tokens and self.inside(t):
            self.tokens += tokens

    def gap(self, t: float, gap: float, weight: int) -> None:
        if weight and self.inside(t):
            self.gap_w += weight
            self.gap_sum += weight * gap
            self.gap_sq += weight * gap * gap

    def overlap(self, a: float, b: float) -> float:
        return max(0.0, min(b, self.end) - max(a, self.start))

    def gap_stats(self) -> tuple[float, float]:
        if not self.gap_w:
            return math.nan, math.nan
        mean = self.gap_sum / self.gap_w
        return mean, max(0.0, self.gap_sq / self.gap_w - mean * mean)


class _Events:
    """Time-ordered event queue that refuses to move the clock backwards."""

    def __init__(self, start: float = 0.0) -> None:
        self._heap: list = []
        self._seq = 0
        self.now = start
        self.counts: dict[str, int] = {}

    def push(self, t: float, kind: str, payload: Any = None) -> None:
        if t < self.now:
            raise RuntimeError(f"event {kind} scheduled in the past ({t} < {self.now})")
        heapq.heappush(self._heap, (t, self._seq, kind, payload))
        self._seq += 1

    def pop(self):
        t, _, kind, payload = heapq.heappop(self._heap)
        if t < self.now:
            raise RuntimeError("event queue went backwards")
        self.now = t
        self.counts[kind] = self.counts.get(kind, 0) + 1
        return t, kind, payload

    def __bool__(self) -> bool:
        return bool(self._heap)


def _medians(requests: Iterable[Request], start: float) -> tuple[list[Request], float, float]:
    done = [r for r in requests if r.done and not r.preloaded and r.finish_time >= start]
    if not done:
        return done, math.nan, math.nan
    return done, statistics.median(r.ftl for r in done), statistics.median(r.ttl for r in done)


# --------------------------------------------------------------------------- #
# decode slots shared by both modes
# --------------------------------------------------------------------------- #


class _DecodeSlots:
    """Requests in their decode phase, advanced one token per step.

    A request joining at step ``j0`` with ``g`` tokens already generated has
    ``isl + g - 1 + (k - j0)`` cached tokens at step ``k`` and leaves after
    step ``j0 + osl - g - 1``. Keeping ``sum(isl + g - 1 - j0)`` makes the
    context total of any step O(1).
    """

    def __init__(self) -> None:
        self.step = 0
        self.count = 0
        self.base_sum = 0
        self._heap: list = []

    def join(self, req: Request, generated: int = 1) -> None:
        last = self.step + req.osl - generated - 1
        base = req.isl + generated - 1 - self.step
        heapq.heappush(self._heap, (last, req.id, base, req))
        self.count += 1
        self.base_sum += base

    @property
    def context_total(self) -> int:
        return self.base_sum + self.count * self.step

    def work(self) -> Work:
        return Work.decode(self.count, self.context_total)

    def advance(self) -> list[Request]:
        """Finish one step; return requests whose last token it produced."""
        done = []
        while self._heap and self._heap[0][0] == self.step:
            _, _, base, req = heapq.heappop(self._heap)
            self.count -= 1
            self.base_sum -= base
            done.append(req)
        self.step += 1
        return done


def _spread(j: int, n: int, osl: int, offset: float = 0.0) -> int:
    """Tokens already generated by the ``j``-th of ``n`` preloaded requests."""
    return 1 + min(osl - 2, int((j + offset) * (osl - 1) / n))


class _Feed:
    """Closed-loop (or timed) request source."""

    def __init__(self, requests: Sequence[Request], open_loop: bool):
        self._q = deque(requests)
        self.open_loop = open_loop

    def ready(self, now: float) -> bool:
        return bool(self._q) and (not self.open_loop or self._q[0].arrival_time <= now)

    def take(self, now: float) -> Request:
        req = self._q.popleft()
        if not self.open_loop:
            req.arrival_time = now
        return req

    def next_arrival(self) -> float | None:
        return self._q[0].arrival_time if self._q and self.open_loop else None

    @property
    def empty(self) -> bool:
        return not self._q

    @property
    def pending(self) -> int:
        return len(self._q)


# --------------------------------------------------------------------------- #
# co-located
# --------------------------------------------------------------------------- #


def run_colocated(
    model: ModelArch,
    hw: HardwareSpec,
    point: ColocatedPoint,
    requests: Sequence[Request],
    horizon: float,
    *,
    warmup: float = 0.1,
    preload: bool = True,
    open_loop: bool = False,
) -> SimResult:
    """Simulate one co-located instance serving ``requests`` until ``horizon``.

    Free slots are filled at iteration boundaries. Piggybacked points feed up
    to ``chunk_tokens`` prefill tokens (FIFO over admitted requests) into
    every iteration; otherwise admitted requests are prefilled together in
    an iteration that stalls decoding.
    """
    mapping = replace(point.mapping, cpp_chunk_tokens=None)
    slots = point.batch
    meter = _Meter(warmup * horizon, horizon)
    ev = _Events()
    feed = _Feed(requests, open_loop)
    dec = _DecodeSlots()
    prefilling: deque[list] = deque()  # [request, tokens done]
    used = 0
    seen: list[Request] = []

    step_cost = DecodeStepCost(model, hw, mapping)

    @lru_cache(maxsize=4096)
    def prefill_cost(isls: tuple[int, ...]) -> float:
        return combine(prefill_breakdown(model, hw, mapping, isls)[0])

    if preload:
        n0 = slots
        if point.piggybacked:
            rate, _ = piggyback_steady_state(slots, min(point.chunk_tokens, point.isl or 1), point.isl or 1, point.osl or 2)
            n0 = min(slots, max(1, round(rate * ((point.osl or 2) - 1))))
        for j in range(n0):
            if not feed.ready(0.0):
                break
            req = feed.take(0.0)
            req.preloaded = True
            seen.append(req)
            dec.join(req, _spread(j, n0, req.osl))
            used += 1

    last_decode_end = 0.0
    ev.push(0.0, "boundary")
    while ev:
        now, kind, _ = ev.pop()
        if now >= horizon:
            break
        while used < slots and feed.ready(now):
            req = feed.take(now)
            seen.append(req)
            prefilling.append([req, 0])
            used += 1

        finished_prefill: list[Request] = []
        if point.piggybacked:
            if not prefilling and not dec.count:
                nxt = feed.next_arrival()
                if nxt is None:
                    break
                ev.push(max(nxt, now), "boundary")
                continue
            work = dec.work()
            budget = point.chunk_tokens
            for entry in prefilling:
                if budget <= 0:
                    break
                req, done = entry
                q = min(req.isl - done, budget)
                work = work + Work.chunk(1, q, done, emit=done + q == req.isl, reproject=True)
                entry[1] += q
                budget -= q
            while prefilling and prefilling[0][1] >= prefilling[0][0].isl:
                finished_prefill.append(prefilling.popleft()[0])
            cost = iteration_time(model, hw, mapping, work, mla_reuse=point.mla_reuse)
            stepping = dec.count
        elif prefilling:
            batch = [e[0] for e in prefilling]
            prefilling.clear()
            cost = prefill_cost(tuple(r.isl for r in batch))
            finished_prefill = batch
            stepping = 0
        elif dec.count:
            cost = step_cost(dec.count, dec.context_total)
            stepping = dec.count
        else:
            nxt = feed.next_arrival()
            if nxt is None:
                break
            ev.push(max(nxt, now), "boundary")
            continue

        end = now + cost
        ev.counts["iteration"] = ev.counts.get("iteration", 0) + 1
        if end > horizon:
            break
        if stepping:
            meter.emit(end, stepping)
            meter.gap(end, end - last_decode_end, stepping)
            last_decode_end = end
            for req in dec.advance():
                req.finish_time = end
                used -= 1
        for req in finished_prefill:
            req.first_token_time = end
            req.decode_start_time = end
            meter.emit(end, 1)
            if req.osl <= 1:
                req.finish_time = end
                used -= 1
            else:
                dec.join(req)
        if not stepping and not dec.count:
            last_decode_end = end
        ev.push(end, "boundary")

    done, p50_ftl, p50_ttl = _medians(seen, meter.start)
    span = meter.end - meter.start
    gap_mean, gap_var = meter.gap_stats()
    return SimResult(
        throughput_tokens_per_sec_per_gpu=meter.tokens / (span * point.gpus) if span > 0 else 0.0,
        p50_ftl=p50_ftl,
        p50_ttl=p50_ttl,
        requests=seen,
        events=dict(ev.counts),
        gpus=point.gpus,
        window=(meter.start, meter.end),
        tokens_in_window=meter.tokens,
        completed=len(done),
        token_gap_mean=gap_mean,
        token_gap_variance=gap_var,
        exhausted=feed.empty,
    )


# --------------------------------------------------------------------------- #
# disaggregated
# --------------------------------------------------------------------------- #


def kv_transfer_done(start: float, ftl: float, layers: int, layer_time: float, link_free: float = 0.0) -> float:
    """Arrival of the last layer's KV when layer ``l`` is ready at ``start + l * ftl / layers``.

    Layers go out one at a time over one link, each taking ``layer_time``.
    """
    overlap = max(start + l * ftl / layers + (layers - l + 1) * layer_time for l in (1, layers))
    # the max over l of an affine function of l sits at an endpoint
    return max(overlap, link_free + layers * layer_time)


class _PrefillInstance:
    def __init__(self, idx: int):
        self.idx = idx
        self.busy = False
        self.link_free = -math.inf
        self.busy_time = 0.0


class _DecodeInstance:
    def __init__(self, idx: int):
        self.idx = idx
        self.busy = False
        self.slots = _DecodeSlots()
        self.occupied = 0.0


def run_disagg(
    model: ModelArch,
    hw: HardwareSpec,
    deployment: DeploymentPoint,
    requests: Sequence[Request],
    horizon: float,
    kv_bw_per_gpu: float,
    *,
    warmup: float = 0.1,
    preload: bool = True,
    open_loop: bool = False,
) -> SimResult:
    """Simulate separate prefill and decode pools connected by KV transfer.

    Prefill instances take batches FIFO. A finished batch's KV streams out
    layer by layer while later layers still compute; a request's first token
    counts as delivered when its KV has arrived. Decode instances admit
    arrived requests into free slots at iteration boundaries. A prefill batch
    starts only once a decode slot is booked for each of its requests at the
    time their KV should land; bookings assume the analytical TTL, so a
    request waits between first and second token only when decode runs
    slower than planned.
    """
    pm, dm = deployment.prefill.mapping, deployment.decode.mapping
    n_pf = deployment.num_prefill_gpus // pm.gpus
    n_dec = deployment.num_decode_gpus // dm.gpus
    bp, bd = deployment.prefill.batch, deployment.decode.batch
    gpus = deployment.total_gpus
    link_bw = kv_bw_per_gpu * sharding_width(pm, model)
    tau = bp * kv_bytes_per_request(model, deployment.prefill.isl or 1) / model.num_layers / link_bw
    # time a freshly started batch takes to reach decode
    ahead = deployment.prefill.latency + tau
    # projected time each decode slot next frees up
    bookings: list[float] = []

    # with preloaded decode slots, prefill starts early enough that the first
    # hand-offs land as the first preloaded requests finish
    lead = 0.0
    if preload:
        lead = deployment.prefill.latency + tau
    meter = _Meter(warmup * horizon, horizon)
    ev = _Events(-lead)
    feed = _Feed(requests, open_loop)
    prefills = [_PrefillInstance(i) for i in range(n_pf)]
    decodes = [_DecodeInstance(i) for i in range(n_dec)]
    handoff: deque[Request] = deque()
    in_flight = 0
    blocked: list[_PrefillInstance] = []
    decode_tokens = 0
    seen: list[Request] = []

    step_cost = DecodeStepCost(model, hw, dm)

    @lru_cache(maxsize=4096)
    def prefill_cost(isls: tuple[int, ...]) -> float:
        return combine(prefill_breakdown(model, hw, pm, isls)[0])

    if preload:
        # a prefill-bound pool settles below full decode batches; start there
        n0 = min(bd, max(1, round(deployment.occupancy))) if deployment.occupancy else bd
        for inst in decodes:
            for j in range(n0):
                if not feed.ready(0.0):
                    break
                req = feed.take(0.0)
                req.preloaded = True
                seen.append(req)
                g = _spread(j, n0, req.osl, inst.idx / n_dec)
                inst.slots.join(req, g)
                req.decode_start_time = 0.0
                bookings.append((req.osl - g) * deployment.decode.latency)
    bookings.extend([-math.inf] * (n_dec * bd - len(bookings)))
    heapq.heapify(bookings)

    stagger = deployment.prefill.latency / max(1, n_pf)
    for inst in prefills:
        ev.push(inst.idx * stagger - lead, "prefill_try", inst)
    for inst in decodes:
        ev.push(0.0, "decode_boundary", inst)

    def book(now: float, want: int) -> list[float] | None:
        """Slot free times for ``want`` requests landing at ``now + ahead``, or None."""
        land = now + ahead
        taken = []
        while len(taken) < want and bookings and bookings[0] <= land:
            taken.append(heapq.heappop(bookings))
        if len(taken) < want:
            for t in taken:
                heapq.heappush(bookings, t)
            return None
        return taken

    def want() -> int:
        # a batch wider than the whole decode pool could never be booked in full
        return min(bp, n_dec * bd, max(1, feed.pending))

    def try_prefill(inst: _PrefillInstance, now: float) -> None:
        nonlocal in_flight
        if inst.busy:
            return
        if not feed.ready(now):
            nxt = feed.next_arrival()
            if nxt is not None:
                ev.push(max(nxt, now), "prefill_try", inst)
            return
        slots = book(now, want())
        if slots is None:
            if inst not in blocked:
                blocked.append(inst)
            return
        if inst in blocked:
            blocked.remove(inst)
        batch = []
        while len(batch) < len(slots) and feed.ready(now):
            req = feed.take(now)
            seen.append(req)
            batch.append(req)
        for req, free in zip(batch, slots):
            heapq.heappush(bookings, max(free, now + ahead) + (req.osl - 1) * deployment.decode.latency)
        for free in slots[len(batch):]:
            heapq.heappush(bookings, free)
        cost = prefill_cost(tuple(r.isl for r in batch))
        payload = sum(kv_bytes_per_request(model, r.isl) for r in batch)
        layer_time = payload / model.num_layers / link_bw
        arrive = kv_transfer_done(now, cost, model.num_layers, layer_time, inst.link_free)
        inst.link_free = arrive
        inst.busy = True
        inst.busy_time += meter.overlap(now, now + cost)
        in_flight += len(batch)
        ev.push(now + cost, "prefill_done", inst)
        ev.push(arrive, "kv_arrival", batch)

    def kick_decodes(now: float) -> None:
        for inst in decodes:
            if not inst.busy:
                ev.push(now, "decode_boundary", inst)

    while ev:
        now, kind, payload = ev.pop()
        if now >= horizon:
            break
        if kind == "prefill_try":
            try_prefill(payload, now)
        elif kind == "prefill_done":
            payload.busy = False
            try_prefill(payload, now)
        elif kind == "kv_arrival":
            for req in payload:
                req.first_token_time = now
                meter.emit(now, 1)
                handoff.append(req)
            in_flight -= len(payload)
            kick_decodes(now)
        elif kind == "decode_boundary":
            inst = payload
            if inst.busy:
                continue
            slots = inst.slots
            while slots.count < bd and handoff:
                req = handoff.popleft()
                req.decode_start_time = now
                slots.join(req)
            if not slots.count:
                continue
            cost = step_cost(slots.count, slots.context_total)
            inst.busy = True
            inst.occupied += slots.count * meter.overlap(now, now + cost)
            ev.push(now + cost, "decode_done", (inst, slots.count))
        elif kind == "decode_done":
            inst, stepping = payload
            inst.busy = False
            meter.emit(now, stepping)
            if meter.inside(now):
                decode_tokens += stepping
            for req in inst.slots.advance():
                req.finish_time = now
            ev.push(now, "decode_boundary", inst)
            if blocked and bookings and bookings[0] <= now + ahead:
                for p in blocked[:]:
                    try_prefill(p, now)
                    if p in blocked:
                        break

    done, p50_ftl, p50_ttl = _medians(seen, meter.start)
    span = meter.end - meter.start
    util = {}
    if span > 0:
        # prefill: busy fraction; decode: tokens served against full-batch capacity
        util["prefill"] = sum(p.busy_time for p in prefills) / (span * n_pf)
        util["decode"] = decode_tokens / (span * deployment.num_decode_gpus * deployment.decode.per_gpu_token_rate)
        util["decode_slots"] = sum(d.occupied for d in decodes) / (span * n_dec * bd)
    return SimResult(
        throughput_tokens_per_sec_per_gpu=meter.tokens / (span * gpus) if span > 0 else 0.0,
        p50_ftl=p50_ftl,
        p50_ttl=p50_ttl,
        requests=seen,
        events=dict(ev.counts),
        gpus=gpus,
        window=(meter.start, meter.end),
        tokens_in_window=meter.tokens,
        completed=len(done),
        utilization=util,
        exhausted=feed.empty,
    )


# --------------------------------------------------------------------------- #
# horizons and the P50 proxy comparison
# --------------------------------------------------------------------------- #


def colocated_horizon(point: ColocatedPoint, lifetimes: float = 3.0) -> float:
    """Horizon covering ``lifetimes`` request lifetimes at the analytical rates.

    Small batches finish few requests per lifetime, so the horizon also
    spans at least 20 completions per slot count of one.
    """
    life = point.ftl_effective + (point.osl - 1) * point.ttl_effective
    return life * max(lifetimes, 20.0 / point.batch)


def disagg_horizon(point: DeploymentPoint, osl: int, lifetimes: float = 3.0) -> float:
    """Horizon covering ``lifetimes`` request lifetimes and at least 20 prefill batches."""
    return max(lifetimes * (point.ftl + (osl - 1) * point.ttl), 20 * point.ftl)


def requests_for(gpus_rate: float, horizon: float, slots: int) -> int:
    """Generous closed-loop request count for a run at ``gpus_rate`` requests/s."""
    return int(2 * gpus_rate * horizon) + 2 * slots + 16


@dataclass
class GapRow:
    ttl_target: float
    static_throughput: float
    dynamic_throughput: float
    gap: float
    static_ttl: float = math.nan
    dynamic_ttl: float = math.nan

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class DynamicComparison:
    mode: str
    reference: str
    p50: tuple[int, int]
    rows: list[GapRow]
    static_frontier: list[tuple[float, float]]
    dynamic_frontier: list[tuple[float, float]]

    @property
    def median_gap(self) -> float:
        gaps = [r.gap for r in self.rows if not math.isnan(r.gap)]
        return statistics.median(gaps) if gaps else math.nan

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "reference": self.reference,
            "p50_isl": self.p50[0],
            "p50_osl": self.p50[1],
            "median_gap": self.median_gap,
            "rows": [r.to_dict() for r in self.rows],
            "static_frontier": [list(p) for p in self.static_frontier],
            "dynamic_frontier": [list(p) for p in self.dynamic_frontier],
        }


def _gap_rows(static, dynamic, targets: Sequence[float]) -> list[GapRow]:
    rows = []
    for t in targets:
        s, d = static.best_within(t), dynamic.best_within(t)
        if s is None:
            rows.append(GapRow(t, 0.0, d.per_gpu_throughput if d else 0.0, math.nan))
            continue
        dv = d.per_gpu_throughput if d else 0.0
        rows.append(
            GapRow(
                t,
                s.per_gpu_throughput,
                dv,
                abs(dv - s.per_gpu_throughput) / s.per_gpu_throughput,
                s.ttl,
                d.ttl if d else math.nan,
            )
        )
    return rows


def compare_dynamic_vs_p50(
    model: ModelArch,
    hw: HardwareSpec,
    space: SearchSpace,
    sla: SlaSpec,
    pattern: TrafficPattern,
    seed: int,
    *,
    mode: str = "colocated",
    kv_bw_per_gpu: float | None = None,
    lifetimes: float = 3.0,
    max_configs: int = 24,
    reference: str = "analytic",
) -> DynamicComparison:
    """Frontier from simulating ``pattern`` directly vs the P50 power-of-two shortcut.

    Configurations come from the shortcut's frontier. Each is simulated on a
    trace sampled from ``pattern``; its measured (1 / P50 TTL, throughput)
    forms the dynamic frontier. Gap per TTL target is the relative
    difference of the best throughput meeting that target.

    ``reference="analytic"`` compares against the shortcut's analytical
    frontier. ``"simulated"`` instead runs the same configurations on a
    P50 trace with the same seeds, which cancels simulator-vs-model error
    and leaves only the cost of the P50 approximation.
    """
    if reference not in ("analytic", "simulated"):
        raise ValueError(f"unknown reference {reference!r}")
    isl, osl = p50_pow2(pattern)
    static_traffic = Static(isl, osl)
    if mode == "colocated":
        pts = enumerate_colocated(model, hw, space, isl, osl)
        static = colocated_frontier_from(pts, sla)
    elif mode == "disagg":
        static = disagg_frontier_from(disagg_deployments(model, hw, space, sla, static_traffic), sla)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    chosen = list(static.points)
    if len(chosen) > max_configs:
        step = (len(chosen) - 1) / (max_configs - 1)
        chosen = [chosen[round(i * step)] for i in range(max_configs)]

    def simulate(cfg, traffic: TrafficPattern, k: int) -> FrontierPoint | None:
        if mode == "colocated":
            horizon = colocated_horizon(cfg, lifetimes)
            n = requests_for(cfg.per_gpu_token_rate * cfg.gpus / cfg.osl, horizon, cfg.batch)
            res = run_colocated(model, hw, cfg, sample_traffic(traffic, n, seed + k), horizon)
        else:
            horizon = disagg_horizon(cfg, osl, lifetimes)
            rate = cfg.overall_tokens_per_sec_per_gpu * cfg.total_gpus / osl
            slots = cfg.decode.batch * (cfg.num_decode_gpus // cfg.decode.mapping.gpus)
            n = requests_for(rate, horizon, slots)
            bw = kv_bw_per_gpu if kv_bw_per_gpu is not None else hw.scaleout_bw_per_gpu
            res = run_disagg(model, hw, cfg, sample_traffic(traffic, n, seed + k), horizon, bw)
        if not (res.completed and res.throughput_tokens_per_sec_per_gpu > 0 and res.p50_ttl > 0):
            return None
        if not res.p50_ftl <= sla.ftl_cutoff:
            return None
        return FrontierPoint(1.0 / res.p50_ttl, res.throughput_tokens_per_sec_per_gpu, cfg)

    measured, baseline = [], []
    for k, fp in enumerate(chosen):
        pt = simulate(fp.provenance, pattern, k)
        if pt is not None:
            measured.append(pt)
        if reference == "simulated":
            pt = simulate(fp.provenance, static_traffic, k)
            if pt is not None:
                baseline.append(pt)
    dynamic = pareto_filter(measured)
    if reference == "simulated":
        static = pareto_filter(baseline)
    return DynamicComparison(
        mode=mode,
        reference=reference,
        p50=(isl, osl),
        rows=_gap_rows(static, dynamic, sla.ttl_targets),
        static_frontier=[(p.interactivity, p.per_gpu_throughput) for p in static],
        dynamic_frontier=[(p.interactivity, p.per_gpu_throughput) for p in dynamic],
    )


# --------------------------------------------------------------------------- #
# trace I/O
# --------------------------------------------------------------------------- #


def read_trace(text: str) -> list[Request]:
    """Parse ``arrival_time,isl,osl`` rows (header optional)."""
    out = []
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and row[0].strip() == "arrival_time":
            continue
        if len(row) != 3:
            raise TraceError(lineno, f"expected 3 columns, got {len(row)}")
        try:
            arrival = float(row[0])
            isl = int(row[1])
            osl = int(row[2])
        except ValueError as exc:
            raise TraceError(lineno, str(exc)) from None
        if not math.isfinite(arrival) or arrival < 0:
            raise TraceError(lineno, "arrival_time must be a finite non-negative number")
        if isl < 1:
            raise TraceError(lineno, "isl must be >= 1")
        if osl < 2:
            raise TraceError(lineno, "osl must be >= 2")
        out.append(Request(len(out), arrival, isl, osl))
    out.sort(key=lambda r: (r.arrival_time, r.id))
    return out


def requests_csv(requests: Sequence[Request]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "arrival", "first_token_time", "finish_time"])
    for r in sorted(requests, key=lambda r: r.id):
        if r.preloaded:
            continue
        w.writerow([r.id, repr(r.arrival_time), _opt(r.first_token_time), _opt(r.finish_time)])
    return buf.getvalue()


def _opt(x: float | None) -> str:
    return "" if x is None else repr(x)
