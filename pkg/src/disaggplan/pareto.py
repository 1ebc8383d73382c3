"""Throughput/interactivity frontiers for disaggregated and co-located serving."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .enumerate import SearchSpace, enumerate_colocated, enumerate_decode, enumerate_prefill
from .perfmodel import ColocatedPoint, DecodeStepCost
from .ratematch import DeploymentPoint, rate_match, select_prefill, settle_occupancy
from .workload import HardwareSpec, ModelArch, SlaSpec, TrafficPattern, p50_pow2


@dataclass(frozen=True)
class FrontierPoint:
    interactivity: float
    per_gpu_throughput: float
    provenance: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not (self.interactivity > 0 and self.per_gpu_throughput > 0):
            raise ValueError("frontier coordinates must be positive")

    @property
    def ttl(self) -> float:
        return 1.0 / self.interactivity


@dataclass(frozen=True)
class Frontier:
    points: tuple[FrontierPoint, ...] = ()

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __bool__(self) -> bool:
        return bool(self.points)

    def value_at(self, x: float) -> float:
        """Best throughput available at interactivity ``x`` or higher (0 past the last point)."""
        for p in self.points:
            if p.interactivity >= x:
                return p.per_gpu_throughput
        return 0.0

    def best_within(self, ttl_target: float) -> FrontierPoint | None:
        """Highest-throughput point whose TTL meets the target."""
        ok = [p for p in self.points if p.ttl <= ttl_target * (1 + 1e-12)]
        return ok[0] if ok else None


def pareto_filter(points: Iterable[FrontierPoint]) -> Frontier:
    """Non-dominated subset, maximizing both coordinates.

    Exact duplicates keep their first occurrence.
    """
    indexed = sorted(enumerate(points), key=lambda ip: (-ip[1].interactivity, -ip[1].per_gpu_throughput, ip[0]))
    kept = []
    best_y = -math.inf
    for _, p in indexed:
        if p.per_gpu_throughput > best_y:
            kept.append(p)
            best_y = p.per_gpu_throughput
    kept.reverse()
    return Frontier(tuple(kept))


def frontier_area(f: Frontier, interactivity_range: tuple[float, float]) -> float:
    """Area under the frontier's staircase over ``interactivity_range``.

    Each point covers every interactivity up to its own; beyond the last
    point the frontier contributes nothing.
    """
    lo, hi = interactivity_range
    if hi < lo:
        raise ValueError("interactivity range must have lo <= hi")
    area = 0.0
    left = max(lo, 0.0)
    for p in f.points:
        right = min(p.interactivity, hi)
        if right > left:
            area += p.per_gpu_throughput * (right - left)
            left = right
        if left >= hi:
            break
    return area


def default_window(sla: SlaSpec) -> tuple[float, float]:
    return (1.0 / sla.ttl_targets[-1], 1.0 / sla.ttl_targets[0])


def traffic_lengths(traffic: TrafficPattern) -> tuple[int, int]:
    """ISL/OSL the analytical model is evaluated at (power-of-two P50 for distributions)."""
    return p50_pow2(traffic)


# --------------------------------------------------------------------------- #
# frontier construction
# --------------------------------------------------------------------------- #


@dataclass
class FrontierBuild:
    frontier: Frontier
    candidates: list
    mode: str


def disagg_deployments(
    model: ModelArch,
    hw: HardwareSpec,
    space: SearchSpace,
    sla: SlaSpec,
    traffic: TrafficPattern,
    *,
    tolerance: float = 0.03,
    gpu_budget: int | None = None,
    workers: int | None = None,
) -> list[DeploymentPoint]:
    """Rate-matched deployments for every decode candidate; raises when no prefill fits the FTL cutoff."""
    isl, osl = traffic_lengths(traffic)
    prefill = enumerate_prefill(model, hw, space, sla, isl, workers=workers)
    best = select_prefill(prefill, sla.ftl_cutoff)
    decode = enumerate_decode(model, hw, space, isl, osl, workers=workers)
    return settle(rate_match(best, decode, osl, tolerance, gpu_budget=gpu_budget), model, hw, isl, osl)


def settle(points: Sequence[DeploymentPoint], model: ModelArch, hw: HardwareSpec, isl: int, osl: int) -> list[DeploymentPoint]:
    """Apply :func:`settle_occupancy` with the decode step cost at mean context ``isl + osl / 2``."""
    costs: dict = {}
    out = []
    for p in points:
        m = p.decode.mapping
        cost = costs.get(m)
        if cost is None:
            cost = costs[m] = DecodeStepCost(model, hw, m)
        out.append(settle_occupancy(p, lambda n, c=cost: c(n, n * (isl + osl / 2))))
    return out


def _ttl_ok(ttl: float, sla: SlaSpec) -> bool:
    return ttl <= sla.ttl_targets[-1] * (1 + 1e-12)


def disagg_frontier_from(points: Sequence[DeploymentPoint], sla: SlaSpec) -> Frontier:
    return pareto_filter(
        FrontierPoint(p.interactivity, p.overall_tokens_per_sec_per_gpu, p)
        for p in points
        if _ttl_ok(p.ttl, sla)
    )


def colocated_frontier_from(points: Sequence[ColocatedPoint], sla: SlaSpec) -> Frontier:
    return pareto_filter(
        FrontierPoint(1.0 / p.ttl_effective, p.per_gpu_token_rate, p)
        for p in points
        if p.ftl_effective <= sla.ftl_cutoff and _ttl_ok(p.ttl_effective, sla)
    )


def build_disagg_frontier(
    model: ModelArch,
    hw: HardwareSpec,
    space: SearchSpace,
    sla: SlaSpec,
    traffic: TrafficPattern,
    **kwargs: Any,
) -> Frontier:
    return disagg_frontier_from(disagg_deployments(model, hw, space, sla, traffic, **kwargs), sla)


def build_colocated_frontier(
    model: ModelArch,
    hw: HardwareSpec,
    space: SearchSpace,
    sla: SlaSpec,
    traffic: TrafficPattern,
    *,
    piggyback: bool = True,
    mla_reuse: bool = False,
    workers: int | None = None,
) -> Frontier:
    isl, osl = traffic_lengths(traffic)
    points = enumerate_colocated(model, hw, space, isl, osl, piggyback=piggyback, mla_reuse=mla_reuse, workers=workers)
    return colocated_frontier_from(points, sla)


# --------------------------------------------------------------------------- #
# comparison
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Cell:
    """One sweep cell; ``keys`` name it in reports."""

    keys: tuple[tuple[str, str], ...]
    model: ModelArch
    hw: HardwareSpec
    traffic: TrafficPattern
    space: SearchSpace | None = None

    @property
    def label(self) -> str:
        return ",".join(f"{k}={v}" for k, v in self.keys)


@dataclass
class CellResult:
    cell: Cell
    disagg: Frontier
    colocated: Frontier
    disagg_area: float
    colocated_area: float

    @property
    def area_ratio(self) -> float:
        if self.colocated_area == 0:
            return math.inf if self.disagg_area > 0 else math.nan
        return self.disagg_area / self.colocated_area

    def winners(self, ttl_targets: Sequence[float]) -> dict[float, str | None]:
        out = {}
        for t in ttl_targets:
            d, c = self.disagg.best_within(t), self.colocated.best_within(t)
            dv = d.per_gpu_throughput if d else 0.0
            cv = c.per_gpu_throughput if c else 0.0
            out[t] = None if dv == cv == 0 else ("disagg" if dv >= cv else "colocated")
        return out


@dataclass
class ComparisonReport:
    sla: SlaSpec
    window: tuple[float, float]
    cells: list[CellResult]

    COLUMNS = ("mode", "ttl_target", "interactivity", "per_gpu_throughput", "area", "area_ratio", "winner")

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for res in self.cells:
            winners = res.winners(self.sla.ttl_targets)
            for mode, frontier, area in (
                ("disagg", res.disagg, res.disagg_area),
                ("colocated", res.colocated, res.colocated_area),
            ):
                for t in self.sla.ttl_targets:
                    p = frontier.best_within(t)
                    row = dict(res.cell.keys)
                    row.update(
                        mode=mode,
                        ttl_target=t,
                        interactivity=p.interactivity if p else "",
                        per_gpu_throughput=p.per_gpu_throughput if p else 0.0,
                        area=area,
                        area_ratio=res.area_ratio,
                        winner=winners[t] or "",
                    )
                    out.append(row)
        return out

    def to_csv(self) -> str:
        keys: list[str] = []
        for res in self.cells:
            for k, _ in res.cell.keys:
                if k not in keys:
                    keys.append(k)
        return rows_to_csv(self.rows(), keys + list(self.COLUMNS))


def fmt(v: Any) -> str:
    """Stable text form for CSV cells (shortest repr for floats)."""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[dict[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def evaluate_cell(
    cell: Cell,
    sla: SlaSpec,
    window: tuple[float, float] | None = None,
    *,
    tolerance: float = 0.03,
    mla_reuse: bool = False,
    workers: int | None = None,
) -> CellResult:
    space = cell.space or SearchSpace.default(cell.model, cell.hw)
    window = window or default_window(sla)
    d = build_disagg_frontier(cell.model, cell.hw, space, sla, cell.traffic, tolerance=tolerance, workers=workers)
    c = build_colocated_frontier(cell.model, cell.hw, space, sla, cell.traffic, mla_reuse=mla_reuse, workers=workers)
    return CellResult(cell, d, c, frontier_area(d, window), frontier_area(c, window))


def compare(
    cells: Sequence[Cell],
    sla: SlaSpec,
    window: tuple[float, float] | None = None,
    **kwargs: Any,
) -> ComparisonReport:
    """Both frontiers per cell, their areas over ``window`` and the winner per TTL target."""
    window = window or default_window(sla)
    return ComparisonReport(sla, window, [evaluate_cell(c, sla, window, **kwargs) for c in cells])
