"""Shipped desk configs and the glue that turns a config document into a plan."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Any

from .enumerate import SearchSpace, enumerate_colocated, enumerate_decode, enumerate_prefill
from .pareto import (
    Frontier,
    colocated_frontier_from,
    default_window,
    disagg_deployments,
    disagg_frontier_from,
    frontier_area,
    settle,
    traffic_lengths,
)
from .ratematch import DeploymentPoint, fixed_ratio_match, select_prefill
from .workload import Document, load_document


def shipped_configs() -> list[str]:
    """Names of the configs bundled with the package, sorted."""
    root = resources.files("disaggplan").joinpath("data")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def shipped_text(name: str) -> str:
    return resources.files("disaggplan").joinpath("data", f"{name}.json").read_text(encoding="utf-8")


def load_shipped(name: str) -> Document:
    return load_document(shipped_text(name))


def space_for(doc: Document) -> SearchSpace:
    return SearchSpace.from_dict(doc.search, doc.model, doc.hardware)


def window_for(doc: Document) -> tuple[float, float]:
    w = doc.analysis.get("interactivity_window")
    return (float(w[0]), float(w[1])) if w else default_window(doc.sla)


@dataclass
class Plan:
    doc: Document
    deployments: list[DeploymentPoint]
    colocated_points: list
    disagg: Frontier
    colocated: Frontier
    window: tuple[float, float]

    @property
    def disagg_area(self) -> float:
        return frontier_area(self.disagg, self.window)

    @property
    def colocated_area(self) -> float:
        return frontier_area(self.colocated, self.window)

    @property
    def lengths(self) -> tuple[int, int]:
        return traffic_lengths(self.doc.traffic)


def fixed_ratio_deployments(doc: Document, ratio: float, *, workers: int | None = None) -> list[DeploymentPoint]:
    """Deployments with the prefill:decode GPU ratio pinned to ``ratio``."""
    space = space_for(doc)
    isl, osl = traffic_lengths(doc.traffic)
    prefill = enumerate_prefill(doc.model, doc.hardware, space, doc.sla, isl, workers=workers)
    best = select_prefill(prefill, doc.sla.ftl_cutoff)
    decode = enumerate_decode(doc.model, doc.hardware, space, isl, osl, workers=workers)
    points = fixed_ratio_match(best, decode, osl, ratio, gpu_budget=doc.analysis.get("gpu_budget"))
    return settle(points, doc.model, doc.hardware, isl, osl)


def build_plan(doc: Document, *, workers: int | None = None, **space_overrides: Any) -> Plan:
    """Both frontiers for ``doc``; raises :class:`NoFeasiblePrefill` when no prefill fits the FTL cutoff."""
    space = space_for(doc)
    if space_overrides:
        space = SearchSpace(**{**space.__dict__, **space_overrides})
    a = doc.analysis
    isl, osl = traffic_lengths(doc.traffic)
    deployments = disagg_deployments(
        doc.model,
        doc.hardware,
        space,
        doc.sla,
        doc.traffic,
        tolerance=a.get("rate_tolerance", 0.03),
        gpu_budget=a.get("gpu_budget"),
        workers=workers,
    )
    coloc = enumerate_colocated(
        doc.model,
        doc.hardware,
        space,
        isl,
        osl,
        mla_reuse=a.get("mla_reuse", False),
        piggyback=a.get("piggyback", True),
        workers=workers,
    )
    return Plan(
        doc=doc,
        deployments=deployments,
        colocated_points=coloc,
        disagg=disagg_frontier_from(deployments, doc.sla),
        colocated=colocated_frontier_from(coloc, doc.sla),
        window=window_for(doc),
    )
