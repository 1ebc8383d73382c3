"""Command-line entry point.

    disaggplan plan      --config C --out DIR [--ttl-targets T,...] [--explain]
    disaggplan sweep     --config C --out DIR --sweep AXIS=V1,V2,...
    disaggplan compare   --config C --out DIR
    disaggplan bandwidth --config C --out DIR [--kv-bw BYTES_PER_S]
    disaggplan simulate  --config C --out DIR --mode MODE [--seed N | --trace FILE]

``--config`` takes a path or the name of a bundled config. Every run writes
``manifest.json`` next to its outputs. Exit codes: 0 ok, 2 bad input,
3 nothing feasible, 4 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .desk import Plan, build_plan, fixed_ratio_deployments, shipped_configs, shipped_text, space_for, window_for
from .kvbw import CSV_COLUMNS, report_for, report_row
from .pareto import (
    Cell,
    CellResult,
    ComparisonReport,
    Frontier,
    disagg_frontier_from,
    frontier_area,
    rows_to_csv,
    traffic_lengths,
)
from .ratematch import NoFeasiblePrefill, RatioNotRealizable
from .simulate import (
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
from .svg import Panel, Series, render
from .workload import ConfigError, Document, SlaSpec, Static, config_hash, load_document

EXIT_OK = 0
EXIT_USER = 2
EXIT_INFEASIBLE = 3
EXIT_INTERNAL = 4

SWEEP_AXES = ("traffic", "model", "nvlink", "ratio")
SIM_MODES = ("colocated", "disagg", "dynamic-colocated", "dynamic-disagg")


class UserError(Exception):
    pass


class Infeasible(Exception):
    def __init__(self, constraint: str, message: str):
        super().__init__(message)
        self.constraint = constraint


# --------------------------------------------------------------------------- #
# inputs
# --------------------------------------------------------------------------- #


@dataclasses.dataclass
class Loaded:
    doc: Document
    source: str


def load(arg: str) -> Loaded:
    path = Path(arg)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    elif arg in shipped_configs():
        text = shipped_text(arg)
    else:
        raise UserError(f"--config: {arg!r} is neither a file nor a bundled config ({', '.join(shipped_configs())})")
    return Loaded(load_document(text), arg)


def parse_floats(text: str, flag: str) -> list[float]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise UserError(f"{flag}: empty list")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise UserError(f"{flag}: expected comma-separated numbers, got {text!r}") from None
    if not all(v > 0 and math.isfinite(v) for v in values):
        raise UserError(f"{flag}: values must be positive and finite")
    return values


def with_targets(doc: Document, arg: str | None) -> Document:
    if arg is None:
        return doc
    targets = sorted(set(parse_floats(arg, "--ttl-targets")))
    return doc.replace(sla=SlaSpec(tuple(targets), doc.sla.ftl_cutoff))


def parse_sweep(arg: str | None) -> tuple[str, list[str]]:
    if not arg or "=" not in arg:
        raise UserError("--sweep: expected AXIS=V1,V2,... with AXIS one of " + ", ".join(SWEEP_AXES))
    axis, _, values = arg.partition("=")
    axis = axis.strip()
    if axis not in SWEEP_AXES:
        raise UserError(f"--sweep: unknown axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    vals = [v.strip() for v in values.split(",") if v.strip()]
    if not vals:
        raise UserError(f"--sweep: no values given for {axis}")
    return axis, vals


# --------------------------------------------------------------------------- #
# outputs
# --------------------------------------------------------------------------- #


def _plain(x: Any) -> Any:
    # JSON has no NaN or infinity; they become null
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def dump_json(obj: Any) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _timestamp() -> str | None:
    # reruns stay byte-identical unless the caller pins a time
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if not epoch:
        return None
    try:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    except ValueError:
        raise UserError(f"SOURCE_DATE_EPOCH must be an integer, got {epoch!r}") from None


class Outputs:
    def __init__(self, directory: str):
        self.dir = Path(directory)
        self.written: list[tuple[str, str]] = []

    def write(self, name: str, text: str) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        (self.dir / name).write_bytes(data)
        self.written.append((name, hashlib.sha256(data).hexdigest()))

    def manifest(self, subcommand: str, loaded: Loaded, params: dict[str, Any]) -> None:
        body = {
            "tool": "disaggplan",
            "version": __version__,
            "subcommand": subcommand,
            "config": loaded.source,
            "config_hash": config_hash(loaded.doc.raw),
            "parameters": params,
            "timestamp": _timestamp(),
            "outputs": [{"file": n, "sha256": h} for n, h in self.written],
        }
        self.write("manifest.json", dump_json(body))


# --------------------------------------------------------------------------- #
# helpers shared by subcommands
# --------------------------------------------------------------------------- #


def plan_or_fail(doc: Document) -> Plan:
    try:
        plan = build_plan(doc)
    except NoFeasiblePrefill as exc:
        raise Infeasible("FTL", f"{exc} (sla.ftl_cutoff)") from None
    if not plan.disagg and not plan.colocated:
        raise Infeasible("TTL", _ttl_diagnosis(plan))
    return plan


def _ttl_diagnosis(plan: Plan) -> str:
    loosest = plan.doc.sla.ttl_targets[-1]
    cutoff = plan.doc.sla.ftl_cutoff
    ttls = [p.ttl for p in plan.deployments]
    ttls += [p.ttl_effective for p in plan.colocated_points if p.ftl_effective <= cutoff]
    if not ttls:
        return f"no configuration fits the search space within FTL {cutoff} s"
    return f"no deployment meets TTL {loosest:g} s; the fastest candidate has TTL {min(ttls):.4g} s"


def _frontier_xy(f: Frontier) -> list[tuple[float, float]]:
    return [(p.interactivity, p.per_gpu_throughput) for p in f]


FRONTIER_COLUMNS = (
    "mode",
    "interactivity",
    "ttl",
    "per_gpu_throughput",
    "ftl",
    "gpus",
    "mapping",
    "batch",
    "chunk_tokens",
    "prefill_mapping",
    "prefill_batch",
    "num_prefill_gpus",
    "num_decode_gpus",
    "alpha",
)


def frontier_rows(plan: Plan) -> list[dict[str, Any]]:
    rows = []
    for fp in plan.disagg:
        d = fp.provenance
        rows.append(
            {
                "mode": "disagg",
                "interactivity": fp.interactivity,
                "ttl": d.ttl,
                "per_gpu_throughput": fp.per_gpu_throughput,
                "ftl": d.ftl,
                "gpus": d.total_gpus,
                "mapping": d.decode.mapping.label,
                "batch": d.decode.batch,
                "prefill_mapping": d.prefill.mapping.label,
                "prefill_batch": d.prefill.batch,
                "num_prefill_gpus": d.num_prefill_gpus,
                "num_decode_gpus": d.num_decode_gpus,
                "alpha": str(d.alpha),
            }
        )
    for fp in plan.colocated:
        c = fp.provenance
        rows.append(
            {
                "mode": "colocated-piggyback" if c.piggybacked else "colocated",
                "interactivity": fp.interactivity,
                "ttl": c.ttl_effective,
                "per_gpu_throughput": fp.per_gpu_throughput,
                "ftl": c.ftl_effective,
                "gpus": c.gpus,
                "mapping": c.mapping.label,
                "batch": c.batch,
                "chunk_tokens": c.chunk_tokens if c.chunk_tokens is not None else "",
            }
        )
    return rows


def _binding(breakdown: dict[str, float]) -> str:
    top = max(breakdown.items(), key=lambda kv: (kv[1], kv[0]))
    return top[0]


def explain(plan: Plan) -> str:
    isl, osl = plan.lengths
    lines = [
        f"traffic evaluated at ISL {isl}, OSL {osl}",
        f"frontier points: {len(plan.disagg)} disaggregated, {len(plan.colocated)} co-located",
        f"areas over interactivity {plan.window[0]:g}..{plan.window[1]:g}: "
        f"disaggregated {plan.disagg_area:.4g}, co-located {plan.colocated_area:.4g}",
    ]
    if plan.deployments:
        pf = plan.deployments[0].prefill
        lines.append(
            f"prefill: {pf.mapping.label} batch {pf.batch}, FTL {pf.latency:.4g} s, "
            f"{pf.per_gpu_request_rate:.4g} req/s/GPU, bound by {_binding(pf.breakdown)}"
        )
    for t in plan.doc.sla.ttl_targets:
        d, c = plan.disagg.best_within(t), plan.colocated.best_within(t)
        lines.append(f"TTL <= {t:g} s:")
        if d:
            p = d.provenance
            lines.append(
                f"  disaggregated {d.per_gpu_throughput:.4g} tok/s/GPU: decode {p.decode.mapping.label} "
                f"batch {p.decode.batch}, {p.num_prefill_gpus}+{p.num_decode_gpus} GPUs (ratio {p.alpha}), "
                f"decode bound by {_binding(p.decode.breakdown)}"
            )
        else:
            lines.append("  disaggregated: none")
        if c:
            p = c.provenance
            how = f"chunk {p.chunk_tokens}" if p.piggybacked else "no chunking"
            lines.append(
                f"  co-located {c.per_gpu_throughput:.4g} tok/s/GPU: {p.mapping.label} batch {p.batch}, {how}, "
                f"bound by {_binding(p.breakdown)}"
            )
        else:
            lines.append("  co-located: none")
    return "\n".join(lines) + "\n"


def _label(doc: Document) -> str:
    isl, osl = traffic_lengths(doc.traffic)
    return f"{doc.model.name} on {doc.hardware.name}, ISL {isl} / OSL {osl}"


# --------------------------------------------------------------------------- #
# subcommands
# --------------------------------------------------------------------------- #


def cmd_plan(args: argparse.Namespace, out: Outputs) -> tuple[Loaded, dict]:
    loaded = load(args.config)
    doc = with_targets(loaded.doc, args.ttl_targets)
    plan = plan_or_fail(doc)
    out.write("frontier.csv", rows_to_csv(frontier_rows(plan), FRONTIER_COLUMNS))
    panel = Panel(
        _label(doc),
        [Series("disaggregated", _frontier_xy(plan.disagg)), Series("co-located", _frontier_xy(plan.colocated))],
        logx=True,
    )
    out.write("frontier.svg", render([panel], columns=1))
    if args.explain:
        sys.stdout.write(explain(plan))
    return loaded, {"ttl_targets": list(doc.sla.ttl_targets)}


def _cell_docs(doc: Document, axis: str, values: list[str]) -> list[tuple[str, Document]]:
    out = []
    for v in values:
        if axis == "traffic":
            isl, sep, osl = v.partition(":")
            try:
                traffic = Static(int(isl), int(osl))
            except (ValueError, ConfigError) as exc:
                raise UserError(f"--sweep traffic: {v!r} is not ISL:OSL ({exc})") from None
            if not sep:
                raise UserError(f"--sweep traffic: {v!r} is not ISL:OSL")
            out.append((f"{traffic.isl}:{traffic.osl}", doc.replace(traffic=traffic)))
        elif axis == "model":
            out.append((v, doc.replace(model=load(v).doc.model)))
        elif axis == "nvlink":
            try:
                size = int(v)
                hw = dataclasses.replace(doc.hardware, nvlink_domain_size=size)
            except (ValueError, ConfigError) as exc:
                raise UserError(f"--sweep nvlink: {v!r} is not a valid domain size ({exc})") from None
            out.append((str(size), doc.replace(hardware=hw)))
    return out


def cmd_sweep(args: argparse.Namespace, out: Outputs) -> tuple[Loaded, dict]:
    if args.sweep and args.ratio:
        raise UserError("--ratio is shorthand for --sweep ratio=...; give one of them")
    loaded = load(args.config)
    axis, values = parse_sweep(args.sweep or (f"ratio={args.ratio}" if args.ratio else None))
    doc = with_targets(loaded.doc, args.ttl_targets)
    params = {"axis": axis, "values": values, "ttl_targets": list(doc.sla.ttl_targets)}
    if axis == "ratio":
        _ratio_sweep(doc, values, out)
        return loaded, params
    cells = []
    panels = []
    for key, cdoc in _cell_docs(doc, axis, values):
        plan = plan_or_fail(cdoc)
        cell = Cell(((axis, key),), cdoc.model, cdoc.hardware, cdoc.traffic)
        cells.append(CellResult(cell, plan.disagg, plan.colocated, plan.disagg_area, plan.colocated_area))
        panels.append(
            Panel(
                f"{axis} = {key}",
                [Series("disaggregated", _frontier_xy(plan.disagg)), Series("co-located", _frontier_xy(plan.colocated))],
                logx=True,
            )
        )
    report = ComparisonReport(doc.sla, window_for(doc), cells)
    out.write("comparison.csv", report.to_csv())
    out.write("comparison.svg", render(panels))
    return loaded, params


RATIO_COLUMNS = (
    "ratio",
    "ttl_target",
    "interactivity",
    "per_gpu_throughput",
    "alpha",
    "num_prefill_gpus",
    "num_decode_gpus",
    "area",
    "area_vs_optimal",
)


def _ratio_sweep(doc: Document, values: list[str], out: Outputs) -> None:
    frontiers: list[tuple[str, Frontier]] = []
    for v in values:
        try:
            if v == "optimal":
                points = plan_or_fail(doc).deployments
            else:
                ratio = parse_floats(v, "--sweep ratio")[0]
                points = fixed_ratio_deployments(doc, ratio)
        except NoFeasiblePrefill as exc:
            raise Infeasible("FTL", f"{exc} (sla.ftl_cutoff)") from None
        except RatioNotRealizable as exc:
            raise Infeasible("GPU budget", str(exc)) from None
        frontiers.append((v, disagg_frontier_from(points, doc.sla)))
    window = window_for(doc)
    areas = {v: frontier_area(f, window) for v, f in frontiers}
    optimal = areas.get("optimal")
    rows = []
    for v, f in frontiers:
        for t in doc.sla.ttl_targets:
            p = f.best_within(t)
            d = p.provenance if p else None
            rows.append(
                {
                    "ratio": v,
                    "ttl_target": t,
                    "interactivity": p.interactivity if p else "",
                    "per_gpu_throughput": p.per_gpu_throughput if p else 0.0,
                    "alpha": str(d.alpha) if d else "",
                    "num_prefill_gpus": d.num_prefill_gpus if d else "",
                    "num_decode_gpus": d.num_decode_gpus if d else "",
                    "area": areas[v],
                    "area_vs_optimal": areas[v] / optimal if optimal else "",
                }
            )
    out.write("comparison.csv", rows_to_csv(rows, RATIO_COLUMNS))
    label = lambda v: "rate-matched" if v == "optimal" else f"ratio {v}"  # noqa: E731
    panel = Panel(
        "disaggregated, prefill:decode GPU ratio",
        [Series(label(v), _frontier_xy(f)) for v, f in frontiers],
        logx=True,
    )
    out.write("comparison.svg", render([panel], columns=1))


def cmd_compare(args: argparse.Namespace, out: Outputs) -> tuple[Loaded, dict]:
    loaded = load(args.config)
    doc = with_targets(loaded.doc, args.ttl_targets)
    plan = plan_or_fail(doc)
    cell = Cell((("config", loaded.source),), doc.model, doc.hardware, doc.traffic)
    report = ComparisonReport(
        doc.sla, plan.window, [CellResult(cell, plan.disagg, plan.colocated, plan.disagg_area, plan.colocated_area)]
    )
    out.write("comparison.csv", report.to_csv())
    panel = Panel(
        _label(doc),
        [Series("disaggregated", _frontier_xy(plan.disagg)), Series("co-located", _frontier_xy(plan.colocated))],
        logx=True,
    )
    out.write("comparison.svg", render([panel], columns=1))
    return loaded, {"ttl_targets": list(doc.sla.ttl_targets)}


def _provisioned(doc: Document, override: float | None) -> float:
    if override is not None:
        if not (override > 0 and math.isfinite(override)):
            raise UserError("--kv-bw must be positive")
        return override
    return float(doc.analysis.get("kv_bw_per_gpu", doc.hardware.scaleout_bw_per_gpu))


def cmd_bandwidth(args: argparse.Namespace, out: Outputs) -> tuple[Loaded, dict]:
    loaded = load(args.config)
    doc = with_targets(loaded.doc, args.ttl_targets)
    plan = plan_or_fail(doc)
    provisioned = _provisioned(doc, args.kv_bw)
    isl, osl = plan.lengths
    rows = []
    for t in doc.sla.ttl_targets:
        p = plan.disagg.best_within(t)
        if p is not None:
            rows.append(report_row(report_for(p.provenance, doc.model, isl, osl, provisioned), t))
    if not rows:
        raise Infeasible("TTL", "no disaggregated deployment meets any selected TTL target")
    out.write("bandwidth.csv", rows_to_csv(rows, CSV_COLUMNS))
    return loaded, {"ttl_targets": list(doc.sla.ttl_targets), "provisioned_Bps": provisioned}


def _pick(frontier: Frontier, sla: SlaSpec, mode: str):
    p = frontier.best_within(sla.ttl_targets[-1])
    if p is None:
        raise Infeasible("TTL", f"no {mode} deployment meets TTL {sla.ttl_targets[-1]:g} s")
    return p.provenance


def cmd_simulate(args: argparse.Namespace, out: Outputs) -> tuple[Loaded, dict]:
    loaded = load(args.config)
    doc = with_targets(loaded.doc, args.ttl_targets)
    a = doc.analysis
    lifetimes = float(a.get("lifetimes", 3.0))
    params: dict[str, Any] = {"mode": args.mode, "seed": args.seed, "ttl_targets": list(doc.sla.ttl_targets)}
    if args.mode.startswith("dynamic"):
        if args.trace:
            raise UserError("--trace cannot be combined with a dynamic mode; it samples the configured traffic")
        params["reference"] = args.reference
        try:
            cmp = compare_dynamic_vs_p50(
                doc.model,
                doc.hardware,
                space_for(doc),
                doc.sla,
                doc.traffic,
                args.seed,
                mode=args.mode.split("-", 1)[1],
                kv_bw_per_gpu=_provisioned(doc, args.kv_bw),
                lifetimes=lifetimes,
                reference=args.reference,
            )
        except NoFeasiblePrefill as exc:
            raise Infeasible("FTL", f"{exc} (sla.ftl_cutoff)") from None
        out.write("sim.json", dump_json(cmp.to_dict()))
        cols = ("ttl_target", "static_throughput", "dynamic_throughput", "gap", "static_ttl", "dynamic_ttl")
        out.write("gaps.csv", rows_to_csv([r.to_dict() for r in cmp.rows], cols))
        return loaded, params

    plan = plan_or_fail(doc)
    isl, osl = plan.lengths
    trace = None
    if args.trace:
        try:
            trace = read_trace(Path(args.trace).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UserError(f"--trace: {exc}") from None
        except TraceError as exc:
            raise UserError(f"--trace {args.trace}: {exc}") from None
        if not trace:
            raise UserError(f"--trace {args.trace}: no requests")
        params["trace"] = args.trace

    if args.mode == "colocated":
        point = _pick(plan.colocated, doc.sla, "co-located")
        analytic = {"throughput": point.per_gpu_token_rate, "ttl": point.ttl_effective, "ftl": point.ftl_effective}
        slots = point.batch
        life = point.ftl_effective + (osl - 1) * point.ttl_effective
        rate = point.per_gpu_token_rate * point.gpus / osl

        def run(reqs, horizon, **kw):
            return run_colocated(doc.model, doc.hardware, point, reqs, horizon, **kw)

        default_horizon = colocated_horizon(point, lifetimes)
    else:
        point = _pick(plan.disagg, doc.sla, "disaggregated")
        analytic = {"throughput": point.overall_tokens_per_sec_per_gpu, "ttl": point.ttl, "ftl": point.ftl}
        slots = point.decode.batch * (point.num_decode_gpus // point.decode.mapping.gpus)
        life = point.ftl + (osl - 1) * point.ttl
        rate = point.overall_tokens_per_sec_per_gpu * point.total_gpus / osl
        bw = _provisioned(doc, args.kv_bw)
        params["kv_bw_per_gpu"] = bw

        def run(reqs, horizon, **kw):
            return run_disagg(doc.model, doc.hardware, point, reqs, horizon, bw, **kw)

        default_horizon = disagg_horizon(point, osl, lifetimes)

    if trace is None:
        horizon = default_horizon
        res = run(sample_traffic(doc.traffic, requests_for(rate, horizon, slots), args.seed), horizon)
    else:
        # replay until the trace drains: a generous first pass finds the last
        # finish, the second measures over exactly that span
        scale = max(1.0, max(r.isl for r in trace) / isl) * max(1.0, max(r.osl for r in trace) / osl)
        bound = max(r.arrival_time for r in trace) + (len(trace) + 1) * life * scale * 4
        first = run(_fresh(trace), bound, warmup=0.0, preload=False, open_loop=True)
        finished = [r.finish_time for r in first.requests if r.finish_time is not None]
        horizon = max(finished) * (1 + 1e-12) + 1e-12 if finished else bound
        res = run(_fresh(trace), horizon, warmup=0.0, preload=False, open_loop=True)
    body = {
        "mode": args.mode,
        "seed": args.seed if trace is None else None,
        "horizon": horizon,
        "deployment": point.to_dict(),
        "analytic": analytic,
        "result": res.to_dict(),
    }
    out.write("sim.json", dump_json(body))
    out.write("requests.csv", requests_csv(res.requests))
    return loaded, params


def _fresh(trace):
    return [dataclasses.replace(r) for r in trace]


# --------------------------------------------------------------------------- #
# entry point
# --------------------------------------------------------------------------- #


COMMANDS = {
    "plan": cmd_plan,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "bandwidth": cmd_bandwidth,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disaggplan",
        description="Plan disaggregated vs co-located LLM serving deployments.",
        epilog="Worker processes for enumeration: DISAGGPLAN_WORKERS (default 1).",
    )
    parser.add_argument("--version", action="version", version=f"disaggplan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="config file or bundled config name")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--ttl-targets", help="comma-separated TTL targets in seconds, overriding the config")

    p = sub.add_parser("plan", help="both frontiers for one config")
    common(p)
    p.add_argument("--explain", action="store_true", help="print the chosen deployment per TTL target")

    p = sub.add_parser("sweep", help="frontiers across one axis")
    common(p)
    p.add_argument("--sweep", help="AXIS=V1,V2,... with AXIS one of " + ", ".join(SWEEP_AXES))
    p.add_argument("--ratio", help="comma-separated prefill:decode GPU ratios or 'optimal'; same as --sweep ratio=...")

    p = sub.add_parser("compare", help="area and per-target winners for one config")
    common(p)

    p = sub.add_parser("bandwidth", help="KV transfer bandwidth of the best deployment per TTL target")
    common(p)
    p.add_argument("--kv-bw", type=float, help="provisioned bytes/s per GPU (default: config)")

    p = sub.add_parser("simulate", help="discrete-event run of a planned deployment")
    common(p)
    p.add_argument("--mode", choices=SIM_MODES, default="colocated")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="CSV of arrival_time,isl,osl to replay instead of sampling")
    p.add_argument("--kv-bw", type=float, help="provisioned KV bytes/s per GPU (default: config)")
    p.add_argument(
        "--reference",
        choices=("analytic", "simulated"),
        default="analytic",
        help="dynamic modes: compare against the analytical P50 frontier or a simulated P50 run",
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage already; keep --help and --version at 0
        return int(exc.code or 0)
    out = Outputs(args.out)
    try:
        loaded, params = COMMANDS[args.command](args, out)
        out.manifest(args.command, loaded, params)
    except ConfigError as exc:
        print(f"disaggplan: config error: {exc}", file=sys.stderr)
        return EXIT_USER
    except UserError as exc:
        print(f"disaggplan: {exc}", file=sys.stderr)
        return EXIT_USER
    except Infeasible as exc:
        print(f"disaggplan: infeasible [{exc.constraint}]: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001 - the exit-code contract covers everything else
        print(f"disaggplan: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
