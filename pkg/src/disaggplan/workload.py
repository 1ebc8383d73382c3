"""Domain schemas for models, hardware, traffic and SLAs, plus config ingestion.

Every other module consumes these types. All of them are frozen dataclasses
that validate their invariants on construction, so a value that exists is a
valid value.

The config document is a single JSON object with the sections ``model``,
``hardware``, ``traffic`` and ``sla`` and two optional sections, ``search``
and ``analysis``, which are validated against the schema here and interpreted
by the enumeration and CLI layers. The schema lives next to this module in
``config.schema.json``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, NamedTuple, Union

import jsonschema

DEFAULT_FTL_CUTOFF = 10.0


class ConfigError(ValueError):
    """Base class for everything wrong with a config document."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ConfigParseError(ConfigError):
    """The document is not JSON or does not match the schema."""


class ConfigValidationError(ConfigError):
    """The document parses but a domain invariant is violated."""


def _require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise ConfigValidationError(field, message)


def _positive(value: float, field: str) -> None:
    _require(value > 0, field, f"must be > 0, got {value!r}")


# --------------------------------------------------------------------------- #
# Model architecture
# --------------------------------------------------------------------------- #


class AttentionKind(str, enum.Enum):
    GQA = "gqa"
    MLA = "mla"


class FfnKind(str, enum.Enum):
    DENSE = "dense"
    MOE = "moe"


@dataclass(frozen=True)
class Attention:
    kind: AttentionKind = AttentionKind.GQA
    latent_dim: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AttentionKind(self.kind))
        if self.kind is AttentionKind.MLA:
            _require(self.latent_dim is not None, "model.attention.latent_dim", "required for MLA")
            _positive(self.latent_dim, "model.attention.latent_dim")
        else:
            _require(self.latent_dim is None, "model.attention.latent_dim", "only valid for MLA")


@dataclass(frozen=True)
class Ffn:
    kind: FfnKind = FfnKind.DENSE
    inter_dim: int | None = None
    num_experts: int | None = None
    top_k: int | None = None
    expert_inter_dim: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FfnKind(self.kind))
        if self.kind is FfnKind.DENSE:
            _require(self.inter_dim is not None, "model.ffn.inter_dim", "required for dense FFN")
            _positive(self.inter_dim, "model.ffn.inter_dim")
        else:
            for name in ("num_experts", "top_k", "expert_inter_dim"):
                value = getattr(self, name)
                _require(value is not None, f"model.ffn.{name}", "required for MoE FFN")
                _positive(value, f"model.ffn.{name}")
            _require(self.top_k <= self.num_experts, "model.ffn.top_k", "must be <= num_experts")

    @property
    def is_moe(self) -> bool:
        return self.kind is FfnKind.MOE


def gqa() -> Attention:
    return Attention(AttentionKind.GQA)


def mla(latent_dim: int) -> Attention:
    return Attention(AttentionKind.MLA, latent_dim)


def dense(inter_dim: int) -> Ffn:
    return Ffn(FfnKind.DENSE, inter_dim=inter_dim)


def moe(num_experts: int, top_k: int, expert_inter_dim: int) -> Ffn:
    return Ffn(FfnKind.MOE, num_experts=num_experts, top_k=top_k, expert_inter_dim=expert_inter_dim)


class ParamCount(NamedTuple):
    total: int
    active: int
    non_embedding: int


@dataclass(frozen=True)
class ModelArch:
    """Transformer architecture description.

    ``kv_bytes_per_token_per_layer`` is the one number every memory and
    bandwidth formula consumes. When omitted it defaults to
    ``2 * d_head * num_kv_heads * kv_element_bytes`` for GQA (K and V) and
    ``latent_dim * kv_element_bytes`` for MLA.
    """

    name: str
    num_layers: int
    hidden_dim: int
    num_q_heads: int
    d_head: int
    num_kv_heads: int
    attention: Attention
    ffn: Ffn
    vocab_size: int
    weight_bytes_per_param: float
    activation_bytes: float = 2.0
    kv_element_bytes: float = 2.0
    kv_bytes_per_token_per_layer: float | None = None
    tie_embeddings: bool = False

    def __post_init__(self) -> None:
        for name in ("num_layers", "hidden_dim", "num_q_heads", "d_head", "num_kv_heads", "vocab_size"):
            _positive(getattr(self, name), f"model.{name}")
        for name in ("weight_bytes_per_param", "activation_bytes", "kv_element_bytes"):
            _positive(getattr(self, name), f"model.{name}")
        if self.attention.kind is AttentionKind.GQA:
            _require(
                self.num_q_heads >= self.num_kv_heads and self.num_q_heads % self.num_kv_heads == 0,
                "model.num_kv_heads",
                "num_q_heads must be a positive multiple of num_kv_heads",
            )
        if self.kv_bytes_per_token_per_layer is None:
            if self.attention.kind is AttentionKind.MLA:
                kv = self.attention.latent_dim * self.kv_element_bytes
            else:
                kv = 2 * self.d_head * self.num_kv_heads * self.kv_element_bytes
            object.__setattr__(self, "kv_bytes_per_token_per_layer", kv)
        _positive(self.kv_bytes_per_token_per_layer, "model.kv_bytes_per_token_per_layer")

    @property
    def is_mla(self) -> bool:
        return self.attention.kind is AttentionKind.MLA

    @property
    def kv_shardable_heads(self) -> int:
        # MLA stores one latent per token; there is nothing to split across heads
        return 1 if self.is_mla else self.num_kv_heads

    # parameter groups, per layer -------------------------------------------------

    @property
    def attn_params_per_layer(self) -> int:
        h, q_dim = self.hidden_dim, self.num_q_heads * self.d_head
        if self.is_mla:
            latent = self.attention.latent_dim
            # q, o projections; kv down-projection; k and v up-projections
            return 2 * h * q_dim + h * latent + 2 * latent * q_dim
        kv_dim = self.num_kv_heads * self.d_head
        return 2 * h * q_dim + 2 * h * kv_dim

    @property
    def mla_up_params_per_layer(self) -> int:
        """Weights of the K/V up-projections (zero for GQA)."""
        if not self.is_mla:
            return 0
        return 2 * self.attention.latent_dim * self.num_q_heads * self.d_head

    @property
    def expert_params(self) -> int:
        """Parameters of one expert (or the whole dense FFN): gated, three matrices."""
        inter = self.ffn.expert_inter_dim if self.ffn.is_moe else self.ffn.inter_dim
        return 3 * self.hidden_dim * inter

    @property
    def router_params_per_layer(self) -> int:
        return self.hidden_dim * self.ffn.num_experts if self.ffn.is_moe else 0

    @property
    def ffn_params_per_layer(self) -> int:
        if self.ffn.is_moe:
            return self.ffn.num_experts * self.expert_params + self.router_params_per_layer
        return self.expert_params

    @property
    def active_ffn_params_per_layer(self) -> int:
        if self.ffn.is_moe:
            return self.ffn.top_k * self.expert_params + self.router_params_per_layer
        return self.expert_params

    @property
    def norm_params_per_layer(self) -> int:
        return 2 * self.hidden_dim

    @property
    def embedding_params(self) -> int:
        return self.vocab_size * self.hidden_dim * (1 if self.tie_embeddings else 2)


def derived_param_count(model: ModelArch) -> ParamCount:
    """Closed-form parameter counts.

    Per layer: attention projections, gated FFN (``3 * hidden * inter`` per
    expert, plus a ``hidden x experts`` router for MoE) and two norm vectors.
    Embeddings are counted once per direction (input table and LM head)
    unless ``tie_embeddings`` is set.
    """
    base = model.attn_params_per_layer + model.norm_params_per_layer
    non_embedding = model.num_layers * (base + model.ffn_params_per_layer)
    active_non_embedding = model.num_layers * (base + model.active_ffn_params_per_layer)
    return ParamCount(
        total=non_embedding + model.embedding_params,
        active=active_non_embedding + model.embedding_params,
        non_embedding=non_embedding,
    )


def kv_bytes_per_request(model: ModelArch, seq_len: int) -> float:
    """KV-cache footprint of one request holding ``seq_len`` tokens, all layers."""
    if seq_len < 1:
        raise ValueError(f"seq_len must be >= 1, got {seq_len}")
    return model.num_layers * seq_len * model.kv_bytes_per_token_per_layer


# --------------------------------------------------------------------------- #
# Hardware
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class HardwareSpec:
    flops_dense: float
    hbm_bandwidth: float
    hbm_capacity: float
    nvlink_domain_size: int
    nvlink_bw_per_gpu: float
    scaleout_bw_per_gpu: float
    per_message_latency: float = 0.0
    compute_efficiency: float = 1.0
    name: str = "gpu"

    def __post_init__(self) -> None:
        for name in ("flops_dense", "hbm_bandwidth", "hbm_capacity", "nvlink_bw_per_gpu", "scaleout_bw_per_gpu"):
            _positive(getattr(self, name), f"hardware.{name}")
        _require(self.nvlink_domain_size >= 1, "hardware.nvlink_domain_size", "must be >= 1")
        _require(self.per_message_latency >= 0, "hardware.per_message_latency", "must be >= 0")
        _require(
            0 < self.compute_efficiency <= 1,
            "hardware.compute_efficiency",
            f"must be in (0, 1], got {self.compute_efficiency!r}",
        )

    @property
    def effective_flops(self) -> float:
        return self.flops_dense * self.compute_efficiency


# --------------------------------------------------------------------------- #
# Traffic and SLA
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Static:
    isl: int
    osl: int
    saturation: bool = True

    def __post_init__(self) -> None:
        _require(self.isl >= 1, "traffic.isl", "must be >= 1")
        _require(self.osl >= 2, "traffic.osl", "must be >= 2 (at least one decode step)")

    @property
    def samples(self) -> tuple[tuple[int, int, float], ...]:
        return ((self.isl, self.osl, 1.0),)


@dataclass(frozen=True)
class Empirical:
    samples: tuple[tuple[int, int, float], ...]
    saturation: bool = True

    def __post_init__(self) -> None:
        samples = tuple((int(i), int(o), float(w)) for i, o, w in self.samples)
        object.__setattr__(self, "samples", samples)
        _require(len(samples) > 0, "traffic.samples", "must be non-empty")
        for k, (isl, osl, weight) in enumerate(samples):
            _require(isl >= 1, f"traffic.samples[{k}].isl", "must be >= 1")
            _require(osl >= 2, f"traffic.samples[{k}].osl", "must be >= 2")
            _require(weight > 0, f"traffic.samples[{k}].weight", "must be > 0")
        total = math.fsum(w for _, _, w in samples)
        _require(abs(total - 1.0) <= 1e-9, "traffic.samples", f"weights must sum to 1, got {total!r}")


TrafficPattern = Union[Static, Empirical]


def weighted_median(values: list[tuple[int, float]]) -> int:
    """Smallest value whose cumulative weight reaches one half."""
    total = 0.0
    for v, w in sorted(values):
        total += w
        if total >= 0.5 - 1e-12:
            return v
    return max(v for v, _ in values)


def nearest_pow2(n: int) -> int:
    """Power of two closest to ``n``; equidistant values round up."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lower = 1 << (n.bit_length() - 1)
    if lower == n:
        return n
    upper = lower * 2
    return lower if n - lower < upper - n else upper


def p50_pow2(pattern: TrafficPattern) -> tuple[int, int]:
    """Weighted-median ISL and OSL rounded to powers of two; a Static pattern passes through."""
    if isinstance(pattern, Static):
        return pattern.isl, pattern.osl
    isl = weighted_median([(i, w) for i, _, w in pattern.samples])
    osl = weighted_median([(o, w) for _, o, w in pattern.samples])
    return nearest_pow2(isl), max(2, nearest_pow2(osl))


@dataclass(frozen=True)
class SlaSpec:
    ttl_targets: tuple[float, ...]
    ftl_cutoff: float = DEFAULT_FTL_CUTOFF

    def __post_init__(self) -> None:
        targets = tuple(float(t) for t in self.ttl_targets)
        object.__setattr__(self, "ttl_targets", targets)
        _positive(self.ftl_cutoff, "sla.ftl_cutoff")
        _require(all(t > 0 for t in targets), "sla.ttl_targets", "must be strictly positive")
        _require(list(targets) == sorted(targets), "sla.ttl_targets", "must be sorted ascending")


# --------------------------------------------------------------------------- #
# Parallelism mapping
# --------------------------------------------------------------------------- #


class ShardKind(str, enum.Enum):
    TP = "tp"
    DP = "dp"
    EP = "ep"


@dataclass(frozen=True, order=True)
class Shard:
    kind: ShardKind
    degree: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ShardKind(self.kind))
        if self.degree < 1:
            raise MappingError(f"shard degree must be >= 1, got {self.degree}")

    def __str__(self) -> str:
        return f"{self.kind.value.upper()}{self.degree}"


def tp(degree: int) -> Shard:
    return Shard(ShardKind.TP, degree)


def dp(degree: int) -> Shard:
    return Shard(ShardKind.DP, degree)


def ep(degree: int) -> Shard:
    return Shard(ShardKind.EP, degree)


class MappingError(ValueError):
    """A parallelism mapping that cannot be realized for a model/hardware pair."""


@dataclass(frozen=True)
class ParallelismMapping:
    """One sharding assignment for a model replica.

    Both attention and FFN are spread over the same ``width`` GPUs per
    pipeline stage; the narrower of the two is replicated ``width / degree``
    times and each replica serves a slice of the requests (attention) or
    tokens (FFN).
    """

    attn: Shard
    ffn: Shard
    pp_stages: int = 1
    cpp_chunk_tokens: int | None = None

    def __post_init__(self) -> None:
        if self.attn.kind not in (ShardKind.TP, ShardKind.DP):
            raise MappingError(f"attention shard must be TP or DP, got {self.attn.kind.value}")
        if self.ffn.kind not in (ShardKind.TP, ShardKind.EP):
            raise MappingError(f"FFN shard must be TP or EP, got {self.ffn.kind.value}")
        if self.pp_stages < 1:
            raise MappingError("pp_stages must be >= 1")
        if self.cpp_chunk_tokens is not None and self.cpp_chunk_tokens < 1:
            raise MappingError("cpp_chunk_tokens must be >= 1")
        w = self.width
        if w % self.attn.degree or w % self.ffn.degree:
            raise MappingError(f"{self.attn} and {self.ffn} do not tile a stage of {w} GPUs")

    @property
    def width(self) -> int:
        return max(self.attn.degree, self.ffn.degree)

    @property
    def gpus(self) -> int:
        return self.width * self.pp_stages

    @property
    def attn_tp(self) -> int:
        return self.attn.degree if self.attn.kind is ShardKind.TP else 1

    @property
    def attn_replicas(self) -> int:
        return self.width // self.attn_tp

    @property
    def ffn_replicas(self) -> int:
        return self.width // self.ffn.degree

    @property
    def label(self) -> str:
        parts = [f"A{self.attn}", f"F{self.ffn}", f"PP{self.pp_stages}"]
        if self.cpp_chunk_tokens:
            parts.append(f"C{self.cpp_chunk_tokens}")
        return "/".join(parts)

    def sort_key(self) -> tuple:
        return (
            self.attn.kind.value,
            self.attn.degree,
            self.ffn.kind.value,
            self.ffn.degree,
            self.pp_stages,
            self.cpp_chunk_tokens or 0,
        )

    def validate_for(self, model: ModelArch, hw: HardwareSpec) -> None:
        if self.attn_tp > model.num_q_heads or model.num_q_heads % self.attn_tp:
            raise MappingError(f"attention TP {self.attn_tp} does not divide {model.num_q_heads} query heads")
        if self.ffn.kind is ShardKind.EP:
            if not model.ffn.is_moe:
                raise MappingError("expert parallelism requires an MoE FFN")
            if self.ffn.degree > model.ffn.num_experts:
                raise MappingError(f"EP {self.ffn.degree} exceeds {model.ffn.num_experts} experts")
        if self.width > hw.nvlink_domain_size:
            raise MappingError(
                f"stage width {self.width} exceeds NVLink domain of {hw.nvlink_domain_size} GPUs"
            )
        if self.pp_stages > model.num_layers:
            raise MappingError(f"{self.pp_stages} stages for {model.num_layers} layers")


# --------------------------------------------------------------------------- #
# Config ingestion
# --------------------------------------------------------------------------- #


@lru_cache(maxsize=1)
def config_schema() -> dict[str, Any]:
    text = resources.files("disaggplan").joinpath("config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class Document:
    """A fully parsed config document, including the optional sections."""

    model: ModelArch
    hardware: HardwareSpec
    traffic: TrafficPattern
    sla: SlaSpec
    search: dict[str, Any] = field(default_factory=dict)
    analysis: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def core(self) -> tuple[ModelArch, HardwareSpec, TrafficPattern, SlaSpec]:
        return self.model, self.hardware, self.traffic, self.sla

    def replace(self, **changes: Any) -> "Document":
        from dataclasses import replace

        return replace(self, **changes)


def _schema_field(error: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in error.absolute_path)
    if error.validator == "required":
        missing = error.message.split("'")[1]
        return f"{path}.{missing}" if path else missing
    if error.validator == "additionalProperties":
        extra = error.message.split("'")[1]
        return f"{path}.{extra}" if path else extra
    return path


def model_from_dict(d: dict[str, Any]) -> ModelArch:
    d = dict(d)
    att = d.pop("attention", {"kind": "gqa"})
    ffn = d.pop("ffn")
    return ModelArch(attention=Attention(**att), ffn=Ffn(**ffn), **d)


def hardware_from_dict(d: dict[str, Any]) -> HardwareSpec:
    return HardwareSpec(**d)


def traffic_from_dict(d: dict[str, Any]) -> TrafficPattern:
    d = dict(d)
    kind = d.pop("kind")
    if kind == "static":
        return Static(**d)
    samples = tuple((s["isl"], s["osl"], s["weight"]) for s in d.pop("samples"))
    return Empirical(samples=samples, **d)


def sla_from_dict(d: dict[str, Any]) -> SlaSpec:
    return SlaSpec(ttl_targets=tuple(d["ttl_targets"]), ftl_cutoff=d.get("ftl_cutoff", DEFAULT_FTL_CUTOFF))


def parse_document(doc: dict[str, Any]) -> Document:
    validator = jsonschema.Draft202012Validator(config_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        raise ConfigParseError(_schema_field(err), err.message)
    try:
        return Document(
            model=model_from_dict(doc["model"]),
            hardware=hardware_from_dict(doc["hardware"]),
            traffic=traffic_from_dict(doc["traffic"]),
            sla=sla_from_dict(doc["sla"]),
            search=dict(doc.get("search", {})),
            analysis=dict(doc.get("analysis", {})),
            raw=doc,
        )
    except MappingError as exc:  # pragma: no cover - mappings are not part of the document
        raise ConfigValidationError("", str(exc)) from exc


def load_document(text: str) -> Document:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigParseError("", "top level must be a JSON object")
    return parse_document(doc)


def load_config(text: str) -> tuple[ModelArch, HardwareSpec, TrafficPattern, SlaSpec]:
    """Parse and validate a config document into the four core sections."""
    return load_document(text).core


# serialization ----------------------------------------------------------------


def _drop_none(d: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in d.items() if v is not None}


def model_to_dict(m: ModelArch) -> dict[str, Any]:
    att: dict[str, Any] = {"kind": m.attention.kind.value}
    if m.attention.latent_dim is not None:
        att["latent_dim"] = m.attention.latent_dim
    ffn = _drop_none(
        {
            "kind": m.ffn.kind.value,
            "inter_dim": m.ffn.inter_dim,
            "num_experts": m.ffn.num_experts,
            "top_k": m.ffn.top_k,
            "expert_inter_dim": m.ffn.expert_inter_dim,
        }
    )
    return {
        "name": m.name,
        "num_layers": m.num_layers,
        "hidden_dim": m.hidden_dim,
        "num_q_heads": m.num_q_heads,
        "d_head": m.d_head,
        "num_kv_heads": m.num_kv_heads,
        "attention": att,
        "ffn": ffn,
        "vocab_size": m.vocab_size,
        "weight_bytes_per_param": m.weight_bytes_per_param,
        "activation_bytes": m.activation_bytes,
        "kv_element_bytes": m.kv_element_bytes,
        "kv_bytes_per_token_per_layer": m.kv_bytes_per_token_per_layer,
        "tie_embeddings": m.tie_embeddings,
    }


def hardware_to_dict(hw: HardwareSpec) -> dict[str, Any]:
    return {
        "name": hw.name,
        "flops_dense": hw.flops_dense,
        "hbm_bandwidth": hw.hbm_bandwidth,
        "hbm_capacity": hw.hbm_capacity,
        "nvlink_domain_size": hw.nvlink_domain_size,
        "nvlink_bw_per_gpu": hw.nvlink_bw_per_gpu,
        "scaleout_bw_per_gpu": hw.scaleout_bw_per_gpu,
        "per_message_latency": hw.per_message_latency,
        "compute_efficiency": hw.compute_efficiency,
    }


def traffic_to_dict(t: TrafficPattern) -> dict[str, Any]:
    if isinstance(t, Static):
        return {"kind": "static", "isl": t.isl, "osl": t.osl, "saturation": t.saturation}
    return {
        "kind": "empirical",
        "samples": [{"isl": i, "osl": o, "weight": w} for i, o, w in t.samples],
        "saturation": t.saturation,
    }


def sla_to_dict(s: SlaSpec) -> dict[str, Any]:
    return {"ftl_cutoff": s.ftl_cutoff, "ttl_targets": list(s.ttl_targets)}


def dump_document(doc: Document) -> dict[str, Any]:
    out: dict[str, Any] = {
        "model": model_to_dict(doc.model),
        "hardware": hardware_to_dict(doc.hardware),
        "traffic": traffic_to_dict(doc.traffic),
        "sla": sla_to_dict(doc.sla),
    }
    if doc.search:
        out["search"] = doc.search
    if doc.analysis:
        out["analysis"] = doc.analysis
    return out


def serialize_config(
    model: ModelArch, hw: HardwareSpec, traffic: TrafficPattern, sla: SlaSpec
) -> str:
    doc = {
        "model": model_to_dict(model),
        "hardware": hardware_to_dict(hw),
        "traffic": traffic_to_dict(traffic),
        "sla": sla_to_dict(sla),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def config_hash(doc: dict[str, Any]) -> str:
    """Hash of a document that ignores key order and whitespace."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
