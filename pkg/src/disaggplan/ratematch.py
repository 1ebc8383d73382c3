"""Prefill selection and prefill/decode rate matching.

Rate matching balances request flow: a prefill pool of ``N_p`` GPUs emits
``N_p * P`` requests/s, a decode pool of ``N_d`` GPUs drains
``N_d * D`` requests/s with ``D = decode tokens/s/GPU / (OSL - 1)``.
Balance needs ``N_p / N_d = D / P``. That ratio is approximated by the
simplest rational within tolerance and then blown up by the least factor
that makes both pools whole instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

from .perfmodel import PhasePerf


class NoFeasiblePrefill(ValueError):
    pass


class RatioNotRealizable(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Rational:
    num: int
    den: int

    def __post_init__(self) -> None:
        if self.num < 1 or self.den < 1:
            raise ValueError("Rational needs positive numerator and denominator")
        if math.gcd(self.num, self.den) != 1:
            raise ValueError(f"{self.num}/{self.den} is not in lowest terms")

    @classmethod
    def of(cls, f: Fraction) -> "Rational":
        return cls(f.numerator, f.denominator)

    @property
    def value(self) -> float:
        return self.num / self.den

    def __float__(self) -> float:
        return self.value

    def __str__(self) -> str:
        return f"{self.num}/{self.den}"


def select_prefill(candidates: Sequence[PhasePerf], ftl_cutoff: float = 10.0) -> tuple[PhasePerf, float]:
    """Candidate maximizing ``batch / (FTL * gpus)`` among those with FTL under the cutoff.

    Ties go to fewer GPUs, then lower FTL.
    """
    best = None
    best_key = None
    for c in candidates:
        if not c.latency < ftl_cutoff:
            continue
        rate = c.batch / (c.latency * c.mapping.gpus)
        key = (-rate, c.mapping.gpus, c.latency)
        if best_key is None or key < best_key:
            best, best_key = (c, rate), key
    if best is None:
        raise NoFeasiblePrefill(f"no feasible prefill config with FTL < {ftl_cutoff} s")
    return best


def _simplest_between(lo: Fraction, hi: Fraction) -> Fraction:
    """Smallest-denominator fraction in the closed interval ``[lo, hi]`` (``0 < lo <= hi``)."""
    fl = math.floor(lo)
    if fl == lo:
        return Fraction(fl)
    if fl + 1 <= hi:
        return Fraction(fl + 1)
    # lo and hi share the integer part; recurse on the reciprocals of the fractional parts
    rest = _simplest_between(1 / (hi - fl), 1 / (lo - fl))
    return fl + 1 / rest


def rational_approx(x: float, tolerance: float = 0.03) -> Rational:
    """Minimum-denominator rational ``r`` with ``|r - x| / x <= tolerance``.

    Among rationals with that denominator the numerator closest to ``x`` is
    returned.
    """
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"x must be a positive finite number, got {x!r}")
    if not 0 < tolerance < 1:
        raise ValueError(f"tolerance must be in (0, 1), got {tolerance!r}")
    fx, ft = Fraction(x), Fraction(tolerance)
    den = _simplest_between(fx * (1 - ft), fx * (1 + ft)).denominator
    lo, hi = math.floor(fx * den), math.ceil(fx * den)
    num = min((n for n in (lo, hi) if n >= 1 and abs(Fraction(n, den) - fx) <= ft * fx),
              key=lambda n: (abs(Fraction(n, den) - fx), n))
    g = math.gcd(num, den)
    return Rational(num // g, den // g)


@dataclass(frozen=True)
class DeploymentPoint:
    prefill: PhasePerf
    decode: PhasePerf
    num_prefill_gpus: int
    num_decode_gpus: int
    alpha: Rational
    overall_tokens_per_sec_per_gpu: float
    interactivity: float
    prefill_rate: float = field(default=0.0, compare=False)
    decode_request_rate: float = field(default=0.0, compare=False)
    ratio: float = field(default=0.0, compare=False)
    ratio_slack: float = field(default=0.0, compare=False)
    instance_slack: float = field(default=0.0, compare=False)
    osl: int = field(default=0, compare=False)
    # sequences a decode instance actually holds; below the batch when prefill binds
    occupancy: float = field(default=0.0, compare=False)
    # time constant with which occupancy returns to that level, 0 when decode binds
    relaxation: float = field(default=0.0, compare=False)

    def __post_init__(self) -> None:
        if self.num_prefill_gpus % self.prefill.mapping.gpus:
            raise ValueError("prefill pool is not a whole number of instances")
        if self.num_decode_gpus % self.decode.mapping.gpus:
            raise ValueError("decode pool is not a whole number of instances")

    @property
    def total_gpus(self) -> int:
        return self.num_prefill_gpus + self.num_decode_gpus

    @property
    def ttl(self) -> float:
        return 1.0 / self.interactivity

    @property
    def ftl(self) -> float:
        return self.prefill.latency

    @property
    def prefill_flow(self) -> float:
        return self.num_prefill_gpus * self.prefill_rate

    @property
    def decode_flow(self) -> float:
        return self.num_decode_gpus * self.decode_request_rate

    @property
    def flow_imbalance(self) -> float:
        """``|prefill flow - decode flow| / decode flow``."""
        return abs(self.prefill_flow - self.decode_flow) / self.decode_flow

    def to_dict(self) -> dict:
        return {
            "prefill_mapping": self.prefill.mapping.label,
            "prefill_batch": self.prefill.batch,
            "decode_mapping": self.decode.mapping.label,
            "decode_batch": self.decode.batch,
            "num_prefill_gpus": self.num_prefill_gpus,
            "num_decode_gpus": self.num_decode_gpus,
            "alpha": str(self.alpha),
            "ftl": self.ftl,
            "ttl": self.ttl,
            "interactivity": self.interactivity,
            "overall_tokens_per_sec_per_gpu": self.overall_tokens_per_sec_per_gpu,
        }


def instance_blowup(alpha: Rational, prefill_gpus: int, decode_gpus: int) -> int:
    """Least ``s`` with ``alpha.num * s`` a multiple of ``prefill_gpus`` and ``alpha.den * s`` of ``decode_gpus``."""
    sp = prefill_gpus // math.gcd(alpha.num, prefill_gpus)
    sd = decode_gpus // math.gcd(alpha.den, decode_gpus)
    return math.lcm(sp, sd)


def _point(
    prefill: PhasePerf,
    prefill_rate: float,
    decode: PhasePerf,
    osl: int,
    alpha: Rational,
    ratio: float,
    gpu_budget: int | None,
) -> DeploymentPoint:
    s = instance_blowup(alpha, prefill.mapping.gpus, decode.mapping.gpus)
    n_p, n_d = alpha.num * s, alpha.den * s
    if gpu_budget is not None and n_p + n_d > gpu_budget:
        raise RatioNotRealizable(
            f"ratio {alpha} needs {n_p}+{n_d} GPUs, budget is {gpu_budget}"
        )
    d_rate = decode.per_gpu_token_rate / (osl - 1)
    served = min(n_p * prefill_rate, n_d * d_rate)
    return DeploymentPoint(
        prefill=prefill,
        decode=decode,
        num_prefill_gpus=n_p,
        num_decode_gpus=n_d,
        alpha=alpha,
        overall_tokens_per_sec_per_gpu=served * osl / (n_p + n_d),
        interactivity=1.0 / decode.latency,
        prefill_rate=prefill_rate,
        decode_request_rate=d_rate,
        ratio=ratio,
        ratio_slack=abs(alpha.value - ratio) / ratio,
        instance_slack=0.0,
        osl=osl,
        occupancy=float(decode.batch),
    )


def _check_osl(osl: int) -> None:
    if osl < 2:
        raise ValueError("osl must be >= 2")


def _realizable(points: list, errors: list[RatioNotRealizable]) -> list[DeploymentPoint]:
    # candidates over the GPU budget drop out; the budget is an error only if it rules out all of them
    if errors and not points:
        raise errors[0]
    return points


def rate_match(
    prefill_best: tuple[PhasePerf, float],
    decode_candidates: Sequence[PhasePerf],
    osl: int,
    tolerance: float = 0.03,
    *,
    gpu_budget: int | None = None,
) -> list[DeploymentPoint]:
    """One rate-matched deployment per decode candidate, in input order.

    Flow imbalance of every point is at most ``ratio_slack`` (itself within
    ``tolerance``); whole-instance rounding adds nothing because the
    blow-up keeps the ratio exact, so ``instance_slack`` is zero.
    Candidates whose pools exceed ``gpu_budget`` are left out.
    """
    _check_osl(osl)
    prefill, p_rate = prefill_best
    out, errors = [], []
    for d in decode_candidates:
        ratio = d.per_gpu_token_rate / (osl - 1) / p_rate
        try:
            out.append(_point(prefill, p_rate, d, osl, rational_approx(ratio, tolerance), ratio, gpu_budget))
        except RatioNotRealizable as exc:
            errors.append(exc)
    return _realizable(out, errors)


def fixed_ratio_match(
    prefill_best: tuple[PhasePerf, float],
    decode_candidates: Sequence[PhasePerf],
    osl: int,
    ratio: float,
    *,
    max_denominator: int = 1000,
    gpu_budget: int | None = None,
) -> list[DeploymentPoint]:
    """Deployments with ``N_p / N_d`` pinned to ``ratio``; the slower pool sets the rate.

    ``ratio`` is read as the nearest fraction with denominator at most
    ``max_denominator`` and realized exactly with the fewest whole instances.
    """
    _check_osl(osl)
    if not ratio > 0:
        raise ValueError("ratio must be positive")
    target = Fraction(ratio).limit_denominator(max_denominator)
    prefill, p_rate = prefill_best
    alpha = Rational.of(target)
    out, errors = [], []
    for d in decode_candidates:
        balanced = d.per_gpu_token_rate / (osl - 1) / p_rate
        try:
            out.append(_point(prefill, p_rate, d, osl, alpha, balanced, gpu_budget))
        except RatioNotRealizable as exc:
            errors.append(exc)
    return _realizable(out, errors)


def settle_occupancy(point: DeploymentPoint, step_time: Callable[[int], float]) -> DeploymentPoint:
    """``point`` with TTL taken at the decode occupancy its prefill flow sustains.

    A prefill-bound pool cannot keep decode batches full. In steady state
    each decode instance holds ``x`` sequences with
    ``x / ((OSL - 1) * T(x))`` equal to its share of the request flow,
    where ``T`` is the step time, ``step_time(n)`` for whole ``n`` and
    linear in between. Decode-bound points come back unchanged.
    """
    b = point.decode.batch
    if point.prefill_flow >= point.decode_flow or b <= 1:
        return point
    full = step_time(b)
    # the step cost may differ from the phase estimate by pipeline bookkeeping; keep T(b) = TTL
    scale = point.decode.latency / full

    def t(x: float) -> float:
        lo = math.floor(x)
        if lo >= b:
            return full * scale
        t0, t1 = step_time(lo), step_time(lo + 1)
        return (t0 + (t1 - t0) * (x - lo)) * scale

    lam = point.prefill_flow / (point.num_decode_gpus // point.decode.mapping.gpus) * (point.osl - 1)
    lo_x = float(max(1, point.decode.mapping.pp_stages))
    if lo_x / t(lo_x) >= lam:
        x = lo_x
    else:
        lo, hi = lo_x, float(b)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if mid / t(mid) < lam:
                lo = mid
            else:
                hi = mid
        x = hi
    # occupancy obeys dx/dt = flow - x / ((OSL - 1) T(x)); its time constant is 1 / slope
    h = 1e-3 * x
    a, c = max(lo_x, x - h), min(float(b), x + h)
    slope = (c / t(c) - a / t(a)) / ((c - a) * (point.osl - 1))
    return replace(point, interactivity=1.0 / t(x), occupancy=x, relaxation=1.0 / slope if slope > 0 else math.inf)


def best_per_target(points: Sequence[DeploymentPoint], ttl_targets: Sequence[float]) -> dict[float, DeploymentPoint | None]:
    """Highest-throughput point meeting each TTL target; ties go to fewer GPUs, then lower TTL."""
    out: dict[float, DeploymentPoint | None] = {}
    for target in ttl_targets:
        ok = [p for p in points if p.ttl <= target]
        out[target] = min(ok, key=lambda p: (-p.overall_tokens_per_sec_per_gpu, p.total_gpus, p.ttl)) if ok else None
    return out
