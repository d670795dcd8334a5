"""Efficiency indices for quantized models.

All functions take accuracy as a fraction in [0, 1], compression as a
dimensionless ratio and latency in milliseconds. Everything is computed in
float64 and is side-effect free.

A "replicate group" below means several :class:`MetricPoint` objects that
describe the same configuration measured under different seeds. Indices over
a group are the mean of the per-seed indices, not the index of the mean
inputs; the two differ because the latency penalty is nonlinear.
"""

from __future__ import annotations

import math
import numbers
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Callable, Sequence, Union

from .errors import DomainError

__all__ = [
    "Metric",
    "MetricPoint",
    "MetricReport",
    "ThresholdSpec",
    "AblationRow",
    "spatial_utility",
    "latency_penalty",
    "intelligence_index",
    "resolve_threshold",
    "refined_index",
    "acp",
    "als",
    "metric_value",
    "group_value",
    "make_report",
    "rank_configs",
    "threshold_ablation",
    "bits_of",
    "round_half_away",
]


@dataclass(frozen=True)
class MetricPoint:
    bits_label: str
    accuracy_p: float
    compression_c: float
    latency_t_ms: float

    def __post_init__(self):
        _check_accuracy(self.accuracy_p)
        _check_compression(self.compression_c)
        _check_latency(self.latency_t_ms)
        for name in ("accuracy_p", "compression_c", "latency_t_ms"):
            object.__setattr__(self, name, float(getattr(self, name)))


@dataclass(frozen=True)
class ThresholdSpec:
    num_classes_k: int
    fp_accuracy: float
    delta: float

    def __post_init__(self):
        if int(self.num_classes_k) != self.num_classes_k or self.num_classes_k <= 0:
            raise DomainError(f"num_classes_k must be a positive integer, got {self.num_classes_k}")
        _check_accuracy(self.fp_accuracy, "fp_accuracy")
        if not 0.0 <= self.delta <= 1.0:
            raise DomainError(f"delta must lie in [0, 1], got {self.delta}")

    def resolve(self) -> float:
        return resolve_threshold(self)


@dataclass(frozen=True)
class MetricReport:
    point: MetricPoint
    threshold: float
    spatial_utility_u: float
    index_i: float
    index_i_prime: float
    acp: float
    als: float

    def as_dict(self) -> dict:
        return {
            "bits": self.point.bits_label,
            "P": self.point.accuracy_p,
            "C": self.point.compression_c,
            "T": self.point.latency_t_ms,
            "thresh": self.threshold,
            "U": self.spatial_utility_u,
            "I": self.index_i,
            "I_prime": self.index_i_prime,
            "ACP": self.acp,
            "ALS": self.als,
        }


class Metric(str, Enum):
    I = "I"
    I_PRIME = "I_prime"
    ACP = "ACP"
    ALS = "ALS"


def _check_accuracy(p, name="accuracy"):
    if not (isinstance(p, numbers.Real) and 0.0 <= p <= 1.0):
        raise DomainError(f"{name} must be a fraction in [0, 1], got {p!r}")


def _check_compression(c):
    if not (isinstance(c, numbers.Real) and math.isfinite(c) and c > 0):
        raise DomainError(f"compression must be a positive finite ratio, got {c!r}")


def _check_latency(t_ms):
    if not (isinstance(t_ms, numbers.Real) and math.isfinite(t_ms) and t_ms > 0):
        raise DomainError(f"latency must be a positive number of milliseconds, got {t_ms!r}")


def spatial_utility(c: float, p: float) -> float:
    """Compression times accuracy."""
    _check_compression(c)
    _check_accuracy(p)
    return float(c) * float(p)


def latency_penalty(t_ms: float, base: float = 2.0) -> float:
    """``log_base(t_ms + 1)``. ``base`` exists only for base-invariance checks."""
    _check_latency(t_ms)
    return math.log(float(t_ms) + 1.0) / math.log(base)


def intelligence_index(point: MetricPoint, base: float = 2.0) -> float:
    return spatial_utility(point.compression_c, point.accuracy_p) / latency_penalty(
        point.latency_t_ms, base
    )


def resolve_threshold(spec: ThresholdSpec) -> float:
    """Viability floor: the larger of random chance and ``P_FP - delta``."""
    if spec.num_classes_k == 0:
        raise DomainError("num_classes_k must be nonzero")
    return max(1.0 / spec.num_classes_k, spec.fp_accuracy - spec.delta)


def refined_index(point: MetricPoint, thresh: float, base: float = 2.0) -> float:
    """Accuracy-gated index; exactly 0.0 whenever accuracy <= thresh."""
    if not 0.0 <= thresh < 1.0:
        raise DomainError(f"threshold must lie in [0, 1), got {thresh!r}")
    margin = max(point.accuracy_p - thresh, 0.0)
    return point.compression_c * margin / latency_penalty(point.latency_t_ms, base)


def acp(point: MetricPoint) -> float:
    return spatial_utility(point.compression_c, point.accuracy_p)


def als(point: MetricPoint, base: float = 2.0) -> float:
    return point.accuracy_p / latency_penalty(point.latency_t_ms, base)


def metric_value(point: MetricPoint, metric, thresh: float | None = None, base: float = 2.0) -> float:
    metric = Metric(metric)
    if metric is Metric.I:
        return intelligence_index(point, base)
    if metric is Metric.I_PRIME:
        if thresh is None:
            raise DomainError("the gated index needs a threshold")
        return refined_index(point, thresh, base)
    if metric is Metric.ACP:
        return acp(point)
    return als(point, base)


def make_report(point: MetricPoint, thresh: float) -> MetricReport:
    return MetricReport(
        point=point,
        threshold=thresh,
        spatial_utility_u=spatial_utility(point.compression_c, point.accuracy_p),
        index_i=intelligence_index(point),
        index_i_prime=refined_index(point, thresh),
        acp=acp(point),
        als=als(point),
    )


PointOrGroup = Union[MetricPoint, Sequence[MetricPoint]]


def _as_group(item: PointOrGroup) -> list[MetricPoint]:
    if isinstance(item, MetricPoint):
        return [item]
    group = list(item)
    if not group:
        raise DomainError("empty replicate group")
    labels = {p.bits_label for p in group}
    if len(labels) != 1:
        raise DomainError(f"replicate group mixes configurations: {sorted(labels)}")
    return group


def group_value(item: PointOrGroup, fn: Callable[[MetricPoint], float]) -> float:
    """Mean of ``fn`` over the seeds of a replicate group."""
    group = _as_group(item)
    return math.fsum(fn(p) for p in group) / len(group)


_NUMBER = re.compile(r"\d+(?:\.\d+)?")


def bits_of(label: str) -> float:
    """Mean bit-width encoded in a label such as ``"8"``, ``"32 (FP)"`` or ``"8-8-8-4"``."""
    head = label.split("(")[0]
    values = [float(v) for v in _NUMBER.findall(head)]
    if not values:
        raise DomainError(f"no bit-width in label {label!r}")
    return sum(values) / len(values)


def rank_configs(
    points: Sequence[PointOrGroup],
    metric,
    thresh: float | None = None,
    base: float = 2.0,
) -> list[tuple[str, int]]:
    """Rank configurations by descending metric value (rank 1 = best).

    Equal scores are ordered by higher mean bit-width first.
    """
    if not points:
        raise DomainError("cannot rank an empty list of configurations")
    metric = Metric(metric)
    if metric is Metric.I_PRIME and thresh is None:
        raise DomainError("ranking by the gated index needs a threshold")
    scored = []
    for item in points:
        group = _as_group(item)
        label = group[0].bits_label
        value = group_value(group, lambda p: metric_value(p, metric, thresh, base))
        scored.append((value, bits_of(label), label))
    scored.sort(key=lambda s: (-s[0], -s[1]))
    return [(label, rank) for rank, (_, _, label) in enumerate(scored, start=1)]


@dataclass(frozen=True)
class AblationRow:
    delta: float
    threshold: float
    best_label: str | None
    peak_i_prime: float


def threshold_ablation(
    points: Sequence[PointOrGroup],
    spec: ThresholdSpec,
    delta_grid: Sequence[float],
) -> list[AblationRow]:
    """Sweep the tolerance ``delta`` and record the peak gated index for each value.

    ``best_label`` is None when every configuration is gated to zero.
    """
    if not delta_grid:
        raise DomainError("delta grid is empty")
    rows = []
    for delta in delta_grid:
        thresh = resolve_threshold(
            ThresholdSpec(spec.num_classes_k, spec.fp_accuracy, float(delta))
        )
        ranking = rank_configs(points, Metric.I_PRIME, thresh)
        by_label = {}
        for item in points:
            group = _as_group(item)
            by_label[group[0].bits_label] = group_value(group, lambda p: refined_index(p, thresh))
        top = ranking[0][0]
        peak = by_label[top]
        rows.append(AblationRow(float(delta), thresh, top if peak > 0 else None, peak))
    return rows


def round_half_away(x: float, ndigits: int = 3) -> float:
    """Round half away from zero (``round`` uses banker's rounding)."""
    q = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))
