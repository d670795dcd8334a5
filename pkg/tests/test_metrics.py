import math

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from quantscore.errors import DomainError
from quantscore.metrics import (
    Metric,
    MetricPoint,
    ThresholdSpec,
    acp,
    als,
    bits_of,
    group_value,
    intelligence_index,
    latency_penalty,
    make_report,
    rank_configs,
    refined_index,
    resolve_threshold,
    round_half_away,
    spatial_utility,
    threshold_ablation,
)

accuracies = st.floats(0.0, 1.0)
compressions = st.floats(0.5, 64.0)
latencies = st.floats(1e-3, 1e4)


def test_latency_penalty_one_ms_is_one():
    assert latency_penalty(1.0) == 1.0


def test_intelligence_index_oracle():
    # 4x compression, 99% accuracy, 1 ms -> 4 * 0.99 / log2(2)
    assert intelligence_index(MetricPoint("8", 0.99, 4.0, 1.0)) == pytest.approx(3.96)


def test_mnist_4bit_mean_inputs():
    point = MetricPoint("4", 0.9869, 8.0, 1.32)
    assert intelligence_index(point) == pytest.approx(6.5028, abs=1e-4)


def test_refined_index_zero_at_or_below_threshold():
    assert refined_index(MetricPoint("2", 0.35, 8.0, 15.0), 0.60) == 0.0
    assert refined_index(MetricPoint("2", 0.60, 8.0, 15.0), 0.60) == 0.0


def test_refined_index_rejects_bad_threshold():
    with pytest.raises(DomainError):
        refined_index(MetricPoint("8", 0.9, 4.0, 1.0), 1.0)
    with pytest.raises(DomainError):
        refined_index(MetricPoint("8", 0.9, 4.0, 1.0), -0.1)


def test_zero_threshold_makes_indices_equal():
    point = MetricPoint("8", 0.9, 4.0, 2.0)
    assert refined_index(point, 0.0) == intelligence_index(point)


@pytest.mark.parametrize(
    "k,fp,delta,expected",
    [
        (10, 0.9921, 0.19, 0.8021),
        (10, 0.7981, 0.30, 0.4981),
        (100, 0.4798, 0.43, 0.0498),
        (1000, 0.6976, 0.60, 0.0976),
        (10, 0.9493, 0.45, 0.4993),
        (10, 0.50, 0.45, 0.10),  # random-chance floor binds
    ],
)
def test_resolve_threshold(k, fp, delta, expected):
    assert resolve_threshold(ThresholdSpec(k, fp, delta)) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("bad", [dict(num_classes_k=0), dict(fp_accuracy=1.5), dict(delta=-0.1)])
def test_threshold_spec_validation(bad):
    args = dict(num_classes_k=10, fp_accuracy=0.9, delta=0.1)
    args.update(bad)
    with pytest.raises(DomainError):
        ThresholdSpec(**args)


@pytest.mark.parametrize(
    "args", [("x", -0.1, 1.0, 1.0), ("x", 1.1, 1.0, 1.0), ("x", 0.5, 0.0, 1.0), ("x", 0.5, 1.0, 0.0), ("x", 0.5, 1.0, math.inf)]
)
def test_metric_point_domain(args):
    with pytest.raises(DomainError):
        MetricPoint(*args)


def test_baselines():
    point = MetricPoint("8", 0.8, 4.0, 3.0)
    assert acp(point) == pytest.approx(3.2)
    assert als(point) == pytest.approx(0.4)
    assert spatial_utility(4.0, 0.8) == acp(point)


def test_report_fields():
    d = make_report(MetricPoint("8", 0.8, 4.0, 3.0), 0.5).as_dict()
    assert d["I"] == pytest.approx(1.6)
    assert d["I_prime"] == pytest.approx(0.6)
    assert set(d) == {"bits", "P", "C", "T", "thresh", "U", "I", "I_prime", "ACP", "ALS"}


@given(accuracies, compressions, latencies, st.floats(0.0, 0.999))
def test_gated_index_bounded_by_raw(p, c, t, thresh):
    point = MetricPoint("x", p, c, t)
    g = refined_index(point, thresh)
    assert 0.0 <= g <= intelligence_index(point) + 1e-12


@given(accuracies, accuracies, compressions, latencies)
def test_monotone_in_accuracy(p1, p2, c, t):
    lo, hi = sorted((p1, p2))
    assert intelligence_index(MetricPoint("x", lo, c, t)) <= intelligence_index(MetricPoint("x", hi, c, t))


@given(accuracies, compressions, latencies, latencies)
def test_monotone_in_latency(p, c, t1, t2):
    lo, hi = sorted((t1, t2))
    assert intelligence_index(MetricPoint("x", p, c, lo)) >= intelligence_index(MetricPoint("x", p, c, hi))


@given(
    st.lists(st.tuples(st.floats(0.01, 1.0), compressions, latencies), min_size=2, max_size=6),
    st.sampled_from([math.e, 10.0]),
)
def test_ranking_invariant_to_log_base(rows, base):
    points = [MetricPoint(str(2 ** (i + 1)), p, c, t) for i, (p, c, t) in enumerate(rows)]
    values = sorted(intelligence_index(p) for p in points)
    assume(all(b - a > 1e-9 * b for a, b in zip(values, values[1:])))
    assert rank_configs(points, Metric.I, base=base) == rank_configs(points, Metric.I)


def test_rank_configs_ordering_and_ties():
    points = [MetricPoint("32", 0.5, 1.0, 1.0), MetricPoint("16", 0.25, 2.0, 1.0), MetricPoint("8", 0.9, 4.0, 1.0)]
    # 32 and 16 tie on ACP; the higher bit-width ranks first
    assert rank_configs(points, Metric.ACP) == [("8", 1), ("32", 2), ("16", 3)]


def test_rank_requires_threshold_for_gated_metric():
    with pytest.raises(DomainError):
        rank_configs([MetricPoint("8", 0.9, 4.0, 1.0)], "I_prime")


def test_rank_empty():
    with pytest.raises(DomainError):
        rank_configs([], Metric.I)


def test_group_value_is_mean_of_per_seed_values():
    group = [MetricPoint("4", 0.9, 8.0, t) for t in (1.0, 3.0)]
    expected = (7.2 / 1.0 + 7.2 / 2.0) / 2
    assert group_value(group, intelligence_index) == pytest.approx(expected)


def test_group_rejects_mixed_labels():
    with pytest.raises(DomainError):
        group_value([MetricPoint("4", 0.9, 8.0, 1.0), MetricPoint("8", 0.9, 4.0, 1.0)], acp)


def test_threshold_ablation_shifts_peak():
    points = [MetricPoint("8", 0.99, 4.0, 1.0), MetricPoint("4", 0.90, 8.0, 1.0), MetricPoint("2", 0.10, 16.0, 1.0)]
    rows = threshold_ablation(points, ThresholdSpec(10, 0.99, 0.0), [0.0, 0.05, 0.5])
    assert [r.best_label for r in rows] == [None, "8", "4"]
    assert rows[0].peak_i_prime == 0.0
    assert rows[2].threshold == pytest.approx(0.49)


def test_bits_of():
    assert bits_of("32 (FP)") == 32
    assert bits_of("8-8-8-4") == 7.0
    with pytest.raises(DomainError):
        bits_of("fp")


def test_round_half_away():
    assert round_half_away(2.0005) == 2.001
    assert round_half_away(-2.0005) == -2.001
    assert round_half_away(0.1235, 3) == 0.124
