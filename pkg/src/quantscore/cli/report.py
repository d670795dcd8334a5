"""Deterministic rendering of run records: CSV, JSON, text tables and plot data.

Output depends only on record contents, never on the clock or dict order,
so rendering the same records twice is byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from ..metrics import Metric, MetricPoint, ThresholdSpec, bits_of, rank_configs, threshold_ablation
from .records import CSV_COLUMNS, RunRecord, knee

METRICS = (Metric.I, Metric.I_PRIME, Metric.ACP, Metric.ALS)
DELTA_GRID = tuple(round(0.05 * i, 2) for i in range(21))


def _fmt(value) -> str:
    return value if isinstance(value, str) else f"{value:.6f}"


def table_rows(record: RunRecord) -> list[dict]:
    return record.summary


def render_csv(record: RunRecord) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in table_rows(record):
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def replicate_groups(record: RunRecord) -> dict[str, list[MetricPoint]]:
    groups: dict[str, list[MetricPoint]] = {}
    for r in record.results:
        groups.setdefault(r["bits"], []).append(MetricPoint(r["bits"], r["P"], r["C"], r["T"]))
    return groups


def rankings(record: RunRecord) -> dict[str, dict[str, int]]:
    """Rank every configuration under each metric, from its per-seed replicates."""
    groups = replicate_groups(record)
    thresh = record.threshold["value"]
    out = {}
    for metric in METRICS:
        ranking = dict(rank_configs(list(groups.values()), metric, thresh))
        out[metric.value] = {label: ranking[label] for label in groups}
    return out


def record_summary(record: RunRecord) -> dict:
    rows = table_rows(record)
    return {
        "run_id": record.run_id,
        "command": record.command,
        "threshold": record.threshold,
        "table": rows,
        "pareto_knee": knee(rows),
        "rankings": rankings(record),
    }


def render_json(records: list[RunRecord]) -> str:
    return json.dumps({"records": [record_summary(r) for r in records]}, indent=2, sort_keys=True) + "\n"


def render_table(record: RunRecord) -> str:
    rows = table_rows(record)
    best = knee(rows)
    ranks = rankings(record)
    lines = [
        f"run {record.run_id}  ({record.command}, thresh={record.threshold['value']:.4f})",
        f"{'bits':<10} {'P (%)':>16} {'C':>6} {'T (ms)':>18} {'I':>16} {'I_prime':>16}",
    ]
    for r in rows:
        mark = "  <- knee" if r["bits"] == best else ""
        lines.append(
            f"{r['bits']:<10} {100 * r['P_mean']:>7.2f} ± {100 * r['P_std']:<6.2f} {r['C']:>6.2f} "
            f"{r['T_mean']:>8.3f} ± {r['T_std']:<7.3f} {r['I_mean']:>7.3f} ± {r['I_std']:<6.3f} "
            f"{r['Iprime_mean']:>7.3f} ± {r['Iprime_std']:<6.3f}{mark}"
        )
    lines.append("")
    lines.append(f"{'bits':<10} " + " ".join(f"{m.value + ' rank':>13}" for m in METRICS))
    for r in rows:
        lines.append(f"{r['bits']:<10} " + " ".join(f"{ranks[m.value][r['bits']]:>13d}" for m in METRICS))
    return "\n".join(lines) + "\n"


def plot_series(record: RunRecord) -> dict[str, tuple[tuple[str, str], list[tuple]]]:
    """Plot-ready series: name -> ((x axis, y axis), points)."""
    rows = table_rows(record)
    series = {}
    for column, name in (
        ("I_mean", "index_vs_bits"),
        ("Iprime_mean", "gated_index_vs_bits"),
        ("P_mean", "accuracy_vs_bits"),
        ("T_mean", "latency_vs_bits"),
    ):
        series[name] = (("mean_bits", column), [(bits_of(r["bits"]), r[column]) for r in rows])
    series["pareto_scatter"] = (
        ("compression_C", "accuracy_P"),
        [(r["C"], r["P"]) for r in record.results],
    )
    for metric, ranks in rankings(record).items():
        series[f"rank_{metric}"] = (("mean_bits", f"{metric}_rank"), [(bits_of(k), v) for k, v in ranks.items()])
    if record.results:
        t = record.threshold
        spec = ThresholdSpec(t["num_classes_k"], t["fp_accuracy"], t["delta"])
        ablation = threshold_ablation(list(replicate_groups(record).values()), spec, DELTA_GRID)
        series["threshold_ablation"] = (("delta", "peak_Iprime"), [(row.delta, row.peak_i_prime) for row in ablation])
    return series


def write_plotdata(record: RunRecord, out_dir) -> list[Path]:
    """One whitespace-separated file per series, first line naming the axes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, ((x_axis, y_axis), points) in plot_series(record).items():
        path = out_dir / f"{record.run_id}.{name}.dat"
        body = [f"{x_axis}\t{y_axis}"] + [f"{_fmt(float(x))}\t{_fmt(float(y))}" for x, y in points]
        path.write_text("\n".join(body) + "\n")
        paths.append(path)
    return paths
