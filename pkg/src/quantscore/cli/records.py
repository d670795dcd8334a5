"""Self-verifying run records.

A record stores, per seed and configuration, the raw (P, C, T) inputs, the
threshold and every derived index. :func:`verify_record` recomputes all
derived values from the raw inputs and refuses records that disagree by
more than 1e-9, so a hand-edited or corrupted record is caught on load.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean, stdev

from ..errors import DomainError, IntegrityError, QuantScoreError
from ..metrics import MetricPoint, bits_of, make_report

SCHEMA_VERSION = 1
# Derived values are recomputed with the same arithmetic and JSON floats
# round-trip exactly, so any difference at all (even one ulp from an edited
# last digit) means the record was altered.
TOLERANCE = 0.0
DERIVED = ("U", "I", "I_prime", "ACP", "ALS")
CSV_COLUMNS = ("bits", "P_mean", "P_std", "C", "T_mean", "T_std", "I_mean", "I_std", "Iprime_mean", "Iprime_std")


class RecordFormatError(QuantScoreError):
    exit_code = 2


def result_entry(seed: int, point: MetricPoint, thresh: float) -> dict:
    """One per-seed result row: raw inputs plus every derived index."""
    entry = {"seed": seed}
    entry.update(make_report(point, thresh).as_dict())
    return entry


def _std(values) -> float:
    # sample (n - 1) standard deviation; a single replicate has spread 0
    return stdev(values) if len(values) > 1 else 0.0


def summarize(results: list[dict]) -> list[dict]:
    """Aggregate per-seed rows into one row per configuration.

    Index columns are means of per-seed indices. Rows keep first-seen order.
    """
    groups: dict[str, list[dict]] = {}
    for r in results:
        groups.setdefault(r["bits"], []).append(r)
    rows = []
    for label, rs in groups.items():
        rows.append({
            "bits": label,
            "P_mean": mean(r["P"] for r in rs),
            "P_std": _std([r["P"] for r in rs]),
            "C": mean(r["C"] for r in rs),
            "T_mean": mean(r["T"] for r in rs),
            "T_std": _std([r["T"] for r in rs]),
            "I_mean": mean(r["I"] for r in rs),
            "I_std": _std([r["I"] for r in rs]),
            "Iprime_mean": mean(r["I_prime"] for r in rs),
            "Iprime_std": _std([r["I_prime"] for r in rs]),
            "n": len(rs),
        })
    return rows


def knee(rows: list[dict]) -> str | None:
    """Label of the row with the highest mean gated index (ties to more bits)."""
    if not rows:
        return None
    best = max(rows, key=lambda r: (r["Iprime_mean"], bits_of(r["bits"])))
    return best["bits"] if best["Iprime_mean"] > 0 else None


@dataclass
class RunRecord:
    command: str
    config: dict
    seeds: list
    threshold: dict  # {"num_classes_k", "fp_accuracy", "delta", "value"}
    results: list  # per-seed result entries
    environment: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)  # command-specific payload (GA log, flags, ...)
    timestamp: str = ""
    run_id: str = ""

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        if not self.run_id:
            blob = json.dumps([self.command, self.config, self.timestamp], sort_keys=True, default=str)
            self.run_id = f"{self.command}-{hashlib.sha256(blob.encode()).hexdigest()[:12]}"

    @property
    def summary(self) -> list[dict]:
        return summarize(self.results)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "timestamp": self.timestamp,
            "command": self.command,
            "config": self.config,
            "seeds": list(self.seeds),
            "threshold": self.threshold,
            "results": self.results,
            "summary": self.summary,
            "environment": self.environment,
            "artifacts": self.artifacts,
            "extra": self.extra,
        }

    @classmethod
    def from_json(cls, d: dict) -> "RunRecord":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise RecordFormatError(f"unsupported record schema {d.get('schema_version')!r}")
        try:
            return cls(
                command=d["command"],
                config=d["config"],
                seeds=d["seeds"],
                threshold=d["threshold"],
                results=d["results"],
                environment=d.get("environment", {}),
                artifacts=d.get("artifacts", {}),
                extra=d.get("extra", {}),
                timestamp=d["timestamp"],
                run_id=d["run_id"],
            )
        except KeyError as exc:
            raise RecordFormatError(f"record lacks field {exc}") from exc

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n")
        return path


def _close(a, b) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=TOLERANCE)


def verify_record(data: dict) -> None:
    """Raise :class:`IntegrityError` if any stored index disagrees with recomputation."""
    thresh = data["threshold"]["value"]
    for n, r in enumerate(data["results"]):
        where = f"result {n} (bits {r.get('bits')}, seed {r.get('seed')})"
        try:
            if not _close(r["thresh"], thresh):
                raise IntegrityError(f"{where}: threshold {r['thresh']} differs from record threshold {thresh}")
            expected = make_report(MetricPoint(r["bits"], r["P"], r["C"], r["T"]), r["thresh"]).as_dict()
        except KeyError as exc:
            raise RecordFormatError(f"{where} lacks field {exc}") from exc
        except DomainError as exc:
            raise IntegrityError(f"{where}: raw inputs are invalid: {exc}") from exc
        for key in DERIVED:
            if key not in r:
                raise RecordFormatError(f"{where} lacks field {key!r}")
            if not _close(r[key], expected[key]):
                raise IntegrityError(f"{where}: stored {key}={r[key]!r}, recomputed {expected[key]!r}")
    stored = data.get("summary")
    if stored is not None:
        fresh = summarize(data["results"])
        if len(stored) != len(fresh):
            raise IntegrityError("summary row count differs from the results")
        for s, f in zip(stored, fresh):
            for key, value in f.items():
                ok = s.get(key) == value if key in ("bits", "n") else _close(s.get(key, math.nan), value)
                if not ok:
                    raise IntegrityError(f"summary row {f['bits']}: stored {key}={s.get(key)!r}, recomputed {value!r}")


def load_record(path) -> RunRecord:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise RecordFormatError(f"cannot read record {path}: {exc}") from exc
    except ValueError as exc:
        raise RecordFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise RecordFormatError(f"{path}: record must be a JSON object")
    record = RunRecord.from_json(data)
    verify_record(data)
    return record
