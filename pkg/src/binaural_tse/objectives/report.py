"""Per-example metric rows, aggregation and pluggable external scorers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .metrics import sdr, si_sdr

MetricFn = Callable[[np.ndarray, np.ndarray, int], float]

_PROVIDERS: dict[str, Callable[[], MetricFn | None]] = {}


def register_metric(name: str, factory: Callable[[], MetricFn | None]) -> None:
    """Register ``factory`` returning ``fn(estimate, reference, sample_rate) -> float`` or None if unavailable."""
    _PROVIDERS[name] = factory


def get_metric(name: str) -> MetricFn | None:
    if name not in _PROVIDERS:
        raise KeyError(f"unknown metric {name!r}; known: {sorted(_PROVIDERS)}")
    return _PROVIDERS[name]()


def known_metrics() -> list[str]:
    return sorted(_PROVIDERS)


def _pesq_factory():
    try:
        from pesq import pesq
    except ImportError:
        return None
    return lambda est, ref, sr: float(pesq(sr, ref, est, "wb"))


def _stoi_factory():
    try:
        from pystoi import stoi
    except ImportError:
        return None
    return lambda est, ref, sr: float(stoi(ref, est, sr, extended=False))


register_metric("si_sdr", lambda: lambda est, ref, sr: float(si_sdr(est, ref)))
register_metric("sdr", lambda: lambda est, ref, sr: float(sdr(est, ref)))
register_metric("pesq", _pesq_factory)
register_metric("stoi", _stoi_factory)

METRIC_FIELDS = {"si_sdr": "si_sdr_db", "sdr": "sdr_db", "pesq": "pesq", "stoi": "stoi"}


@dataclass
class MetricReport:
    """Rows are dicts with ``example_id``, ``system`` and one field per computed metric.

    Metrics that were not computed are absent from a row, never zero.
    """

    rows: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    unavailable: list[str] = field(default_factory=list)

    def add(self, example_id: str, system: str, **values) -> None:
        self.rows.append({"example_id": example_id, "system": system, **values})

    def fail(self, example_id: str, error: str) -> None:
        self.failures.append({"example_id": example_id, "error": error})

    def summary(self) -> dict:
        systems: dict[str, dict] = {}
        for row in self.rows:
            s = systems.setdefault(row["system"], {"count": 0, "_sums": {}, "_counts": {}})
            s["count"] += 1
            for k, v in row.items():
                if k in ("example_id", "system") or v is None:
                    continue
                s["_sums"][k] = s["_sums"].get(k, 0.0) + v
                s["_counts"][k] = s["_counts"].get(k, 0) + 1
        out = {}
        for name, s in sorted(systems.items()):
            means = {f"mean_{k}": s["_sums"][k] / s["_counts"][k] for k in sorted(s["_sums"])}
            out[name] = {"count": s["count"], **means}
        return {
            "systems": out,
            "num_failures": len(self.failures),
            "unavailable_metrics": sorted(self.unavailable),
        }

    def merge(self, other: "MetricReport") -> "MetricReport":
        key = lambda r: (r["example_id"], r["system"])
        return MetricReport(
            rows=sorted(self.rows + other.rows, key=key),
            failures=sorted(self.failures + other.failures, key=lambda r: r["example_id"]),
            unavailable=sorted(set(self.unavailable) | set(other.unavailable)),
        )

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for row in self.rows:
                f.write(json.dumps(row) + "\n")
            for fail in self.failures:
                f.write(json.dumps({**fail, "system": "failed"}) + "\n")
            f.write(json.dumps({"summary": self.summary()}) + "\n")
        return path
