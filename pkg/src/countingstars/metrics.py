"""Accuracy metrics (ARE, WMRE, RE) and memory-sweep aggregation."""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyTruth, MissingGridPoint, ZeroTruth

REPORT_COLUMNS = (
    "scenario", "scheme", "load", "memory_bytes", "epoch", "are", "wmre", "re",
    "saturations", "false_positives", "prediction_misses",
)


def _support(truth: Mapping) -> dict:
    return {k: v for k, v in truth.items() if v > 0}


def are(truth: Mapping[Hashable, float], est: Mapping[Hashable, float]) -> float:
    """Mean of |f - f_hat| / f over flows with positive truth; missing estimates are 0."""
    support = _support(truth)
    if not support:
        raise EmptyTruth("no flows with positive truth")
    return math.fsum(abs(f - est.get(k, 0)) / f for k, f in support.items()) / len(support)


def size_histogram(values: Iterable[float]) -> Counter:
    return Counter(int(round(v)) for v in values)


def wmre(truth: Mapping[Hashable, float], est: Mapping[Hashable, float]) -> float:
    """Weighted mean relative error between true and estimated size histograms.

    The estimated histogram is built from the estimates of the true flows.
    Size 0 is excluded on both sides.
    """
    support = _support(truth)
    if not support:
        raise EmptyTruth("no flows with positive truth")
    n_true = size_histogram(support.values())
    n_est = size_histogram(est.get(k, 0) for k in support)
    z = max(max(n_true), max(n_est, default=0))
    num = den = 0.0
    for i in range(1, z + 1):
        a, b = n_true.get(i, 0), n_est.get(i, 0)
        num += abs(a - b)
        den += (a + b) / 2.0
    return num / den if den else 0.0


def re(true_total: float, est_total: float) -> float:
    if true_total <= 0:
        raise ZeroTruth("relative error needs a positive true value")
    return abs(true_total - est_total) / true_total


@dataclass(frozen=True)
class MetricSet:
    are: float
    wmre: float
    re: float
    n_flows: int
    false_positives: int = 0
    memory_bytes: int = 0
    scheme: str = ""
    scenario: str = ""

    def __post_init__(self):
        for name in ("are", "wmre", "re"):
            v = getattr(self, name)
            if not (v >= 0 or math.isnan(v)):
                raise ValueError(f"{name} must be non-negative, got {v}")


def evaluate(
    truth: Mapping[Hashable, float],
    est: Mapping[Hashable, float],
    re_aggregate: str = "cardinality",
    **labels,
) -> MetricSet:
    """All three metrics for one (scheme, epoch); keys are atomic (sat, flow, port) units.

    ``re_aggregate`` picks what RE compares: ``cardinality`` (number of keys
    with a nonzero value) or ``volume`` (total units over truth's support).
    """
    support = _support(truth)
    fp = sum(1 for k, v in est.items() if v > 0 and k not in support)
    if not support:
        est_card = sum(1 for v in est.values() if v > 0)
        return MetricSet(0.0, 0.0, 0.0 if est_card == 0 else math.nan, 0, fp, **labels)
    if re_aggregate == "cardinality":
        true_total = len(support)
        est_total = sum(1 for v in est.values() if v > 0)
    elif re_aggregate == "volume":
        true_total = math.fsum(support.values())
        est_total = math.fsum(est.get(k, 0) for k in support)
    else:
        raise ValueError(f"unknown RE aggregate {re_aggregate!r}")
    return MetricSet(are(support, est), wmre(support, est), re(true_total, est_total), len(support), fp, **labels)


def sweep(
    rows: Sequence[Mapping],
    memory_grid: Sequence[int],
    schemes: Sequence[str] | None = None,
) -> list[dict]:
    """Mean/stdev of each metric per (scheme, memory) over epochs and seeds.

    ``rows`` are report rows (see REPORT_COLUMNS); extra keys are ignored.
    """
    groups: dict[tuple, list] = defaultdict(list)
    for r in rows:
        groups[(r["scheme"], int(r["memory_bytes"]))].append(r)
    schemes = sorted({s for s, _ in groups}) if schemes is None else list(schemes)
    out = []
    for scheme in schemes:
        for mem in memory_grid:
            cell = groups.get((scheme, int(mem)))
            if not cell:
                raise MissingGridPoint(f"no results for scheme={scheme} memory={mem}")
            row = {"scheme": scheme, "memory_bytes": int(mem), "n": len(cell)}
            for metric in ("are", "wmre", "re"):
                vals = np.array([float(r[metric]) for r in cell], dtype=float)
                vals = vals[~np.isnan(vals)]
                row[f"{metric}_mean"] = float(vals.mean()) if len(vals) else math.nan
                row[f"{metric}_std"] = float(vals.std()) if len(vals) else math.nan
            out.append(row)
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows_csv(rows: Iterable[Mapping], fh, columns: Sequence[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])


def read_rows_csv(fh) -> list[dict]:
    return list(csv.DictReader(fh))


SWEEP_COLUMNS = (
    "scheme", "memory_bytes", "n",
    "are_mean", "are_std", "wmre_mean", "wmre_std", "re_mean", "re_std",
)
