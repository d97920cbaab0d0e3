"""Input-length diagnostics: IQR cutoff for short texts and agreement by length."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .overreport import effective_marker
from .records import ActivityRecord
from .text import quantiles7, record_length

DEFAULT_BINS = 20


@dataclass
class LengthReport:
    q1: float
    median: float
    q3: float
    iqr: float
    cutoff: float
    n: int
    length_source: str = "long_description"
    per_donor: dict[str, tuple[float, int]] = field(default_factory=dict)
    per_year: dict[int, tuple[float, int]] = field(default_factory=dict)

    @property
    def log_cutoff(self) -> float:
        return math.log(self.cutoff) if self.cutoff > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "length_source": self.length_source,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "iqr": self.iqr,
            "cutoff": self.cutoff,
            "log_cutoff": self.log_cutoff,
            "per_donor": {d: {"median": m, "n": n} for d, (m, n) in sorted(self.per_donor.items())},
            "per_year": {str(y): {"median": m, "n": n} for y, (m, n) in sorted(self.per_year.items())},
        }


def iqr_cutoff(lengths: Sequence[int]) -> LengthReport:
    """Lower outlier fence q1 - 1.5*iqr, floored at zero."""
    q1, med, q3 = (float(v) for v in quantiles7(lengths, [0.25, 0.5, 0.75]))
    iqr = q3 - q1
    return LengthReport(q1, med, q3, iqr, max(0.0, q1 - 1.5 * iqr), len(lengths))


def _group_medians(values: dict) -> dict:
    return {k: (float(np.median(v)), len(v)) for k, v in values.items()}


def length_report(records: Sequence[ActivityRecord], length_source: str = "long_description") -> LengthReport:
    lengths = [record_length(r, length_source) for r in records]
    report = iqr_cutoff(lengths)
    report.length_source = length_source
    by_donor, by_year = defaultdict(list), defaultdict(list)
    for r, n in zip(records, lengths):
        by_donor[r.donor].append(n)
        by_year[r.year].append(n)
    report.per_donor = _group_medians(by_donor)
    report.per_year = _group_medians(by_year)
    return report


def exclude_short(records: Sequence[ActivityRecord], cutoff: float,
                  length_source: str = "long_description") -> list[ActivityRecord]:
    return [r for r in records if record_length(r, length_source) >= cutoff]


@dataclass(frozen=True)
class AgreementBin:
    bin_lo: float
    bin_hi: float
    n: int
    agreement: float | None

    def to_row(self) -> dict:
        return {"bin_lo": self.bin_lo, "bin_hi": self.bin_hi, "n": self.n,
                "agreement": "" if self.agreement is None else self.agreement}


def agreement_by_length(records: Sequence[ActivityRecord], predictions: Mapping[str, int],
                        n_bins: int = DEFAULT_BINS,
                        length_source: str = "long_description") -> list[AgreementBin]:
    """Share of records whose effective prediction equals the reported marker,
    in equal-width bins of log character length."""
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if not records:
        return []
    logs = np.array([math.log(max(record_length(r, length_source), 1)) for r in records])
    agree = np.array([effective_marker(predictions[r.id]) == r.reported_marker for r in records])
    lo, hi = float(logs.min()), float(logs.max())
    edges = np.linspace(lo, hi, n_bins + 1)
    if hi > lo:
        idx = np.minimum(((logs - lo) / (hi - lo) * n_bins).astype(int), n_bins - 1)
    else:
        idx = np.zeros(len(logs), dtype=int)
    bins = []
    for b in range(n_bins):
        mask = idx == b
        n = int(mask.sum())
        bins.append(AgreementBin(float(edges[b]), float(edges[b + 1]), n,
                                 float(agree[mask].mean()) if n else None))
    return bins
