"""Overreporting flags (reported marker above the predicted one) and stratified rates."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import EstimationError, MissingPredictionsError
from .records import INSUFFICIENT_INFO, RIO_MARKERS, ActivityRecord

LOW_N_THRESHOLD = 500
GROUPINGS = ("none", "year", "donor", "donor_year")


def effective_marker(m: int) -> int:
    """99 (insufficient information) counts as 0; other markers are unchanged."""
    if m not in RIO_MARKERS:
        raise ValueError(f"invalid Rio marker {m!r}")
    return 0 if m == INSUFFICIENT_INFO else m


def flag(reported: int, predicted: int) -> bool:
    if reported == 0:
        raise EstimationError("record should have been filtered: reported marker 0 cannot be overreported")
    if reported not in (1, 2):
        raise ValueError(f"invalid reported marker {reported!r}")
    return reported > effective_marker(predicted)


@dataclass(frozen=True)
class OverreportFlag:
    id: str
    reported: int
    predicted: int
    overreported: bool

    @property
    def predicted_effective(self) -> int:
        return effective_marker(self.predicted)

    @property
    def underreported(self) -> bool:
        # diagnostic only
        return self.predicted_effective > self.reported


@dataclass
class FlagResult:
    flags: list[OverreportFlag]
    n_reported_zero: int = 0


def build_flags(records: Sequence[ActivityRecord], predictions: Mapping[str, int]) -> FlagResult:
    """Flag every record with reported marker 1 or 2.

    Records reported as 0 are excluded and only counted. Every in-scope record
    must have a prediction.
    """
    in_scope = [r for r in records if r.reported_marker > 0]
    missing = [r.id for r in in_scope if r.id not in predictions]
    if missing:
        raise MissingPredictionsError(missing)
    flags = [OverreportFlag(r.id, r.reported_marker, predictions[r.id],
                            flag(r.reported_marker, predictions[r.id])) for r in in_scope]
    return FlagResult(flags, len(records) - len(in_scope))


@dataclass(frozen=True)
class RateSummary:
    donor: str | None
    year: int | None
    n: int
    n_overreported: int
    n_underreported: int = 0

    @property
    def rate(self) -> float:
        return self.n_overreported / self.n

    @property
    def low_n(self) -> bool:
        return self.n < LOW_N_THRESHOLD

    def to_row(self) -> dict:
        return {
            "donor": self.donor if self.donor is not None else "all",
            "year": self.year if self.year is not None else "all",
            "n": self.n,
            "n_overreported": self.n_overreported,
            "rate": self.rate,
            "low_n": str(self.low_n).lower(),
        }


def _key(rec: ActivityRecord, group_by: str):
    if group_by == "year":
        return (None, rec.year)
    if group_by == "donor":
        return (rec.donor, None)
    if group_by == "donor_year":
        return (rec.donor, rec.year)
    raise ValueError(f"unknown grouping {group_by!r}")


def stratified_rates(flags: Sequence[OverreportFlag], records: Sequence[ActivityRecord],
                     group_by: str = "none") -> list[RateSummary]:
    """Overall stratum first, then one row per non-empty stratum in sorted order."""
    by_id = {r.id: r for r in records}
    counts: dict[tuple, list[int]] = defaultdict(lambda: [0, 0, 0])
    total = [0, 0, 0]
    for f in flags:
        rec = by_id[f.id]
        for c in ([total] if group_by == "none" else [total, counts[_key(rec, group_by)]]):
            c[0] += 1
            c[1] += f.overreported
            c[2] += f.underreported
    out = []
    if total[0]:
        out.append(RateSummary(None, None, *total))
    for (donor, year) in sorted(counts, key=lambda k: (k[0] or "", k[1] or 0)):
        out.append(RateSummary(donor, year, *counts[(donor, year)]))
    return out


def raw_rate(flags: Sequence[OverreportFlag]) -> float:
    if not flags:
        raise EstimationError("no in-scope records to estimate from")
    return sum(f.overreported for f in flags) / len(flags)
