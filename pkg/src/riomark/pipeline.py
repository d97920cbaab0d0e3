"""End-to-end estimation: flags, stratified rates, correction factor, corrected rates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .bayes import (DEFAULT_SAMPLES, CorrectedEstimate, CorrectionFactor, PairedFlags,
                    calibration_rates, corrected_rate, correction_factor)
from .errors import EstimationError
from .overreport import FlagResult, RateSummary, build_flags, flag, stratified_rates
from .records import ActivityRecord
from .text import record_length

log = logging.getLogger(__name__)


@dataclass
class EstimateRun:
    flags: FlagResult
    overall: RateSummary
    by_year: list[RateSummary]
    by_donor_year: list[RateSummary]
    factor: CorrectionFactor
    corrected: CorrectedEstimate
    corrected_by_year: dict[int, CorrectedEstimate]
    calibration: dict
    cutoff: float = 0.0
    n_excluded: int = 0
    n_pairs_excluded: int = 0

    def per_year_rows(self) -> list[dict]:
        """Classifier rate, corrected credible interval and count per year, then overall."""
        rows = []
        for s in self.by_year:
            est = self.corrected_by_year[s.year]
            rows.append({"year": s.year, "classifier_rate": s.rate,
                         "care_lo": est.ci95[0], "care_hi": est.ci95[1], "count": s.n})
        rows.append({"year": "all", "classifier_rate": self.overall.rate,
                     "care_lo": self.corrected.ci95[0], "care_hi": self.corrected.ci95[1],
                     "count": self.overall.n})
        return rows

    def summary(self) -> dict:
        return {
            "n_records": self.overall.n,
            "n_reported_zero_excluded": self.flags.n_reported_zero,
            "n_underreported": self.overall.n_underreported,
            "raw_rate": self.overall.rate,
            "corrected": self.corrected.to_dict(),
            "corrected_by_year": {str(y): e.to_dict() for y, e in sorted(self.corrected_by_year.items())},
            "factor": self.factor.to_dict(),
            "calibration": self.calibration,
            "short_text_cutoff": self.cutoff,
            "n_excluded_short": self.n_excluded,
            "n_calibration_excluded_short": self.n_pairs_excluded,
        }


def pairs_from_gold(records: Sequence[ActivityRecord], predictions: Mapping[str, int],
                    gold: Mapping[str, int], length_source: str = "long_description") -> list[PairedFlags]:
    """Calibration pairs from records that carry both a prediction and a reference marker."""
    pairs = []
    for r in records:
        if r.reported_marker == 0 or r.id not in gold:
            continue
        pairs.append(PairedFlags(r.id, flag(r.reported_marker, predictions[r.id]),
                                 flag(r.reported_marker, gold[r.id]), record_length(r, length_source)))
    return pairs


def run_estimate(records: Sequence[ActivityRecord], predictions: Mapping[str, int],
                 pairs: Sequence[PairedFlags], seed: int = 0, n_samples: int = DEFAULT_SAMPLES,
                 workers: int = 1) -> EstimateRun:
    flags = build_flags(records, predictions)
    if not flags.flags:
        raise EstimationError("no records with reported marker 1 or 2")
    if not pairs:
        raise EstimationError("no calibration pairs")
    by_year = stratified_rates(flags.flags, records, "year")
    by_donor_year = stratified_rates(flags.flags, records, "donor_year")
    overall = by_year[0]
    cf = correction_factor(pairs, n_samples, seed, workers)
    corrected = corrected_rate(overall.rate, cf)
    by_year_est = {s.year: corrected_rate(s.rate, cf) for s in by_year[1:]}
    return EstimateRun(flags, overall, by_year[1:], by_donor_year[1:], cf, corrected, by_year_est,
                       calibration_rates(pairs))


def filter_short(records, pairs, cutoff: float, length_source: str = "long_description"):
    kept = [r for r in records if record_length(r, length_source) >= cutoff]
    unknown = sum(p.char_length is None for p in pairs)
    if unknown and cutoff > 0:
        log.warning("%d calibration pairs have no char_length and are kept unfiltered", unknown)
    kept_pairs = [p for p in pairs if p.char_length is None or p.char_length >= cutoff]
    return kept, kept_pairs


@dataclass
class RerunResult:
    primary: EstimateRun
    filtered: EstimateRun
    cutoff: float
    length_source: str = "long_description"
    notes: list[str] = field(default_factory=list)


def rerun_excluding_short(records: Sequence[ActivityRecord], predictions: Mapping[str, int],
                          pairs: Sequence[PairedFlags], cutoff: float,
                          length_source: str = "long_description", seed: int = 0,
                          n_samples: int = DEFAULT_SAMPLES, workers: int = 1,
                          primary: EstimateRun | None = None) -> RerunResult:
    """Run the estimate on all data and again without texts shorter than ``cutoff``.

    Short calibration records are dropped too. Both runs use the same seed.
    """
    if primary is None:
        primary = run_estimate(records, predictions, pairs, seed, n_samples, workers)
    kept, kept_pairs = filter_short(records, pairs, cutoff, length_source)
    if not [r for r in kept if r.reported_marker > 0]:
        raise EstimationError(f"no records left after excluding texts shorter than {cutoff}")
    if not kept_pairs:
        raise EstimationError(f"no calibration pairs left after excluding texts shorter than {cutoff}")
    filtered = run_estimate(kept, predictions, kept_pairs, seed, n_samples, workers)
    filtered.cutoff = cutoff
    filtered.n_excluded = len(records) - len(kept)
    filtered.n_pairs_excluded = len(pairs) - len(kept_pairs)
    return RerunResult(primary, filtered, cutoff, length_source)
