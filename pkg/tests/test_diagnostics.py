import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riomark.bayes import PairedFlags
from riomark.diagnostics import agreement_by_length, exclude_short, iqr_cutoff, length_report
from riomark.errors import EstimationError
from riomark.pipeline import rerun_excluding_short, run_estimate
from riomark.records import ActivityRecord
from riomark.synth import pairs_from_counts

# type-7 quartiles at positions 4 and 12 of 17 sorted values: q1 = 80, q3 = 92,
# so the fence is 80 - 1.5 * 12 = 62
LENGTHS_62 = [10, 30, 61, 62, 80, 81, 82, 83, 84, 85, 86, 87, 92, 100, 150, 200, 400]


def rec(rid, n_chars, marker=1, donor="Germany", year=2015):
    return ActivityRecord(rid, donor, year, marker, long_description="x" * n_chars)


def test_floored_cutoff():
    r = iqr_cutoff([100, 200, 300, 400, 500])
    assert (r.q1, r.q3, r.iqr, r.cutoff) == (200, 400, 200, 0)


def test_constant_lengths():
    r = iqr_cutoff([50] * 10)
    assert r.iqr == 0 and r.cutoff == 50


def test_engineered_62_cutoff():
    r = iqr_cutoff(LENGTHS_62)
    assert (r.q1, r.q3, r.cutoff) == (80, 92, 62)
    assert round(r.log_cutoff, 1) == 4.1
    records = [rec(str(i), n) for i, n in enumerate(LENGTHS_62)]
    kept = exclude_short(records, r.cutoff)
    assert sorted(len(x.long_description) for x in records if x not in kept) == [10, 30, 61]


def test_empty_lengths():
    with pytest.raises(ValueError):
        iqr_cutoff([])


@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=50), st.randoms(use_true_random=False),
       st.integers(1, 20))
def test_cutoff_permutation_and_scaling(lengths, rnd, c):
    base = iqr_cutoff(lengths)
    shuffled = lengths[:]
    rnd.shuffle(shuffled)
    assert iqr_cutoff(shuffled).cutoff == base.cutoff
    scaled = iqr_cutoff([c * x for x in lengths])
    assert scaled.cutoff == pytest.approx(c * base.cutoff, rel=1e-9, abs=1e-9)
    assert 0 <= base.cutoff <= base.q1


def test_per_donor_medians_japan_shorter():
    records = ([rec(f"j{i}", 70 + i, donor="Japan") for i in range(9)]
               + [rec(f"g{i}", 300 + i, donor="Germany") for i in range(9)]
               + [rec(f"u{i}", 320 + i, donor="United States") for i in range(9)])
    r = length_report(records)
    assert r.per_donor["Japan"][0] < min(r.per_donor["Germany"][0], r.per_donor["United States"][0])
    assert r.per_donor["Japan"] == (74.0, 9)


def test_agreement_all_equal():
    records = [rec(str(i), 10 * (i + 1), marker=1 + i % 2) for i in range(30)]
    bins = agreement_by_length(records, {r.id: r.reported_marker for r in records}, n_bins=5)
    assert all(b.agreement == 1.0 for b in bins if b.n)
    assert sum(b.n for b in bins) == 30


def test_agreement_constant_zero():
    records = [rec(str(i), 10 * (i + 1), marker=1 + i % 2) for i in range(30)]
    bins = agreement_by_length(records, {r.id: 0 for r in records}, n_bins=5)
    assert all(b.agreement == 0.0 for b in bins if b.n)


def test_agreement_increases_with_length():
    lengths = [int(math.exp(x)) for x in np.linspace(2, 7, 60)]
    records = [rec(str(i), n, marker=2) for i, n in enumerate(lengths)]
    # long texts are classified like the report, short ones are not
    preds = {r.id: (2 if len(r.long_description) > 150 else 0) for r in records}
    bins = [b for b in agreement_by_length(records, preds, n_bins=6) if b.n]
    values = [b.agreement for b in bins]
    assert values == sorted(values) and values[0] == 0 and values[-1] == 1


def test_agreement_empty_bins_are_null():
    records = [rec("a", 10), rec("b", 1000)]
    bins = agreement_by_length(records, {"a": 1, "b": 1}, n_bins=4)
    assert [b.n for b in bins] == [1, 0, 0, 1]
    assert bins[1].agreement is None
    assert bins[0].bin_hi == bins[1].bin_lo


def test_agreement_needs_two_bins():
    with pytest.raises(ValueError):
        agreement_by_length([rec("a", 5)], {"a": 1}, n_bins=1)


@given(st.lists(st.integers(0, 3000), min_size=1, max_size=40), st.integers(2, 25))
def test_agreement_bins_conserve_count(lengths, n_bins):
    records = [rec(str(i), n) for i, n in enumerate(lengths)]
    bins = agreement_by_length(records, {r.id: 1 for r in records}, n_bins=n_bins)
    assert sum(b.n for b in bins) == len(records)
    assert all(a.bin_hi == b.bin_lo for a, b in zip(bins, bins[1:]))


# re-run without short texts

def _dataset():
    records, preds = [], {}
    for i in range(40):
        short = i < 10
        r = rec(f"r{i}", 20 if short else 200, marker=2)
        records.append(r)
        # every short record is overreported, half of the long ones are
        preds[r.id] = 0 if short or i % 2 else 2
    pairs = [PairedFlags(f"c{i}", i % 3 != 0, i % 2 == 0, 20 if i < 8 else 200) for i in range(40)]
    return records, preds, pairs


def test_rerun_with_zero_cutoff_is_identical():
    records, preds, pairs = _dataset()
    res = rerun_excluding_short(records, preds, pairs, 0, seed=3, n_samples=5000)
    a, b = res.primary, res.filtered
    assert a.per_year_rows() == b.per_year_rows()
    assert np.array_equal(a.factor.samples, b.factor.samples)
    assert a.factor.to_dict() == b.factor.to_dict()


def test_rerun_drops_short_overreported():
    records, preds, pairs = _dataset()
    res = rerun_excluding_short(records, preds, pairs, 62, seed=3, n_samples=5000)
    assert res.filtered.overall.rate < res.primary.overall.rate
    assert res.filtered.n_excluded == 10
    assert res.filtered.n_pairs_excluded == 8
    assert res.filtered.factor.n_pairs == 32


def test_rerun_empty_after_filter():
    records, preds, pairs = _dataset()
    with pytest.raises(EstimationError):
        rerun_excluding_short(records, preds, pairs, 10_000, n_samples=100)


def test_run_estimate_known_counts():
    # factor ~ 0.5 (P(C|W) ~ 0.5, P(W|C) ~ 1), raw rate 0.8 -> corrected ~ 0.4
    records = [rec(str(i), 100, marker=2) for i in range(100)]
    preds = {r.id: (0 if i < 80 else 2) for i, r in enumerate(records)}
    pairs = pairs_from_counts(500, 500, 0)
    run = run_estimate(records, preds, pairs, seed=1, n_samples=20_000)
    assert run.overall.rate == 0.8
    assert run.factor.point == pytest.approx(0.5, abs=0.01)
    assert run.corrected.point == pytest.approx(0.4, abs=0.01)
