"""Exit criteria. Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL
line per criterion is printed in the terminal summary."""

import csv
import itertools
import json
import random
import re
import time

import numpy as np
import pytest

from oracles import beta_ppf_bisect, central_difference, confusion_metrics
from riomark import synth
from riomark.bayes import (ConditionalCounts, CorrectionFactor, beta_posterior, corrected_rate,
                           correction_factor, factor_from_counts, sample_beta, summarize)
from riomark.classifier import Hyper, fit_text_classifier, kfold_cv, loss_and_grad, metrics
from riomark.cli import main
from riomark.diagnostics import exclude_short, iqr_cutoff
from riomark.overreport import flag
from riomark.records import ActivityRecord, serialize_records
from riomark.report import csv_bytes
from riomark.text import assemble_text, find_duplicates, max_agreement_bound

acceptance = pytest.mark.acceptance


def timed(limit):
    class _T:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, *exc):
            self.elapsed = time.perf_counter() - self.t0
            if exc[0] is None:
                assert self.elapsed < limit, f"took {self.elapsed:.1f}s, limit {limit}s"
    return _T()


@acceptance(1, "overreporting flag truth table")
def test_flag_truth_table():
    with timed(1):
        table = {(r, p): flag(r, p) for r in (1, 2) for p in (0, 1, 2)}
        assert table == {(1, 0): True, (2, 0): True, (2, 1): True,
                         (1, 1): False, (2, 2): False, (1, 2): False}
        assert flag(1, 99) is True and flag(2, 99) is True


def _factor_with_interval(lo, point, hi):
    # 41 draws: type-7 quantiles 2.5% / 50% / 97.5% sit exactly on indices 1 / 20 / 39
    s = np.concatenate([[lo * 0.9], np.linspace(lo, point, 20), np.linspace(point, hi, 20)[1:], [hi * 1.1]])
    assert len(s) == 41
    return CorrectionFactor.from_samples(s)


@acceptance(2, "published arithmetic reproduction (75.35% -> 32.03%, 2019 row)")
def test_published_arithmetic():
    with timed(1):
        est = corrected_rate(0.7535, CorrectionFactor.from_samples([0.4257]))
        assert round(est.point, 4) == 0.3208
        assert abs(est.point - 0.3203) < 0.005

        cf = _factor_with_interval(0.2647, 0.4257, 0.6439)
        assert cf.ci95 == pytest.approx((0.2647, 0.6439), abs=1e-12)
        est = corrected_rate(0.6699, cf)
        assert abs(est.ci95[0] - 0.1766) < 0.005
        assert abs(est.ci95[1] - 0.4300) < 0.005


@acceptance(3, "beta posterior means and Monte Carlo quantiles vs bisection oracle")
def test_beta_machinery():
    with timed(30):
        worst = 0.0
        for n, m in itertools.product(range(11), repeat=2):
            post = beta_posterior(n, m)
            assert post.mean == (1 + n) / (2 + n + m)
            draws = sample_beta(post, 100_000, seed=1000 + 11 * n + m)
            _, lo, hi = summarize(draws)
            for got, q in ((lo, 0.025), (hi, 0.975)):
                err = abs(got - beta_ppf_bisect(q, 1 + n, 1 + m))
                worst = max(worst, err)
                assert err < 0.005, (n, m, q, err)
        print(f"worst quantile error {worst:.5f}")


@acceptance(4, "factor symmetry and determinism")
def test_factor_symmetry_and_determinism():
    with timed(10):
        perfect = synth.pairs_from_counts(25, 0, 0, 10)
        cf = correction_factor(perfect, n_samples=100_000, seed=7)
        assert abs(cf.point - 1.0) < 0.02

        pairs = synth.pairs_from_counts(18, 21, 4, 60)
        runs = [json.dumps(correction_factor(pairs, 100_000, seed=7, workers=w).to_dict(), sort_keys=True)
                for w in (1, 1, 4)]
        assert runs[0] == runs[1] == runs[2]


@acceptance(5, "published factor not reproducible; substituted monotonicity property")
def test_factor_substituted_property():
    # The calibration counts behind the published factor are not available, so
    # that value is not asserted. Checked instead: more agreement on the
    # classifier-flagged side never lowers the median factor, and identical
    # posteriors give a factor of one.
    rng = random.Random(0)
    for _ in range(25):
        n, m, c_only = rng.randint(0, 80), rng.randint(0, 80), rng.randint(0, 80)
        prev = None
        for extra in (0, 1, 5, 20):
            cf = factor_from_counts(ConditionalCounts((n + extra, m), (n, c_only)), 20_000, seed=3)
            if prev is not None:
                assert cf.point >= prev
            prev = cf.point
    same = factor_from_counts(ConditionalCounts((40, 0), (40, 0)), 100_000, seed=1)
    assert abs(same.point - 1.0) < 0.02


@acceptance(6, "classifier gradient check and 10-fold CV on a separable corpus")
def test_classifier_soundness():
    with timed(60):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n, d, k = 6, int(rng.integers(1, 6)), 3
            X = rng.normal(size=(n, d))
            y = rng.integers(k, size=n)
            W, b, l2 = rng.normal(size=(d, k)), rng.normal(size=k), 0.1
            _, gW, gb = loss_and_grad(W, b, X, y, l2)
            fW = central_difference(lambda w: loss_and_grad(w, b, X, y, l2)[0], W.copy())
            fb = central_difference(lambda v: loss_and_grad(W, v, X, y, l2)[0], b.copy())
            for a, f in ((gW, fW), (gb, fb)):
                assert np.linalg.norm(a - f) / (np.linalg.norm(a) + np.linalg.norm(f)) < 1e-4

        texts, labels = synth.separable_corpus(200, seed=11)
        rep = kfold_cv(texts, labels, k=10, hyper=Hyper(seed=11))
        assert rep.k == 10
        assert rep.mean.accuracy >= 0.95
        summary = rep.summary()
        assert all(re.fullmatch(r"\d+\.\d{2} ± \d+\.\d{2}", v) for v in summary.values())
        print("10-fold CV:", summary)


@acceptance(7, "metrics equal a brute-force confusion-matrix oracle")
def test_metrics_oracle():
    with timed(5):
        rng = random.Random(1)
        for _ in range(1000):
            size = rng.randint(1, 50)
            gold = [rng.choice((0, 1, 2, 99)) for _ in range(size)]
            pred = [rng.choice((0, 1, 2, 99)) for _ in range(size)]
            m = metrics(gold, pred)
            acc, per_class, macro = confusion_metrics(gold, pred)
            assert m.accuracy == acc
            assert m.per_class == per_class
            assert (m.macro_precision, m.macro_recall, m.macro_f1) == macro


@acceptance(8, "duplicate-description agreement ceiling (36 copies, 18/18 split)")
def test_duplicate_ceiling():
    with timed(1):
        text = "Appui au renforcement des capacités des communes"
        records = [ActivityRecord(f"fr14-{i:02d}", "France", 2014, 1 if i < 18 else 2, long_description=text)
                   for i in range(36)]
        texts = [assemble_text(r) for r in records]
        groups = find_duplicates(texts, records)
        assert max_agreement_bound(groups, 36, 0) == 0.5
        # every deterministic classifier maps the single text to one marker
        for marker in (0, 1, 2, 99):
            agree = sum(r.reported_marker == (0 if marker == 99 else marker) for r in records) / 36
            assert agree <= 0.5
        model = fit_text_classifier([text, "school budget"], [2, 0])
        preds = model.predict_texts([t.text for t in texts])
        assert sum(p == r.reported_marker for p, r in zip(preds, records)) / 36 <= 0.5


LENGTHS_62 = [10, 30, 61, 62, 80, 81, 82, 83, 84, 85, 86, 87, 92, 100, 150, 200, 400]


@acceptance(9, "IQR short-text exclusion at an engineered cutoff of 62")
def test_iqr_filtering(tmp_path):
    with timed(5):
        assert iqr_cutoff(LENGTHS_62).cutoff == 62
        records = [ActivityRecord(f"r{i:02d}", "Germany", 2015, 1 + i % 2, long_description="y" * n)
                   for i, n in enumerate(LENGTHS_62)]
        kept = exclude_short(records, 62)
        assert {r.id for r in records} - {r.id for r in kept} == {r.id for r in records
                                                                 if len(r.long_description) < 62}
        (tmp_path / "r.csv").write_bytes(serialize_records(records))
        (tmp_path / "p.csv").write_bytes(csv_bytes(
            [{"id": r.id, "predicted_marker": i % 3} for i, r in enumerate(records)], ("id", "predicted_marker")))
        (tmp_path / "c.csv").write_text("id,w_flag,c_flag,char_length\n"
                                        + "".join(f"c{i},{i % 2},{i % 3 == 0:d},{LENGTHS_62[i]}\n" for i in range(17)))
        base = ["estimate", "--records", str(tmp_path / "r.csv"), "--predictions", str(tmp_path / "p.csv"),
                "--calibration", str(tmp_path / "c.csv"), "--samples", "20000", "--seed", "3"]

        assert main(base + ["--exclude-short", "auto", "--out", str(tmp_path / "auto")]) == 0
        summary = json.loads((tmp_path / "auto" / "summary.json").read_text())
        assert summary["length_report"]["cutoff"] == 62
        assert summary["filtered"]["n_excluded_short"] == 3
        assert summary["filtered"]["n_calibration_excluded_short"] == 3
        with open(tmp_path / "auto" / "per_year_filtered.csv", newline="") as fh:
            assert list(csv.DictReader(fh))[-1]["count"] == str(len(records) - 3)

        assert main(base + ["--exclude-short", "0", "--out", str(tmp_path / "zero")]) == 0
        d = tmp_path / "zero"
        for name in ("per_year", "donor_year"):
            assert (d / f"{name}.csv").read_bytes() == (d / f"{name}_filtered.csv").read_bytes()
        assert (d / "factor.json").read_bytes() == (d / "factor_filtered.json").read_bytes()


@acceptance(10, "end-to-end determinism on 5,000 synthetic records")
def test_end_to_end_determinism(tmp_path):
    with timed(60):
        train, gold = synth.training_set(1500, seed=5)
        (tmp_path / "train.csv").write_bytes(serialize_records(train))
        (tmp_path / "labels.csv").write_bytes(csv_bytes([{"id": k, "gold_marker": v} for k, v in gold.items()],
                                                        ("id", "gold_marker")))
        crs = synth.crs_dataset(5000, seed=5, french_share=0.3)
        (tmp_path / "crs.csv").write_bytes(serialize_records(crs.records))
        cal = synth.crs_dataset(117, seed=6, prefix="care", duplicate_share=0.0)
        (tmp_path / "care.csv").write_bytes(serialize_records(cal.records))
        (tmp_path / "care_gold.csv").write_bytes(csv_bytes(
            [{"id": k, "gold_marker": v} for k, v in cal.true_marker.items()], ("id", "gold_marker")))
        assert main(["train", "--records", str(tmp_path / "train.csv"), "--labels", str(tmp_path / "labels.csv"),
                     "--model-out", str(tmp_path / "m.json"), "--seed", "5"]) == 0
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            assert main(["estimate", "--records", str(tmp_path / "crs.csv"), "--model", str(tmp_path / "m.json"),
                         "--calibration-records", str(tmp_path / "care.csv"),
                         "--calibration-gold", str(tmp_path / "care_gold.csv"),
                         "--seed", "7", "--samples", "100000", "--exclude-short", "auto",
                         "--out", str(out)]) == 0
            outs.append(out)
        names = sorted(p.name for p in outs[0].iterdir())
        assert names == sorted(p.name for p in outs[1].iterdir())
        for name in names:
            if name != "manifest.json":
                assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
        manifests = [json.loads((o / "manifest.json").read_text()) for o in outs]
        for m in manifests:
            m.pop("timestamp")
        assert manifests[0] == manifests[1]
        summary = json.loads((outs[0] / "summary.json").read_text())
        assert summary["unfiltered"]["n_records"] == 5000
