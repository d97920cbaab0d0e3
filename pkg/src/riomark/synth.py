"""Synthetic CRS-like fixtures.

The real CRS extracts and re-evaluated samples cannot be redistributed, so
tests, scripts and the acceptance suite run on generated data with the same
schema. Texts are drawn from per-marker vocabularies, so a linear model can
recover the marker a text was generated from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayes import PairedFlags
from .records import TOP_FIVE_DONORS, ActivityRecord
from .seeding import substream

MARKER_WORDS = {
    0: "school teachers curriculum vaccination clinic hospital governance audit budget "
       "election judiciary tax transport highway railway broadband tourism museum".split(),
    1: "agriculture irrigation livelihoods watershed soil forestry fisheries rural "
       "nutrition drought tolerant seeds extension services".split(),
    2: "adaptation resilience climate vulnerability flood sea level rise early warning "
       "disaster risk reduction coastal protection heatwave".split(),
}
FILLER = "the project will support and strengthen local capacity for communities in the region".split()
FRENCH = {
    0: "le projet finance des écoles et la santé dans les communes".split(),
    1: "le projet soutient les agriculteurs et la gestion des sols pour la sécurité alimentaire".split(),
    2: "le projet renforce la résilience des communes face au changement climatique et aux inondations".split(),
}

# words per text (min, max) by donor; Japan reports short descriptions
DONOR_WORDS = {"Japan": (3, 9)}
DEFAULT_WORDS = (25, 60)


def _text(rng: np.random.Generator, marker: int, n_words: int, french: bool = False) -> str:
    if french:
        base = FRENCH[marker]
        return " ".join(base[i % len(base)] for i in range(max(n_words, len(base))))
    words = []
    signal = MARKER_WORDS[marker]
    for _ in range(n_words):
        pool = signal if rng.random() < 0.5 else FILLER
        words.append(pool[rng.integers(len(pool))])
    return " ".join(words)


def separable_corpus(n: int, seed: int = 0, classes=(0, 1, 2)) -> tuple[list[str], list[int]]:
    """Documents whose words come only from their own class vocabulary.

    Every document starts with its class's first vocabulary word, so held-out
    documents always share a feature with training documents of their class.
    """
    rng = substream(seed, "synthetic", 1)
    texts, labels = [], []
    for i in range(n):
        c = classes[i % len(classes)]
        vocab = MARKER_WORDS[c % 3] if c != 99 else ["unspecified", "various", "tbd"]
        words = [vocab[0]] + [vocab[rng.integers(len(vocab))] for _ in range(rng.integers(2, 8))]
        texts.append(" ".join(words))
        labels.append(c)
    return texts, labels


@dataclass
class SyntheticCRS:
    records: list[ActivityRecord]
    true_marker: dict[str, int]


def crs_dataset(n: int, seed: int = 0, overreport: float = 0.7, years=range(2010, 2020),
                donors=tuple(sorted(TOP_FIVE_DONORS)), french_share: float = 0.0,
                duplicate_share: float = 0.1, prefix: str = "crs") -> SyntheticCRS:
    """Records reported as 1 or 2 whose text reflects a true marker.

    With probability ``overreport`` the true marker is below the reported one.
    A share of records reuses an earlier description verbatim.
    """
    rng = substream(seed, "synthetic", 2)
    years = list(years)
    records, truth = [], {}
    texts: list[str] = []
    for i in range(n):
        donor = donors[rng.integers(len(donors))]
        year = years[rng.integers(len(years))]
        reported = 1 + int(rng.integers(2))
        true = int(rng.integers(reported)) if rng.random() < overreport else reported
        lo, hi = DONOR_WORDS.get(donor, DEFAULT_WORDS)
        if texts and rng.random() < duplicate_share:
            text = texts[rng.integers(len(texts))]
        else:
            french = donor == "France" and rng.random() < french_share
            text = _text(rng, true, int(rng.integers(lo, hi + 1)), french)
        texts.append(text)
        rid = f"{prefix}{i:06d}"
        records.append(ActivityRecord(rid, donor, year, reported, recipient="Somewhere",
                                      title="", short_description="",
                                      long_description=text))
        truth[rid] = true
    return SyntheticCRS(records, truth)


def training_set(n: int, seed: int = 0, prefix: str = "wk") -> tuple[list[ActivityRecord], dict[str, int]]:
    """WK-style training records: any reported marker, gold = generating marker.

    Very short texts get gold marker 99 (insufficient information).
    """
    rng = substream(seed, "synthetic", 3)
    records, gold = [], {}
    for i in range(n):
        marker = int(rng.integers(3))
        n_words = int(rng.integers(1, 3)) if rng.random() < 0.08 else int(rng.integers(8, 40))
        text = _text(rng, marker, n_words)
        rid = f"{prefix}{i:06d}"
        records.append(ActivityRecord(rid, "Germany", 2012, int(rng.integers(3)), title="",
                                      long_description=text))
        gold[rid] = 99 if n_words < 3 else marker
    return records, gold


def pairs_from_counts(both: int, w_only: int, c_only: int, neither: int = 0,
                      prefix: str = "care") -> list[PairedFlags]:
    """Calibration pairs with c_given_w = (both, w_only) and w_given_c = (both, c_only)."""
    spec = [(True, True)] * both + [(True, False)] * w_only + [(False, True)] * c_only + [(False, False)] * neither
    return [PairedFlags(f"{prefix}{i:05d}", w, c) for i, (w, c) in enumerate(spec)]
