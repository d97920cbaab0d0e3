"""Classifier input assembly, language tagging, length statistics and duplicates."""

from __future__ import annotations

import csv
import hashlib
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .records import REPORTED_MARKERS, ActivityRecord

LENGTH_SOURCES = ("assembled", "long_description")

_WORD = re.compile(r"[^\W_]+")

ENGLISH_STOPWORDS = frozenset(
    "a about all also an and are as at be been but by for from has have in into "
    "is it its more of on or other our that the their there these this to was "
    "were which will with within would".split()
)
FRENCH_STOPWORDS = frozenset(
    "au aux avec ce ces cette dans de des du elle en est et il ils la le les "
    "leur leurs mais ou par pas pour qui que sa se ses son sont sur un une".split()
)


@dataclass(frozen=True)
class PreparedText:
    id: str
    text: str
    language_tag: str = "und"

    @property
    def char_length(self) -> int:
        return len(self.text)

    @property
    def log_length(self) -> float:
        return math.log(self.char_length) if self.char_length >= 1 else 0.0


def _join(*parts: str) -> str:
    return " ".join(p.strip() for p in parts if p and p.strip())


def assemble_text(rec: ActivityRecord, include_short: bool = False) -> PreparedText:
    """Title and long description joined by one space; empty parts are dropped.

    With ``include_short`` the short description is inserted between them.
    """
    if include_short:
        text = _join(rec.title, rec.short_description, rec.long_description)
    else:
        text = _join(rec.title, rec.long_description)
    return PreparedText(rec.id, text, rec.language_tag or "und")


def record_length(rec: ActivityRecord, source: str = "long_description") -> int:
    """Character count used for length diagnostics and short-text exclusion."""
    if source == "long_description":
        return len(rec.long_description.strip())
    if source == "assembled":
        return assemble_text(rec).char_length
    raise ValueError(f"unknown length source {source!r}")


# language tagging

LanguageTagger = Callable[[PreparedText], str]


def stopword_tagger(t: PreparedText) -> str:
    words = [w.lower() for w in _WORD.findall(t.text)]
    if not words:
        return "und"
    fr = sum(w in FRENCH_STOPWORDS for w in words) / len(words)
    en = sum(w in ENGLISH_STOPWORDS for w in words) / len(words)
    return "fr" if fr > en else "en"


class TagFileTagger:
    """Looks tags up by id; ids absent from the file get ``"und"``."""

    def __init__(self, tags: Mapping[str, str]):
        self.tags = dict(tags)

    @classmethod
    def from_csv(cls, path) -> "TagFileTagger":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls({row["id"].strip(): row["language_tag"].strip() for row in csv.DictReader(fh)})

    def __call__(self, t: PreparedText) -> str:
        return self.tags.get(t.id, "und")


def tag_language(t: PreparedText, tagger: LanguageTagger = stopword_tagger) -> PreparedText:
    return replace(t, language_tag=tagger(t))


# length statistics

def quantiles7(values, probs) -> np.ndarray:
    """Linear interpolation between order statistics at position p*(n-1)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("empty sample")
    return np.quantile(arr, probs, method="linear")


def length_quartiles(texts: list[PreparedText]) -> tuple[float, float, float]:
    q1, med, q3 = quantiles7([t.char_length for t in texts], [0.25, 0.5, 0.75])
    return float(q1), float(med), float(q3)


# duplicates

def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass
class DuplicateGroup:
    text: str
    member_ids: list[str]
    marker_histogram: dict[int, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.member_ids)


def find_duplicates(texts: list[PreparedText], records: list[ActivityRecord]) -> list[DuplicateGroup]:
    marker = {r.id: r.reported_marker for r in records}
    members: dict[str, list[str]] = defaultdict(list)
    for t in texts:
        members[normalize_whitespace(t.text)].append(t.id)
    groups = []
    for text, ids in members.items():
        if len(ids) < 2:
            continue
        hist = Counter(marker[i] for i in ids)
        groups.append(DuplicateGroup(text, ids, dict(sorted(hist.items()))))
    # size descending, then text for a stable order
    groups.sort(key=lambda g: (-g.size, g.text))
    return groups


def unique_ratio(texts: list[PreparedText]) -> tuple[int, int, float]:
    """(count, distinct texts, distinct/count)."""
    n = len(texts)
    distinct = len({normalize_whitespace(t.text) for t in texts})
    return n, distinct, (distinct / n if n else float("nan"))


def max_agreement_bound(groups: list[DuplicateGroup], total: int, n_singletons: int) -> float:
    """Best fraction of records any text -> marker function can match.

    Within a duplicate group only the most common reported marker can be hit;
    every singleton can always be matched.
    """
    if total < 1:
        raise ValueError("total must be >= 1")
    if sum(g.size for g in groups) + n_singletons != total:
        raise ValueError("inconsistent totals: group sizes + singletons != total")
    for g in groups:
        if sum(g.marker_histogram.values()) != g.size:
            raise ValueError("histogram does not sum to group size")
    best = sum(max(g.marker_histogram.values()) for g in groups) + n_singletons
    return best / total


def duplicate_report_rows(groups: list[DuplicateGroup]) -> list[dict]:
    rows = []
    for g in groups:
        row = {"text_hash": text_hash(g.text), "group_size": g.size}
        for m in REPORTED_MARKERS:
            row[f"marker_{m}"] = g.marker_histogram.get(m, 0)
        row["example_id"] = g.member_ids[0]
        rows.append(row)
    return rows
