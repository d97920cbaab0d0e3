"""CRS-style activity records: parsing, serialization, filtering, gold-label joins."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import IO, Iterable

from .errors import SchemaError

log = logging.getLogger(__name__)

REPORTED_MARKERS = (0, 1, 2)
RIO_MARKERS = (0, 1, 2, 99)
INSUFFICIENT_INFO = 99

RECORD_FIELDS = (
    "id",
    "donor",
    "recipient",
    "year",
    "title",
    "short_description",
    "long_description",
    "reported_marker",
)
OPTIONAL_FIELDS = ("language_tag",)
YEAR_MIN, YEAR_MAX = 2000, 2100

TOP_FIVE_DONORS = frozenset(
    {"France", "Germany", "Japan", "United Kingdom", "United States"}
)

# keys are casefolded and whitespace-collapsed
_DONOR_ALIASES = {
    "uk": "United Kingdom",
    "u.k.": "United Kingdom",
    "united kingdom": "United Kingdom",
    "great britain": "United Kingdom",
    "us": "United States",
    "u.s.": "United States",
    "usa": "United States",
    "u.s.a.": "United States",
    "united states": "United States",
    "united states of america": "United States",
    "france": "France",
    "germany": "Germany",
    "japan": "Japan",
}


def canonical_donor(name: str) -> str:
    """Map donor spelling variants to one canonical name; unknown names are trimmed only."""
    key = " ".join(name.split()).casefold()
    return _DONOR_ALIASES.get(key, " ".join(name.split()))


def donor_key(name: str) -> str:
    return canonical_donor(name).casefold()


@dataclass(frozen=True)
class ActivityRecord:
    id: str
    donor: str
    year: int
    reported_marker: int
    recipient: str | None = None
    title: str = ""
    short_description: str = ""
    long_description: str = ""
    language_tag: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("empty id")
        if self.reported_marker not in REPORTED_MARKERS:
            raise ValueError("marker out of range")
        if not YEAR_MIN <= self.year <= YEAR_MAX:
            raise ValueError("year out of range")


@dataclass(frozen=True)
class GoldLabel:
    id: str
    gold_marker: int

    def __post_init__(self):
        if self.gold_marker not in RIO_MARKERS:
            raise ValueError("marker out of range")


@dataclass
class ParseResult:
    records: list[ActivityRecord]
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_skipped(self) -> int:
        return len(self.skipped)


def _parse_int(value, what: str) -> int:
    if isinstance(value, bool):
        raise ValueError(f"invalid {what}")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    try:
        return int(str(value).strip())
    except ValueError:
        raise ValueError(f"invalid {what}") from None


def _record_from_mapping(row: dict) -> ActivityRecord:
    for name in ("id", "donor", "year", "reported_marker"):
        value = row.get(name)
        if value is None or (isinstance(value, str) and not value.strip()):
            raise ValueError(f"missing {name}")
    marker = _parse_int(row["reported_marker"], "marker")
    if marker not in REPORTED_MARKERS:
        raise ValueError("marker out of range")
    recipient = row.get("recipient")
    tag = row.get("language_tag")
    return ActivityRecord(
        id=str(row["id"]).strip(),
        donor=canonical_donor(str(row["donor"])),
        year=_parse_int(row["year"], "year"),
        reported_marker=marker,
        recipient=str(recipient) if recipient not in (None, "") else None,
        title=str(row.get("title") or ""),
        short_description=str(row.get("short_description") or ""),
        long_description=str(row.get("long_description") or ""),
        language_tag=str(tag) if tag not in (None, "") else None,
    )


def _text_stream(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _iter_csv(stream: IO[str], required: Iterable[str]):
    reader = csv.DictReader(stream)
    header = reader.fieldnames
    if not header:
        raise SchemaError("missing header")
    header = [h.strip() for h in header]
    missing = [c for c in required if c not in header]
    if missing or len(set(header)) != len(header):
        raise SchemaError(f"malformed header: missing columns {missing}" if missing
                          else "malformed header: duplicate columns")
    reader.fieldnames = header
    for row in reader:
        if None in row or any(v is None for v in row.values()):
            yield reader.line_num, None
        else:
            yield reader.line_num, row


def _iter_jsonl(stream: IO[str]):
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            yield lineno, None
            continue
        yield lineno, obj if isinstance(obj, dict) else None


def _iter_rows(source, fmt: str, required):
    stream = _text_stream(source)
    if fmt == "csv":
        return _iter_csv(stream, required)
    if fmt in ("jsonl", "json-lines"):
        return _iter_jsonl(stream)
    raise ValueError(f"unknown format {fmt!r}")


def parse_records(source, fmt: str = "csv", strict: bool = False) -> ParseResult:
    """Parse a CSV or JSON-Lines byte stream into records.

    Bad rows are skipped and logged with their line number, unless ``strict``
    is set, in which case the first bad row raises. Duplicate ids always raise.
    """
    records: list[ActivityRecord] = []
    skipped: list[tuple[int, str]] = []
    seen: set[str] = set()
    for lineno, row in _iter_rows(source, fmt, RECORD_FIELDS):
        try:
            if row is None:
                raise ValueError("malformed row")
            rec = _record_from_mapping(row)
        except ValueError as exc:
            if strict:
                raise SchemaError(f"line {lineno}: {exc}") from None
            log.warning("skipping line %d: %s", lineno, exc)
            skipped.append((lineno, str(exc)))
            continue
        if rec.id in seen:
            raise SchemaError(f"line {lineno}: duplicate id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return ParseResult(records, skipped)


def format_for_path(path) -> str:
    return "jsonl" if str(path).endswith((".jsonl", ".ndjson", ".json")) else "csv"


def read_records(path, strict: bool = False) -> ParseResult:
    with open(path, "rb") as fh:
        return parse_records(fh, format_for_path(path), strict=strict)


def serialize_records(records: Iterable[ActivityRecord], fmt: str = "csv") -> bytes:
    buf = io.StringIO(newline="")
    if fmt == "csv":
        writer = csv.writer(buf, lineterminator="\r\n")
        cols = RECORD_FIELDS + OPTIONAL_FIELDS
        writer.writerow(cols)
        for rec in records:
            row = asdict(rec)
            writer.writerow(["" if row[c] is None else row[c] for c in cols])
    elif fmt in ("jsonl", "json-lines"):
        for rec in records:
            row = {k: v for k, v in asdict(rec).items() if v is not None}
            buf.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return buf.getvalue().encode("utf-8")


def parse_gold_labels(source, strict: bool = False) -> list[GoldLabel]:
    """Read a ``id,gold_marker`` CSV. Markers may include 99."""
    labels = []
    for lineno, row in _iter_rows(source, "csv", ("id", "gold_marker")):
        try:
            if row is None or not row["id"].strip():
                raise ValueError("malformed row")
            labels.append(GoldLabel(row["id"].strip(), _parse_int(row["gold_marker"], "marker")))
        except ValueError as exc:
            if strict:
                raise SchemaError(f"line {lineno}: {exc}") from None
            log.warning("skipping gold label line %d: %s", lineno, exc)
    return labels


@dataclass(frozen=True)
class DatasetFilter:
    min_reported_marker: int = 1
    donors: frozenset[str] | None = None
    year_range: tuple[int, int] | None = None
    min_text_length: int | None = None
    length_source: str = "long_description"

    def __post_init__(self):
        if self.min_reported_marker not in REPORTED_MARKERS:
            raise ValueError("min_reported_marker must be 0, 1 or 2")
        if self.year_range is not None and self.year_range[0] > self.year_range[1]:
            raise ValueError("year_range min > max")

    @classmethod
    def passthrough(cls) -> "DatasetFilter":
        return cls(min_reported_marker=0)

    def matches(self, rec: ActivityRecord) -> bool:
        if rec.reported_marker < self.min_reported_marker:
            return False
        if self.donors is not None and donor_key(rec.donor) not in {donor_key(d) for d in self.donors}:
            return False
        if self.year_range is not None and not self.year_range[0] <= rec.year <= self.year_range[1]:
            return False
        if self.min_text_length is not None:
            from .text import record_length

            if record_length(rec, self.length_source) < self.min_text_length:
                return False
        return True


def apply_filter(records: list[ActivityRecord], f: DatasetFilter) -> list[ActivityRecord]:
    return [r for r in records if f.matches(r)]


@dataclass
class JoinResult:
    pairs: list[tuple[ActivityRecord, int]]
    unmatched_labels: int
    unmatched_records: int


def join_gold(records: list[ActivityRecord], labels: list[GoldLabel]) -> JoinResult:
    by_id: dict[str, ActivityRecord] = {}
    for rec in records:
        if rec.id in by_id:
            raise SchemaError(f"label id {rec.id!r} matches multiple records")
        by_id[rec.id] = rec
    seen: set[str] = set()
    pairs = []
    for lab in labels:
        if lab.id in seen:
            raise SchemaError(f"duplicate gold label for id {lab.id!r}")
        seen.add(lab.id)
        if lab.id in by_id:
            pairs.append((by_id[lab.id], lab.gold_marker))
    unmatched_labels = len(labels) - len(pairs)
    unmatched_records = len(by_id) - len(pairs)
    if unmatched_labels:
        log.warning("%d gold labels have no matching record", unmatched_labels)
    if unmatched_records:
        log.info("%d records have no gold label", unmatched_records)
    if not pairs:
        log.warning("gold-label join is empty")
    return JoinResult(pairs, unmatched_labels, unmatched_records)


def with_language(rec: ActivityRecord, tag: str) -> ActivityRecord:
    return replace(rec, language_tag=tag)
