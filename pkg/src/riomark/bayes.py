"""Bayesian correction of classifier overreporting rates.

A small calibration set carries two flags per activity: ``w`` (the classifier
calls it overreported) and ``c`` (the high-quality re-evaluation does). The
conditional agreement probabilities P(C|W) and P(W|C) get Beta(1+n, 1+m)
posteriors; their ratio is the correction factor that rescales a raw
classifier rate. Uncertainty is propagated by Monte Carlo.

Samples are drawn by inverse-CDF transform of uniforms, in fixed-size blocks
with one random substream per (posterior, block). Results are therefore
identical for any number of worker threads, and two posteriors that differ
only in their counts are sampled with common random numbers.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .errors import EstimationError, SchemaError
from .seeding import substream
from .text import quantiles7

log = logging.getLogger(__name__)

DEFAULT_SAMPLES = 100_000
BLOCK_SIZE = 1 << 16
TINY = 1e-300
SMALL_SAMPLE_WARNING = 10


@dataclass(frozen=True)
class PairedFlags:
    id: str
    w: bool
    c: bool
    char_length: int | None = None


@dataclass(frozen=True)
class ConditionalCounts:
    c_given_w: tuple[int, int]
    w_given_c: tuple[int, int]

    def to_dict(self) -> dict:
        return {"c_given_w": list(self.c_given_w), "w_given_c": list(self.w_given_c)}


def conditional_counts(pairs: Sequence[PairedFlags]) -> ConditionalCounts:
    if not pairs:
        raise ValueError("no calibration pairs")
    both = sum(p.w and p.c for p in pairs)
    w_only = sum(p.w and not p.c for p in pairs)
    c_only = sum(p.c and not p.w for p in pairs)
    return ConditionalCounts((both, w_only), (both, c_only))


@dataclass(frozen=True)
class BetaPosterior:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("shape parameters must be positive")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def cdf(self, x):
        return special.betainc(self.alpha, self.beta, x)

    def ppf(self, q):
        return special.betaincinv(self.alpha, self.beta, q)

    def interval(self, mass: float = 0.95) -> tuple[float, float]:
        tail = (1 - mass) / 2
        return float(self.ppf(tail)), float(self.ppf(1 - tail))


def beta_posterior(n: int, m: int) -> BetaPosterior:
    """Posterior for a proportion after n successes and m failures, uniform prior."""
    if n < 0 or m < 0:
        raise ValueError("counts must be non-negative")
    return BetaPosterior(1 + n, 1 + m)


def _sample_block(p: BetaPosterior, size: int, seed: int, stream: str, block: int) -> np.ndarray:
    rng = substream(seed, stream, block)
    out = p.ppf(rng.random(size))
    bad = out < TINY
    while bad.any():
        out[bad] = p.ppf(rng.random(int(bad.sum())))
        bad = out < TINY
    return out


def sample_beta(p: BetaPosterior, n_samples: int, seed: int, stream: str = "mc_c_given_w",
                workers: int = 1) -> np.ndarray:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sizes = [min(BLOCK_SIZE, n_samples - s) for s in range(0, n_samples, BLOCK_SIZE)]
    jobs = [(p, size, seed, stream, i) for i, size in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            blocks = list(pool.map(lambda a: _sample_block(*a), jobs))
    else:
        blocks = [_sample_block(*a) for a in jobs]
    return np.concatenate(blocks)


def summarize(samples: np.ndarray) -> tuple[float, float, float]:
    """(median, 2.5% quantile, 97.5% quantile)."""
    med, lo, hi = quantiles7(samples, [0.5, 0.025, 0.975])
    return float(med), float(lo), float(hi)


@dataclass
class CorrectionFactor:
    samples: np.ndarray
    point: float
    ci95: tuple[float, float]
    seed: int | None = None
    counts: ConditionalCounts | None = None
    n_pairs: int | None = None

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @classmethod
    def from_samples(cls, samples, seed=None, counts=None, n_pairs=None) -> "CorrectionFactor":
        samples = np.asarray(samples, dtype=float)
        if samples.size == 0:
            raise ValueError("empty factor sample")
        med, lo, hi = summarize(samples)
        return cls(samples, med, (lo, hi), seed, counts, n_pairs)

    def to_dict(self) -> dict:
        out = {
            "point": self.point,
            "ci95_lo": self.ci95[0],
            "ci95_hi": self.ci95[1],
            "n_samples": self.n_samples,
            "seed": self.seed,
        }
        if self.counts is not None:
            out["counts"] = self.counts.to_dict()
        if self.n_pairs is not None:
            out["n_pairs"] = self.n_pairs
        return out


def factor_from_counts(counts: ConditionalCounts, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                       workers: int = 1) -> CorrectionFactor:
    for name, (n, m) in (("c_given_w", counts.c_given_w), ("w_given_c", counts.w_given_c)):
        if n + m < SMALL_SAMPLE_WARNING:
            log.warning("only %d calibration records condition %s; the factor is mostly prior", n + m, name)
    num = sample_beta(beta_posterior(*counts.c_given_w), n_samples, seed, "mc_c_given_w", workers)
    den = sample_beta(beta_posterior(*counts.w_given_c), n_samples, seed, "mc_w_given_c", workers)
    return CorrectionFactor.from_samples(num / den, seed=seed, counts=counts)


def correction_factor(pairs: Sequence[PairedFlags], n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                      workers: int = 1) -> CorrectionFactor:
    """Monte Carlo distribution of P(C|W) / P(W|C) from calibration pairs."""
    cf = factor_from_counts(conditional_counts(pairs), n_samples, seed, workers)
    cf.n_pairs = len(pairs)
    return cf


@dataclass
class CorrectedEstimate:
    raw_rate: float
    point: float
    ci95: tuple[float, float]
    samples: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {"raw_rate": self.raw_rate, "point": self.point,
                "ci95_lo": self.ci95[0], "ci95_hi": self.ci95[1]}


def corrected_rate(raw: float, cf: CorrectionFactor) -> CorrectedEstimate:
    """Scale a raw rate by every factor draw, clamp to [0, 1], summarize."""
    if not 0.0 <= raw <= 1.0:
        raise EstimationError(f"raw rate {raw!r} outside [0, 1]")
    samples = np.clip(raw * cf.samples, 0.0, 1.0)
    med, lo, hi = summarize(samples)
    return CorrectedEstimate(raw, med, (lo, hi), samples)


def calibration_rates(pairs: Sequence[PairedFlags]) -> dict:
    """Share of calibration records flagged by each scheme (descriptive only)."""
    n = len(pairs)
    return {"n": n, "classifier_rate": sum(p.w for p in pairs) / n if n else None,
            "reference_rate": sum(p.c for p in pairs) / n if n else None}


def _flag01(value: str, what: str) -> bool:
    v = value.strip()
    if v not in ("0", "1"):
        raise ValueError(f"{what} must be 0 or 1")
    return v == "1"


def read_pairs(path) -> list[PairedFlags]:
    """Read ``id,w_flag,c_flag[,char_length]``."""
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        if not {"id", "w_flag", "c_flag"} <= set(header):
            raise SchemaError("calibration file needs columns id,w_flag,c_flag")
        reader.fieldnames = header
        seen = set()
        for row in reader:
            try:
                rid = row["id"].strip()
                if not rid:
                    raise ValueError("missing id")
                length = row.get("char_length")
                pair = PairedFlags(rid, _flag01(row["w_flag"], "w_flag"), _flag01(row["c_flag"], "c_flag"),
                                   int(length) if length not in (None, "") else None)
            except (ValueError, AttributeError) as exc:
                raise SchemaError(f"calibration line {reader.line_num}: {exc}") from None
            if rid in seen:
                raise SchemaError(f"duplicate calibration id {rid!r}")
            seen.add(rid)
            pairs.append(pair)
    if not pairs:
        raise EstimationError("calibration file is empty")
    return pairs
