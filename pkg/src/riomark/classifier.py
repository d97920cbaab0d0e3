"""Baseline Rio-marker classifier: TF-IDF features and multinomial logistic regression.

Also holds the evaluation metrics, the k-fold cross-validation harness and the
loader for predictions produced by an external model.
"""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import MissingPredictionsError, ModelError, SchemaError
from .records import RIO_MARKERS, _iter_rows, _parse_int
from .seeding import substream

log = logging.getLogger(__name__)

TOKENIZER_VERSION = "riomark-tok-1"
MODEL_FORMAT = "riomark-linear"
MODEL_FORMAT_VERSION = 1

_WORD = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercased runs of Unicode letters/digits. Underscore counts as a separator."""
    return _WORD.findall(text.lower())


def ngrams(tokens: Sequence[str]) -> list[str]:
    """Unigrams followed by underscore-joined bigrams."""
    return list(tokens) + [f"{a}_{b}" for a, b in zip(tokens, tokens[1:])]


def fit_features(corpus: Sequence[Sequence[str]], min_df: int = 1) -> tuple[dict[str, int], np.ndarray]:
    """Vocabulary over unigrams+bigrams with document frequency >= min_df, and smoothed idf.

    Feature ids follow lexicographic term order.
    """
    n_docs = len(corpus)
    if n_docs == 0:
        raise ValueError("empty corpus")
    df: dict[str, int] = {}
    for tokens in corpus:
        for term in set(ngrams(tokens)):
            df[term] = df.get(term, 0) + 1
    terms = sorted(t for t, c in df.items() if c >= min_df)
    if not terms:
        raise ValueError("no features")
    vocab = {t: i for i, t in enumerate(terms)}
    idf = np.array([math.log((1 + n_docs) / (1 + df[t])) + 1.0 for t in terms])
    return vocab, idf


@dataclass(frozen=True)
class FeatureVector:
    indices: tuple[int, ...]
    values: tuple[float, ...]


def vectorize(tokens: Sequence[str], vocab: dict[str, int], idf: np.ndarray) -> FeatureVector:
    counts: dict[int, int] = {}
    for term in ngrams(tokens):
        j = vocab.get(term)
        if j is not None:
            counts[j] = counts.get(j, 0) + 1
    idx = sorted(counts)
    vals = np.array([counts[j] * idf[j] for j in idx], dtype=float)
    norm = float(np.sqrt(np.sum(vals * vals)))
    if norm > 0:
        vals = vals / norm
    return FeatureVector(tuple(idx), tuple(float(v) for v in vals))


def to_matrix(vectors: Sequence[FeatureVector], n_features: int) -> sp.csr_matrix:
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, v in enumerate(vectors):
        indptr[i + 1] = indptr[i] + len(v.indices)
    indices = np.fromiter((j for v in vectors for j in v.indices), dtype=np.int64, count=indptr[-1])
    data = np.fromiter((x for v in vectors for x in v.values), dtype=float, count=indptr[-1])
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), n_features))


# model and training

@dataclass(frozen=True)
class Hyper:
    l2: float = 1e-4
    lr: float = 1.0
    epochs: int = 20
    batch_size: int = 32
    min_df: int = 1
    seed: int = 0


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(W, b, X, y, l2):
    """Mean cross-entropy plus (l2/2)*||W||^2, and its gradient w.r.t. (W, b).

    W has shape (n_features, n_classes); y holds class indices.
    """
    n = X.shape[0]
    P = softmax(X @ W + b)
    loss = -np.mean(np.log(np.maximum(P[np.arange(n), y], 1e-300))) + 0.5 * l2 * float(np.sum(W * W))
    P[np.arange(n), y] -= 1.0
    P /= n
    gW = np.asarray(X.T @ P) + l2 * W
    gb = P.sum(axis=0)
    return loss, gW, gb


@dataclass
class LinearModel:
    vocabulary: dict[str, int]
    idf: np.ndarray
    weights: np.ndarray  # (n_features, n_classes)
    bias: np.ndarray
    classes: list[int]
    hyper: Hyper = field(default_factory=Hyper)
    history: list[dict] = field(default_factory=list)

    def featurize(self, texts: Sequence[str]) -> sp.csr_matrix:
        vecs = [vectorize(tokenize(t), self.vocabulary, self.idf) for t in texts]
        return to_matrix(vecs, len(self.vocabulary))

    def scores(self, X) -> np.ndarray:
        return np.asarray(X @ self.weights) + self.bias

    def predict_matrix(self, X) -> list[int]:
        # argmax returns the first maximum; classes are ascending, so ties go to the lower marker
        idx = np.argmax(self.scores(X), axis=1)
        return [self.classes[i] for i in idx]

    def predict_texts(self, texts: Sequence[str]) -> list[int]:
        if not texts:
            return []
        return self.predict_matrix(self.featurize(texts))

    def to_json(self) -> str:
        terms = sorted(self.vocabulary, key=self.vocabulary.__getitem__)
        doc = {
            "format": MODEL_FORMAT,
            "format_version": MODEL_FORMAT_VERSION,
            "tokenizer": TOKENIZER_VERSION,
            "classes": list(self.classes),
            "hyper": asdict(self.hyper),
            "vocabulary": terms,
            "idf": self.idf.tolist(),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }
        return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, payload: str) -> "LinearModel":
        doc = json.loads(payload)
        if doc.get("format") != MODEL_FORMAT or doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise ModelError("not a riomark linear model file")
        if doc.get("tokenizer") != TOKENIZER_VERSION:
            raise ModelError(f"model built with tokenizer {doc.get('tokenizer')!r}, "
                             f"this build uses {TOKENIZER_VERSION!r}")
        vocab = {t: i for i, t in enumerate(doc["vocabulary"])}
        W = np.array(doc["weights"], dtype=float).reshape(len(vocab), len(doc["classes"]))
        model = cls(vocab, np.array(doc["idf"], dtype=float), W,
                    np.array(doc["bias"], dtype=float), list(doc["classes"]), Hyper(**doc["hyper"]))
        if not (np.all(np.isfinite(model.weights)) and np.all(np.isfinite(model.bias))):
            raise ModelError("non-finite parameters in model file")
        return model

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "LinearModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def train(X, labels: Sequence[int], hyper: Hyper = Hyper(), validation=None,
          vocabulary=None, idf=None) -> LinearModel:
    """Mini-batch gradient descent on the L2-regularized multinomial log-loss.

    The L2 term is applied as an implicit (proximal) step, which keeps large
    ``l2`` values stable. With ``validation=(X_val, y_val)`` the weights of the
    epoch with the best validation macro-F1 are restored at the end.
    """
    if isinstance(X, (list, tuple)):
        n_feat = len(vocabulary) if vocabulary is not None else 1 + max(
            (max(v.indices) for v in X if v.indices), default=0)
        X = to_matrix(X, n_feat)
    X = sp.csr_matrix(X)
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ModelError("training data contains a single class")
    cls_index = {c: i for i, c in enumerate(classes)}
    y = np.array([cls_index[c] for c in labels])
    n, d = X.shape
    W = np.zeros((d, len(classes)))
    b = np.zeros(len(classes))
    rng = substream(hyper.seed, "train_shuffle")
    shrink = 1.0 / (1.0 + hyper.lr * hyper.l2)
    history = []
    best = None
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            batch = order[start:start + hyper.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                _, gW, gb = loss_and_grad(W, b, X[batch], y[batch], 0.0)
            W = (W - hyper.lr * gW) * shrink
            b = b - hyper.lr * gb
        with np.errstate(over="ignore", invalid="ignore"):
            loss, _, _ = loss_and_grad(W, b, X, y, hyper.l2)
        if not math.isfinite(loss):
            raise ModelError("diverged")
        entry = {"epoch": epoch + 1, "loss": loss}
        if validation is not None:
            Xv, yv = validation
            pred = [classes[i] for i in np.argmax(np.asarray(Xv @ W) + b, axis=1)]
            entry["val_macro_f1"] = metrics(list(yv), pred).macro_f1
            if best is None or entry["val_macro_f1"] > best[0]:
                best = (entry["val_macro_f1"], W.copy(), b.copy(), epoch + 1)
        history.append(entry)
    if best is not None:
        _, W, b, best_epoch = best
        history.append({"restored_epoch": best_epoch})
    vocab = vocabulary if vocabulary is not None else {}
    idf_arr = idf if idf is not None else np.ones(d)
    return LinearModel(vocab, idf_arr, W, b, classes, hyper, history)


def fit_text_classifier(texts: Sequence[str], labels: Sequence[int], hyper: Hyper = Hyper(),
                        validation: tuple[Sequence[str], Sequence[int]] | None = None) -> LinearModel:
    corpus = [tokenize(t) for t in texts]
    vocab, idf = fit_features(corpus, hyper.min_df)
    X = to_matrix([vectorize(toks, vocab, idf) for toks in corpus], len(vocab))
    val = None
    if validation is not None:
        vt, vy = validation
        Xv = to_matrix([vectorize(tokenize(t), vocab, idf) for t in vt], len(vocab))
        val = (Xv, list(vy))
    return train(X, labels, hyper, validation=val, vocabulary=vocab, idf=idf)


def predict(model: LinearModel, t) -> int:
    text = t.text if hasattr(t, "text") else t
    return model.predict_texts([text])[0]


# metrics

@dataclass
class MetricSet:
    accuracy: float
    per_class: dict[int, tuple[float, float, float]]
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": {str(c): {"precision": p, "recall": r, "f1": f}
                          for c, (p, r, f) in sorted(self.per_class.items())},
        }


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def metrics(gold: Sequence[int], pred: Sequence[int]) -> MetricSet:
    """Accuracy, per-class P/R/F1 and macro averages over the classes present in ``gold``."""
    if len(gold) != len(pred):
        raise ValueError("gold and pred lengths differ")
    if not gold:
        raise ValueError("empty label vectors")
    g = np.asarray(gold)
    p = np.asarray(pred)
    per_class = {}
    for c in sorted(set(gold) | set(pred)):
        tp = int(np.sum((g == c) & (p == c)))
        prec = _ratio(tp, int(np.sum(p == c)))
        rec = _ratio(tp, int(np.sum(g == c)))
        per_class[int(c)] = (prec, rec, _ratio(2 * prec * rec, prec + rec))
    present = sorted(set(gold))
    return MetricSet(
        accuracy=float(np.mean(g == p)),
        per_class=per_class,
        macro_precision=float(np.mean([per_class[c][0] for c in present])),
        macro_recall=float(np.mean([per_class[c][1] for c in present])),
        macro_f1=float(np.mean([per_class[c][2] for c in present])),
    )


# cross-validation

@dataclass
class CvReport:
    per_fold: list[MetricSet]
    mean: MetricSet
    std: MetricSet
    fold_sizes: list[int] = field(default_factory=list)
    histories: list[list[dict]] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.per_fold)

    def summary(self) -> dict[str, str]:
        """Percentages as ``"mean ± std"`` strings, two decimals."""
        out = {}
        for name in ("accuracy", "macro_precision", "macro_recall", "macro_f1"):
            out[name] = f"{100 * getattr(self.mean, name):.2f} ± {100 * getattr(self.std, name):.2f}"
        return out

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "fold_sizes": self.fold_sizes,
            "mean": self.mean.to_dict(),
            "std": self.std.to_dict(),
            "summary": self.summary(),
            "per_fold": [m.to_dict() for m in self.per_fold],
            "histories": self.histories,
        }


def _aggregate(folds: list[MetricSet], fn) -> MetricSet:
    classes = sorted({c for m in folds for c in m.per_class})
    per_class = {}
    for c in classes:
        rows = np.array([m.per_class[c] for m in folds if c in m.per_class])
        per_class[c] = tuple(float(fn(rows[:, j])) for j in range(3))
    return MetricSet(
        accuracy=float(fn(np.array([m.accuracy for m in folds]))),
        per_class=per_class,
        macro_precision=float(fn(np.array([m.macro_precision for m in folds]))),
        macro_recall=float(fn(np.array([m.macro_recall for m in folds]))),
        macro_f1=float(fn(np.array([m.macro_f1 for m in folds]))),
    )


# (train_texts, train_labels, test_texts, test_labels) -> (predictions, history)
FitPredict = Callable[[list, list, list, list], tuple[list, list]]


def _builtin_fit_predict(hyper: Hyper, checkpoint: bool) -> FitPredict:
    def run(train_texts, train_labels, test_texts, test_labels=None):
        val = (test_texts, test_labels) if checkpoint and test_labels is not None else None
        model = fit_text_classifier(train_texts, train_labels, hyper, validation=val)
        return model.predict_texts(test_texts), model.history
    return run


def fold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle split into k contiguous folds whose sizes differ by at most one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"need at least k={k} examples, got {n}")
    order = substream(seed, "cv_folds").permutation(n)
    return np.array_split(order, k)


def kfold_cv(texts: Sequence[str], labels: Sequence[int], k: int = 10, hyper: Hyper = Hyper(),
             seed: int | None = None, fit_predict: FitPredict | None = None, checkpoint: bool = True,
             workers: int = 1) -> CvReport:
    """k-fold cross-validation of the text classifier.

    With ``checkpoint`` the built-in trainer restores, per fold, the epoch with
    the best macro-F1 on the held-out fold. ``fit_predict`` swaps in another
    model; it receives (train_texts, train_labels, test_texts, test_labels).
    """
    seed = hyper.seed if seed is None else seed
    folds = fold_indices(len(texts), k, seed)
    fp = fit_predict or _builtin_fit_predict(hyper, checkpoint)
    texts = list(texts)
    labels = list(labels)

    def run_fold(i: int):
        test = folds[i]
        train_idx = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        tr_y = [labels[j] for j in train_idx]
        if len(set(tr_y)) < 2:
            raise ModelError(f"fold {i}: training split has a single class")
        te_y = [labels[j] for j in test]
        pred, hist = fp([texts[j] for j in train_idx], tr_y, [texts[j] for j in test], te_y)
        return metrics(te_y, list(pred)), hist

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run_fold, range(k)))
    else:
        results = [run_fold(i) for i in range(k)]
    per_fold = [r[0] for r in results]
    return CvReport(
        per_fold=per_fold,
        mean=_aggregate(per_fold, np.mean),
        std=_aggregate(per_fold, np.std),
        fold_sizes=[len(f) for f in folds],
        histories=[r[1] for r in results],
    )


# external predictions

@dataclass
class PredictionSet:
    source: str
    predictions: dict[str, int]
    rejected: list[tuple[int, str]] = field(default_factory=list)

    def require(self, ids) -> None:
        missing = [i for i in ids if i not in self.predictions]
        if missing:
            raise MissingPredictionsError(missing)

    def __getitem__(self, rid: str) -> int:
        return self.predictions[rid]


def load_external_predictions(source, fmt: str = "csv") -> PredictionSet:
    preds: dict[str, int] = {}
    rejected = []
    for lineno, row in _iter_rows(source, fmt, ("id", "predicted_marker")):
        try:
            if row is None or row.get("id") in (None, "") or row.get("predicted_marker") in (None, ""):
                raise ValueError("malformed row")
            marker = _parse_int(row["predicted_marker"], "marker")
            if marker not in RIO_MARKERS:
                raise ValueError("marker out of range")
        except ValueError as exc:
            log.warning("rejecting prediction line %d: %s", lineno, exc)
            rejected.append((lineno, str(exc)))
            continue
        rid = str(row["id"]).strip()
        if rid in preds:
            raise SchemaError(f"line {lineno}: duplicate prediction id {rid!r}")
        preds[rid] = marker
    return PredictionSet("external", preds, rejected)


def builtin_predictions(model: LinearModel, ids: Sequence[str], texts: Sequence[str]) -> PredictionSet:
    return PredictionSet("builtin", dict(zip(ids, model.predict_texts(list(texts)))))
