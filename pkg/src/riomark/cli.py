"""``riomark`` command line: train, cv, predict, estimate, diagnose.

Option values resolve as flag > config file > default. The seed additionally
falls back to the ``RIOMARK_SEED`` environment variable before the default.

Exit codes: 0 success, 2 usage or precondition error, 3 input schema error,
4 missing predictions, 5 model error, 6 estimation error, 7 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections import Counter, defaultdict

import numpy as np

from . import __version__
from .bayes import read_pairs
from .classifier import (Hyper, LinearModel, PredictionSet, builtin_predictions, fit_text_classifier,
                         kfold_cv, load_external_predictions, metrics)
from .diagnostics import DEFAULT_BINS, agreement_by_length, length_report
from .errors import RiomarkError
from .pipeline import pairs_from_gold, rerun_excluding_short, run_estimate
from .records import (TOP_FIVE_DONORS, DatasetFilter, apply_filter, format_for_path, join_gold,
                      parse_gold_labels, read_records)
from .report import ReportWriter, RunManifest, atomic_write, csv_bytes, pct
from .seeding import substream
from .text import (TagFileTagger, assemble_text, duplicate_report_rows, find_duplicates, stopword_tagger,
                   tag_language, unique_ratio)

log = logging.getLogger("riomark")

DEFAULTS = {
    "seed": 0,
    "l2": Hyper.l2,
    "lr": Hyper.lr,
    "epochs": Hyper.epochs,
    "batch_size": Hyper.batch_size,
    "min_df": Hyper.min_df,
    "k": None,
    "holdout": 0.2,
    "samples": 100_000,
    "workers": 1,
    "exclude_short": "off",
    "length_source": "long_description",
    "include_short": False,
    "donors": None,
    "years": None,
    "bins": DEFAULT_BINS,
    "strict": False,
}
CASTS = {
    "seed": int, "l2": float, "lr": float, "epochs": int, "batch_size": int, "min_df": int,
    "k": int, "holdout": float, "samples": int, "workers": int, "bins": int,
    "include_short": lambda v: str(v).strip().lower() in ("1", "true", "yes", "on"),
    "strict": lambda v: str(v).strip().lower() in ("1", "true", "yes", "on"),
}

PER_YEAR_COLUMNS = ("year", "classifier_rate", "care_lo", "care_hi", "count")
RATE_COLUMNS = ("donor", "year", "n", "n_overreported", "rate", "low_n")
FLAG_COLUMNS = ("id", "reported", "predicted", "overreported")
DUPLICATE_COLUMNS = ("text_hash", "group_size", "marker_0", "marker_1", "marker_2", "example_id")
BIN_COLUMNS = ("bin_lo", "bin_hi", "n", "agreement")


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def resolve(args: argparse.Namespace) -> dict:
    config = read_config(args.config) if getattr(args, "config", None) else {}
    resolved = {}
    for key, default in DEFAULTS.items():
        if not hasattr(args, key):
            continue
        value = getattr(args, key)
        if value is None and key in config:
            value = CASTS.get(key, str)(config[key])
        if value is None and key == "seed" and os.environ.get("RIOMARK_SEED"):
            value = int(os.environ["RIOMARK_SEED"])
        resolved[key] = default if value is None else value
    return resolved


def _hyper(cfg: dict) -> Hyper:
    return Hyper(l2=cfg["l2"], lr=cfg["lr"], epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                 min_df=cfg["min_df"], seed=cfg["seed"])


def _load_records(path, cfg):
    result = read_records(path, strict=cfg.get("strict", False))
    if result.n_skipped:
        log.warning("%s: skipped %d malformed rows", path, result.n_skipped)
    return result.records


def _dataset_filter(cfg) -> DatasetFilter:
    donors = None
    if cfg.get("donors"):
        if cfg["donors"].strip().lower() == "top5":
            donors = TOP_FIVE_DONORS
        else:
            donors = frozenset(d.strip() for d in cfg["donors"].split(",") if d.strip())
    years = None
    if cfg.get("years"):
        lo, _, hi = cfg["years"].partition("-")
        years = (int(lo), int(hi or lo))
    return DatasetFilter(min_reported_marker=1, donors=donors, year_range=years)


def _texts(records, cfg) -> list[str]:
    return [assemble_text(r, cfg["include_short"]).text for r in records]


def _training_data(args, cfg):
    records = _load_records(args.records, cfg)
    with open(args.labels, "rb") as fh:
        labels = parse_gold_labels(fh, strict=cfg["strict"])
    joined = join_gold(records, labels)
    if not joined.pairs:
        raise RiomarkError("no labelled training records")
    recs = [r for r, _ in joined.pairs]
    return recs, _texts(recs, cfg), [g for _, g in joined.pairs]


def _predictions(args, records, cfg, manifest: RunManifest) -> PredictionSet | None:
    if getattr(args, "predictions", None):
        manifest.add_input("predictions", args.predictions)
        with open(args.predictions, "rb") as fh:
            return load_external_predictions(fh, format_for_path(args.predictions))
    if getattr(args, "model", None):
        manifest.add_input("model", args.model)
        model = LinearModel.load(args.model)
        return builtin_predictions(model, [r.id for r in records], _texts(records, cfg))
    return None


def _manifest(command: str, cfg: dict) -> RunManifest:
    return RunManifest(command, {k: v for k, v in sorted(cfg.items())}, cfg.get("seed", 0))


# subcommands

def cmd_cv(args) -> int:
    cfg = resolve(args)
    recs, texts, labels = _training_data(args, cfg)
    k = cfg["k"] or 10
    report = kfold_cv(texts, labels, k, _hyper(cfg), seed=cfg["seed"], workers=cfg["workers"])
    manifest = _manifest("cv", cfg)
    manifest.add_input("records", args.records)
    manifest.add_input("labels", args.labels)
    if args.out:
        w = ReportWriter(args.out, manifest)
        w.json("cv.json", report.to_dict())
        w.finish()
    for name, value in report.summary().items():
        print(f"{name:>16}: {value}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve(args)
    recs, texts, labels = _training_data(args, cfg)
    hyper = _hyper(cfg)
    manifest = _manifest("train", cfg)
    manifest.add_input("records", args.records)
    manifest.add_input("labels", args.labels)
    writer = ReportWriter(args.out, manifest) if args.out else None
    if cfg["k"]:
        report = kfold_cv(texts, labels, cfg["k"], hyper, seed=cfg["seed"], workers=cfg["workers"])
        print("cross-validation:", ", ".join(f"{k} {v}" for k, v in report.summary().items()))
        if writer:
            writer.json("cv.json", report.to_dict())
    n = len(texts)
    order = substream(cfg["seed"], "holdout_split").permutation(n)
    n_eval = int(round(cfg["holdout"] * n))
    if not 0 < n_eval < n:
        raise ValueError(f"holdout {cfg['holdout']} leaves an empty split for {n} examples")
    ev, tr = np.sort(order[:n_eval]), np.sort(order[n_eval:])
    model = fit_text_classifier([texts[i] for i in tr], [labels[i] for i in tr], hyper,
                                validation=([texts[i] for i in ev], [labels[i] for i in ev]))
    held = metrics([labels[i] for i in ev], model.predict_texts([texts[i] for i in ev]))
    atomic_write(args.model_out, model.to_json().encode("utf-8"))
    print(f"held-out accuracy {pct(held.accuracy)}, macro F1 {pct(held.macro_f1)}; model -> {args.model_out}")
    if writer:
        writer.json("eval.json", {"n_train": len(tr), "n_eval": len(ev), "metrics": held.to_dict(),
                                  "history": model.history})
        writer.finish()
    return 0


def cmd_predict(args) -> int:
    cfg = resolve(args)
    records = _load_records(args.records, cfg)
    model = LinearModel.load(args.model)
    preds = builtin_predictions(model, [r.id for r in records], _texts(records, cfg))
    rows = [{"id": r.id, "predicted_marker": preds[r.id]} for r in records]
    atomic_write(args.out, csv_bytes(rows, ("id", "predicted_marker")))
    print(f"wrote {len(rows)} predictions -> {args.out}")
    return 0


def _calibration_pairs(args, cfg, manifest):
    if args.calibration:
        manifest.add_input("calibration", args.calibration)
        return read_pairs(args.calibration)
    if not (args.calibration_records and args.calibration_gold):
        raise ValueError("give --calibration, or --calibration-records with --calibration-gold")
    manifest.add_input("calibration_records", args.calibration_records)
    manifest.add_input("calibration_gold", args.calibration_gold)
    recs = _load_records(args.calibration_records, cfg)
    with open(args.calibration_gold, "rb") as fh:
        gold = {g.id: g.gold_marker for g in parse_gold_labels(fh, strict=cfg["strict"])}
    if args.calibration_predictions:
        manifest.add_input("calibration_predictions", args.calibration_predictions)
        with open(args.calibration_predictions, "rb") as fh:
            preds = load_external_predictions(fh, format_for_path(args.calibration_predictions))
    elif args.model:
        preds = builtin_predictions(LinearModel.load(args.model), [r.id for r in recs], _texts(recs, cfg))
    else:
        raise ValueError("calibration records need --model or --calibration-predictions")
    scoped = [r for r in recs if r.reported_marker > 0 and r.id in gold]
    preds.require([r.id for r in scoped])
    return pairs_from_gold(scoped, preds.predictions, gold, cfg["length_source"])


def _write_run(w: ReportWriter, run, suffix: str) -> None:
    w.csv(f"per_year{suffix}.csv", run.per_year_rows(), PER_YEAR_COLUMNS)
    w.csv(f"donor_year{suffix}.csv", [s.to_row() for s in run.by_donor_year], RATE_COLUMNS)
    w.json(f"factor{suffix}.json", run.factor.to_dict())


def _print_run(label: str, run) -> None:
    f = run.factor
    c = run.corrected
    print(f"[{label}] records {run.overall.n}, classifier rate {pct(run.overall.rate)}")
    print(f"[{label}] correction factor {pct(f.point)} ([{pct(f.ci95[0])}; {pct(f.ci95[1])}])")
    print(f"[{label}] corrected rate {pct(c.point)} ([{pct(c.ci95[0])}; {pct(c.ci95[1])}])")


def cmd_estimate(args) -> int:
    cfg = resolve(args)
    manifest = _manifest("estimate", cfg)
    manifest.add_input("records", args.records)
    records = apply_filter(_load_records(args.records, cfg), _dataset_filter(cfg))
    preds = _predictions(args, records, cfg, manifest)
    if preds is None:
        raise ValueError("estimate needs --model or --predictions")
    preds.require([r.id for r in records])
    pairs = _calibration_pairs(args, cfg, manifest)
    primary = run_estimate(records, preds.predictions, pairs, cfg["seed"], cfg["samples"], cfg["workers"])

    w = ReportWriter(args.out, manifest)
    _write_run(w, primary, "")
    w.csv("flags.csv", [{"id": f.id, "reported": f.reported, "predicted": f.predicted,
                         "overreported": int(f.overreported)} for f in primary.flags.flags], FLAG_COLUMNS)
    summary = {"unfiltered": primary.summary()}
    _print_run("all", primary)

    mode = str(cfg["exclude_short"]).strip().lower()
    if mode != "off":
        if mode == "auto":
            lr = length_report(records, cfg["length_source"])
            cutoff = lr.cutoff
            summary["length_report"] = lr.to_dict()
        else:
            cutoff = float(int(mode))
        rerun = rerun_excluding_short(records, preds.predictions, pairs, cutoff, cfg["length_source"],
                                      cfg["seed"], cfg["samples"], cfg["workers"], primary=primary)
        _write_run(w, rerun.filtered, "_filtered")
        summary["filtered"] = rerun.filtered.summary()
        summary["filtered"]["length_source"] = cfg["length_source"]
        _print_run(f"length >= {cutoff:g}", rerun.filtered)
    w.json("summary.json", summary)
    w.finish()
    return 0


def cmd_diagnose(args) -> int:
    cfg = resolve(args)
    manifest = _manifest("diagnose", cfg)
    manifest.add_input("records", args.records)
    records = apply_filter(_load_records(args.records, cfg), _dataset_filter(cfg))
    if not records:
        raise ValueError("no records after filtering")
    w = ReportWriter(args.out, manifest)

    lr = length_report(records, cfg["length_source"])
    texts = [assemble_text(r, cfg["include_short"]) for r in records]
    if args.language_tags:
        manifest.add_input("language_tags", args.language_tags)
        tagger = TagFileTagger.from_csv(args.language_tags)
    else:
        tagger = stopword_tagger
    texts = [tag_language(t, tagger) for t in texts]
    languages = defaultdict(Counter)
    for r, t in zip(records, texts):
        languages[r.donor][t.language_tag] += 1

    groups = find_duplicates(texts, records)
    uniq_rows = []
    cells = defaultdict(list)
    for r, t in zip(records, texts):
        cells[(r.donor, r.year)].append(t)
    for (donor, year), ts in sorted(cells.items()):
        n, distinct, ratio = unique_ratio(ts)
        uniq_rows.append({"donor": donor, "year": year, "count": n, "unique": distinct, "unique_ratio": ratio})

    report = lr.to_dict()
    report["languages"] = {d: dict(sorted(c.items())) for d, c in sorted(languages.items())}
    report["n_duplicate_groups"] = len(groups)
    w.json("length_report.json", report)
    w.csv("duplicates.csv", duplicate_report_rows(groups), DUPLICATE_COLUMNS)
    w.csv("unique_by_donor_year.csv", uniq_rows, ("donor", "year", "count", "unique", "unique_ratio"))

    preds = _predictions(args, records, cfg, manifest)
    if preds is None:
        print("no predictions supplied; skipping agreement bins")
    else:
        preds.require([r.id for r in records])
        bins = agreement_by_length(records, preds.predictions, cfg["bins"], cfg["length_source"])
        w.csv("agreement_bins.csv", [b.to_row() for b in bins], BIN_COLUMNS)
    w.finish()
    print(f"length cutoff {lr.cutoff:g} characters (q1 {lr.q1:g}, q3 {lr.q3:g}); "
          f"{len(groups)} duplicate groups")
    return 0


# parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--strict", action="store_const", const=True, help="abort on the first bad row")
    p.add_argument("--workers", type=int)
    p.add_argument("--include-short", dest="include_short", action="store_const", const=True,
                   help="add the short description to the classifier input")
    p.add_argument("-v", "--verbose", action="store_true")


def _hyper_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--l2", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--min-df", dest="min_df", type=int)


def _filter_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--donors", help="comma-separated donor names, or 'top5'")
    p.add_argument("--years", help="YYYY or YYYY-YYYY")
    p.add_argument("--length-source", dest="length_source", choices=("assembled", "long_description"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riomark", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"riomark {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the baseline classifier on gold-labelled records")
    _common(p)
    _hyper_args(p)
    p.add_argument("--records", required=True)
    p.add_argument("--labels", required=True, help="CSV id,gold_marker")
    p.add_argument("--model-out", dest="model_out", required=True)
    p.add_argument("--k", type=int, help="also run k-fold cross-validation first")
    p.add_argument("--holdout", type=float, help="evaluation share of the final split (default 0.2)")
    p.add_argument("--out", help="directory for cv.json / eval.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="k-fold cross-validation of the baseline classifier")
    _common(p)
    _hyper_args(p)
    p.add_argument("--records", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="write predicted markers for records")
    _common(p)
    p.add_argument("--records", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="CSV id,predicted_marker")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("estimate", help="raw and corrected overreporting rates")
    _common(p)
    _filter_args(p)
    p.add_argument("--records", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model")
    src.add_argument("--predictions", help="CSV id,predicted_marker from an external model")
    p.add_argument("--calibration", help="CSV id,w_flag,c_flag[,char_length]")
    p.add_argument("--calibration-records", dest="calibration_records")
    p.add_argument("--calibration-gold", dest="calibration_gold")
    p.add_argument("--calibration-predictions", dest="calibration_predictions")
    p.add_argument("--samples", type=int)
    p.add_argument("--exclude-short", dest="exclude_short", help="auto | <integer> | off")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("diagnose", help="length, duplicate and agreement diagnostics")
    _common(p)
    _filter_args(p)
    p.add_argument("--records", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model")
    src.add_argument("--predictions")
    p.add_argument("--language-tags", dest="language_tags", help="CSV id,language_tag")
    p.add_argument("--bins", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RiomarkError as exc:
        print(f"riomark: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"riomark: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"riomark: error: {exc}", file=sys.stderr)
        return 7


if __name__ == "__main__":
    sys.exit(main())
