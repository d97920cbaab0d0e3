"""Write a synthetic workspace: training set, CRS-like records and calibration data.

    python scripts/make_synthetic.py --out work/ --n 5000 --seed 7

The calibration gold markers are "laxer" than the generating markers: with
probability --lax a truly overreported record is re-evaluated at its reported
marker, mimicking a reference scheme that finds less overreporting.
"""

import argparse
from pathlib import Path

from riomark import synth
from riomark.records import serialize_records
from riomark.report import atomic_write, csv_bytes
from riomark.seeding import substream


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--n-train", type=int, default=2000)
    ap.add_argument("--n-calibration", type=int, default=120)
    ap.add_argument("--lax", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)

    train, gold = synth.training_set(args.n_train, seed=args.seed)
    atomic_write(out / "train.csv", serialize_records(train))
    atomic_write(out / "train_labels.csv",
                 csv_bytes([{"id": k, "gold_marker": v} for k, v in gold.items()], ("id", "gold_marker")))

    crs = synth.crs_dataset(args.n, seed=args.seed, french_share=0.3)
    atomic_write(out / "crs.csv", serialize_records(crs.records))

    cal = synth.crs_dataset(args.n_calibration, seed=args.seed + 1, prefix="care", duplicate_share=0.0)
    rng = substream(args.seed, "synthetic", 99)
    care_gold = []
    for r in cal.records:
        true = cal.true_marker[r.id]
        if true < r.reported_marker and rng.random() < args.lax:
            true = r.reported_marker
        care_gold.append({"id": r.id, "gold_marker": true})
    atomic_write(out / "care.csv", serialize_records(cal.records))
    atomic_write(out / "care_gold.csv", csv_bytes(care_gold, ("id", "gold_marker")))
    print(f"wrote synthetic workspace to {out}")


if __name__ == "__main__":
    main()
