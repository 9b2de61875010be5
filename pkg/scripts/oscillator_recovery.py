"""Learn the nonlinearity of a single plucked oscillator from data.

Trains one network on cubic trajectories and one on hyperbolic-sine
trajectories, then tabulates each learned f(q) over the observed range.

    python scripts/oscillator_recovery.py --epochs 200 --out-dir runs/oscillator
"""
import argparse
import json
import logging
import time
from pathlib import Path

import numpy as np

from modalnode.dataset import PROFILES, generate_dataset
from modalnode.neural import save_model
from modalnode.oscillator import observed_range, relative_l2_error, sample_learned_nonlinearity, save_table_csv
from modalnode.training import TrainingConfig, train

TARGETS = {"cubic": lambda q: -q**3, "sinh": lambda q: -np.sinh(q)}


def run(kind, args, out):
    profile = PROFILES[f"oscillator-{kind}{'' if args.full else '-desk'}"]
    _, bundles = generate_dataset(profile, out / f"data_{kind}" if args.save_data else None)
    cfg = TrainingConfig(
        epochs=args.epochs, hidden=args.hidden, width=args.width, lr=args.lr, batch_size=args.batch_size,
        seed=args.seed, log_path=str(out / f"train_log_{kind}.jsonl"),
    )
    t0 = time.perf_counter()
    res = train(cfg, bundles)
    wall = time.perf_counter() - t0
    save_model(res.model, out / f"model_{kind}.bin")
    lo, hi = observed_range(bundles)
    table = sample_learned_nonlinearity(res.model, np.linspace(lo, hi, args.points))
    save_table_csv(table, out / f"table_{kind}.csv", TARGETS[kind])
    return {
        "profile": profile.name,
        "q_range": [lo, hi],
        "best_epoch": res.best_epoch,
        "best_val_loss": res.best_val_loss,
        "train_seconds": wall,
        "rel_l2_vs": {name: relative_l2_error(table, f) for name, f in TARGETS.items()},
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out-dir", default="runs/oscillator")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--hidden", type=int, default=2)
    ap.add_argument("--width", type=int, default=100)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--points", type=int, default=401)
    ap.add_argument("--full", action="store_true", help="1 s trajectories instead of the 0.25 s desk profile")
    ap.add_argument("--save-data", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(vars(args), indent=2))
    summary = {kind: run(kind, args, out) for kind in TARGETS}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
