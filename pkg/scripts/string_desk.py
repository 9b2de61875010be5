"""Desk-scale string experiment: 16 modes, short trajectories.

Trains on the desk-string profile, then compares free-running rollouts of
the learned model and the linear baseline on held-out trajectories, at the
native rate and at a second rate.

    python scripts/string_desk.py --epochs 200 --out-dir runs/string_desk
"""
import argparse
import json
import logging
import time
from pathlib import Path

from modalnode.audio import write_wav
from modalnode.dataset import PROFILES, generate_dataset, output_shape
from modalnode.evaluation import evaluate_model, free_rollout, linear_baseline
from modalnode.modal import readout
from modalnode.neural import save_model
from modalnode.training import TrainingConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out-dir", default="runs/string_desk")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--hidden", type=int, default=5)
    ap.add_argument("--width", type=int, default=100)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--other-fs", type=float, default=96000.0)
    ap.add_argument("--horizons", default="100ms,full")
    ap.add_argument("--wav", action="store_true", help="render target, model and linear outputs of test trajectory 0")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(vars(args), indent=2))
    _, train_set = generate_dataset(PROFILES["desk-string"])
    _, test_set = generate_dataset(PROFILES["desk-string-test"])

    cfg = TrainingConfig(
        epochs=args.epochs, hidden=args.hidden, width=args.width, lr=args.lr, batch_size=args.batch_size,
        seed=args.seed, log_path=str(out / "train_log.jsonl"),
    )
    t0 = time.perf_counter()
    res = train(cfg, train_set)
    wall = time.perf_counter() - t0
    save_model(res.model, out / "model.bin")

    horizons = [h.strip() for h in args.horizons.split(",")]
    native = evaluate_model(res.model, test_set, horizons, model_id="model.bin", dataset_id="desk-string-test")
    other = evaluate_model(res.model, test_set, horizons, fs=args.other_fs, model_id="model.bin",
                           dataset_id=f"desk-string-test@{args.other_fs:g}")
    native.save_json(out / "eval_native.json")
    native.save_per_mode_csv(out / "per_mode_native.csv")
    other.save_json(out / "eval_other_rate.json")

    if args.wav:
        b = test_set[0]
        phi = output_shape(b)
        write_wav(out / "target.wav", b.w, b.fs)
        write_wav(out / "model.wav", readout(free_rollout(res.model, b).q, phi), b.fs)
        write_wav(out / "linear.wav", readout(linear_baseline(b).q, phi), b.fs)

    summary = {
        "train_seconds": wall,
        "best_epoch": res.best_epoch,
        "best_val_loss": res.best_val_loss,
        "native": native.aggregate,
        "other_rate": other.aggregate,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
