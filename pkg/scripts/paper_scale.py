"""Full-size string run: 100 modes, 60 training trajectories of 2 s.

This is hours to days of CPU time. Use --n-traj, --duration and --epochs to
shrink it; --checkpoint-every plus --resume make long runs restartable.

    python scripts/paper_scale.py --out-dir runs/paper --epochs 5000 --checkpoint-every 10
"""
import argparse
import json
import logging
from pathlib import Path

from modalnode.dataset import PROFILES, Dataset, generate_dataset
from modalnode.evaluation import evaluate_model
from modalnode.neural import save_model
from modalnode.training import TrainingConfig, train


def dataset(name, root, overrides):
    if (root / "manifest.json").exists():
        return list(Dataset(root))
    prof = PROFILES[name].replace(**overrides) if overrides else PROFILES[name]
    return generate_dataset(prof, root)[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out-dir", default="runs/paper")
    ap.add_argument("--epochs", type=int, default=5000)
    ap.add_argument("--n-traj", type=int)
    ap.add_argument("--n-test", type=int)
    ap.add_argument("--duration", type=float)
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--checkpoint-every", type=int, default=0)
    ap.add_argument("--resume", help="checkpoint directory to continue from")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(vars(args), indent=2))
    train_over = {k: v for k, v in (("n_traj", args.n_traj), ("duration", args.duration)) if v is not None}
    test_over = {k: v for k, v in (("n_traj", args.n_test), ("duration", args.duration)) if v is not None}
    train_set = dataset("paper-train", out / "train_data", train_over)
    test_set = dataset("paper-test", out / "test_data", test_over)

    cfg = TrainingConfig(
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, seed=args.seed,
        log_path=str(out / "train_log.jsonl"), checkpoint_every=args.checkpoint_every,
        checkpoint_dir=str(out / "checkpoint"),
    )
    res = train(cfg, train_set, resume_from=args.resume)
    save_model(res.model, out / "model.bin")
    rep = evaluate_model(res.model, test_set, ("100ms", "full"), model_id="model.bin", dataset_id="paper-test")
    rep.save_json(out / "eval.json")
    rep.save_per_mode_csv(out / "per_mode.csv")
    print(json.dumps(rep.aggregate, indent=2))


if __name__ == "__main__":
    main()
