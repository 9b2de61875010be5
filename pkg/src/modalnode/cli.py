"""Command-line front end: modalnode <subcommand> ...

Errors are reported as one JSON line on stderr with a non-zero exit code.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import audio
from .dataset import (
    PROFILES,
    Dataset,
    PluckParams,
    ScaledStringParams,
    generate_dataset,
    load_bundle,
    read_bundle_header,
    save_bundle,
    simulate_bundle,
)
from .evaluation import evaluate_model
from .integrator import ZeroNonlinearity
from .neural import load_model, save_model
from .nonlinearity import COUNT_CONVENTIONS, build_tensor, load_tensor, save_tensor
from .oscillator import observed_range, relative_l2_error, sample_learned_nonlinearity, save_table_csv
from .training import TrainingConfig, train

log = logging.getLogger("modalnode")

SIMULATE_DEFAULTS = {
    "system": "string",
    "modes": 16,
    "gamma": 123.4,
    "kappa": 1.01,
    "sigma0": 3.0,
    "sigma1": 2e-4,
    "x_e": 0.3,
    "x_o": 0.7,
    "f_amp": 2.5e4,
    "T_e": 1e-3,
    "fs": 88200.0,
    "duration": 0.25,
    "omega0": 400.0,
    "nonlinearity": "tensor",
}


def _merge(defaults: dict, config_path, overrides: dict) -> dict:
    cfg = dict(defaults)
    if config_path:
        cfg.update(json.loads(Path(config_path).read_text()))
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _echo(out_dir: Path, cfg: dict, name="config.json"):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(json.dumps(cfg, indent=2, default=str))


def cmd_simulate(args):
    over = {k: getattr(args, k) for k in SIMULATE_DEFAULTS if hasattr(args, k)}
    cfg = _merge(SIMULATE_DEFAULTS, args.config, over)
    params = ScaledStringParams(cfg["gamma"], cfg["kappa"], cfg["sigma0"], cfg["sigma1"])
    pluck = PluckParams(cfg["f_amp"], cfg["T_e"], cfg["x_e"])
    meta = {"seed": None, "index": 0, "version": 1, "system": cfg["system"], "profile": "simulate"}
    modes = cfg["modes"]
    if cfg["system"] == "oscillator":
        meta.update(omega0=cfg["omega0"], nonlinearity=cfg["nonlinearity"])
        modes = 1
    nl = None
    if args.model:
        nl = _nonlinearity(args.model, modes)
    n = int(round(cfg["duration"] * cfg["fs"]))
    bundle = simulate_bundle(params, pluck, cfg["x_o"], cfg["fs"], n, modes, meta, nl=nl)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_bundle(bundle, out)
    _echo(out.parent, cfg, out.stem + ".config.json")
    if args.wav:
        audio.write_wav(args.wav, bundle.w, bundle.fs)
    print(json.dumps({"bundle": str(out), "n_steps": bundle.n_steps, "modes": bundle.modes}))


def _profile(args):
    prof = PROFILES[args.profile]
    kw = {}
    if args.ranges:
        kw = json.loads(Path(args.ranges).read_text())
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.n_traj is not None:
        kw["n_traj"] = args.n_traj
    if args.duration is not None:
        kw["duration"] = args.duration
    if args.modes is not None:
        kw["modes"] = args.modes
    return prof.replace(**kw) if kw else prof


def cmd_gen_dataset(args):
    prof = _profile(args)
    out = Path(args.out_dir)
    _echo(out, {"profile": prof.name, "modes": prof.modes, "ranges": prof.ranges.to_dict()})
    manifest, _ = generate_dataset(prof, out)
    print(json.dumps({"dataset": str(out), "trajectories": manifest["trajectory_count"]}))


def cmd_train(args):
    cfg = TrainingConfig().__dict__.copy()
    if args.config:
        cfg.update(json.loads(Path(args.config).read_text()))
    for key in ("epochs", "lr", "batch_size", "hidden", "width", "alpha", "seed", "segment_ms", "val_fraction"):
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    out = Path(args.out_dir)
    cfg.setdefault("log_path", None)
    cfg["log_path"] = str(out / "train_log.jsonl")
    if args.checkpoint_every:
        cfg["checkpoint_every"] = args.checkpoint_every
        cfg["checkpoint_dir"] = str(out / "checkpoint")
    config = TrainingConfig(**cfg)
    _echo(out, dataclasses.asdict(config))
    ds = Dataset(args.dataset)
    result = train(config, list(ds), resume_from=args.resume)
    save_model(result.model, out / "model.bin")
    summary = {
        "model": str(out / "model.bin"),
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "train_ids": result.train_ids,
        "val_ids": result.val_ids,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))


def _nonlinearity(spec: str, modes: int):
    """'tensor', 'zero', 'cubic', 'sinh' or a model file path."""
    if spec == "tensor":
        return build_tensor(modes)
    if spec == "zero":
        return ZeroNonlinearity()
    if spec in ("cubic", "sinh"):
        from .nonlinearity import LumpedNonlinearity

        return LumpedNonlinearity(spec)
    return load_model(spec)


def cmd_eval(args):
    ds = Dataset(args.dataset)
    model = _nonlinearity(args.model, ds.manifest["modes"])
    horizons = [h.strip() for h in args.horizons.split(",")]
    report = evaluate_model(model, list(ds), horizons, fs=args.fs, model_id=args.model, dataset_id=args.dataset)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        report.save_json(out)
        _echo(out.parent, vars(args) | {"func": None}, out.stem + ".config.json")
    if args.per_mode_csv:
        report.save_per_mode_csv(args.per_mode_csv)
    print(json.dumps(report.aggregate))


def cmd_render(args):
    b = load_bundle(args.bundle)
    opts = audio.RenderOptions(args.peak_dbfs, args.bit_depth, args.window, args.hop)
    written = []
    if args.wav:
        audio.write_wav(args.wav, b.w, b.fs, opts)
        written.append(args.wav)
    if args.csv:
        audio.write_series_csv(args.csv, b.fs, {"w": b.w})
        written.append(args.csv)
    if args.modes_csv:
        cols = {f"q{m + 1}": b.q[:, m] for m in range(b.modes)}
        audio.write_series_csv(args.modes_csv, b.fs, cols)
        written.append(args.modes_csv)
    if args.stft:
        mag = audio.stft_magnitudes(b.w, opts.window, opts.hop)
        freqs = np.fft.rfftfreq(opts.window, 1.0 / b.fs)
        audio.write_matrix_csv(args.stft, mag, header=[f"{f:.6g}Hz" for f in freqs])
        written.append(args.stft)
    print(json.dumps({"written": written}))


def cmd_nl_table(args):
    net = load_model(args.model)
    if net.n_inputs != 1:
        raise ValueError("nonlinearity tables need a one-input (oscillator) model")
    lo, hi = observed_range(list(Dataset(args.dataset)))
    table = sample_learned_nonlinearity(net, np.linspace(lo, hi, args.points))
    ref = {"cubic": lambda q: -q**3, "sinh": lambda q: -np.sinh(q)}.get(args.target)
    save_table_csv(table, args.csv, ref)
    out = {"csv": args.csv, "q_range": [lo, hi]}
    if ref is not None:
        out["relative_l2_error"] = relative_l2_error(table, ref)
    print(json.dumps(out))


def cmd_tensor(args):
    t = build_tensor(args.modes)
    if args.out:
        save_tensor(t, args.out)
    counts = {c: t.nonzero_count(c) for c in COUNT_CONVENTIONS}
    print(json.dumps({"M": args.modes, "counts": counts}))


def cmd_inspect(args):
    p = Path(args.path)
    if p.is_dir():
        ds = Dataset(p)
        m = ds.manifest
        info = {k: m[k] for k in ("name", "modes", "system", "trajectory_count")}
        info["ranges"] = m["ranges"]
    else:
        head = p.read_bytes()[:8]
        if head == b"MNMODEL1":
            net = load_model(p)
            info = {"kind": "model", "dims": net.dims, "alpha": net.alpha, "params": net.param_count}
        elif head == b"MNBUNDL1":
            h = read_bundle_header(p)
            info = {"kind": "bundle"} | {k: h[k] for k in ("n_steps", "modes", "fs", "params", "pluck", "x_o", "meta")}
        elif head == b"MNTENSR1":
            t = load_tensor(p)
            info = {"kind": "tensor", "M": t.modes, "entries": len(t)}
        else:
            raise ValueError(f"{p}: unrecognised file")
    print(json.dumps(info, indent=2))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="modalnode", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="single rollout from a JSON config and/or flags")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--wav")
    s.add_argument("--model", help="override nonlinearity: tensor|zero|cubic|sinh|model file")
    s.add_argument("--system", choices=["string", "oscillator"])
    s.add_argument("--modes", type=int)
    for key in ("gamma", "kappa", "sigma0", "sigma1", "x_e", "x_o", "f_amp", "T_e", "fs", "duration", "omega0"):
        s.add_argument(f"--{key.replace('_', '-')}", dest=key, type=float)
    s.add_argument("--nonlinearity", choices=["tensor", "cubic", "sinh"])
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gen-dataset", help="generate a dataset from a named profile")
    g.add_argument("--profile", required=True, choices=sorted(PROFILES))
    g.add_argument("--seed", type=int)
    g.add_argument("--out-dir", required=True)
    g.add_argument("--n-traj", type=int)
    g.add_argument("--duration", type=float)
    g.add_argument("--modes", type=int)
    g.add_argument("--ranges", help="JSON file overriding range fields")
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train", help="train the network nonlinearity on a dataset")
    t.add_argument("--dataset", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--config")
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--hidden", type=int)
    t.add_argument("--width", type=int)
    t.add_argument("--alpha", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--segment-ms", type=float)
    t.add_argument("--val-fraction", type=float)
    t.add_argument("--checkpoint-every", type=int)
    t.add_argument("--resume")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="free-running evaluation against a dataset")
    e.add_argument("--model", required=True, help="model file, or tensor|zero")
    e.add_argument("--dataset", required=True)
    e.add_argument("--horizons", default="100ms,full")
    e.add_argument("--fs", type=float, help="re-simulate targets and model at this rate")
    e.add_argument("--out")
    e.add_argument("--per-mode-csv")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render", help="bundle -> WAV / CSV / STFT")
    r.add_argument("--bundle", required=True)
    r.add_argument("--wav")
    r.add_argument("--csv")
    r.add_argument("--modes-csv")
    r.add_argument("--stft")
    r.add_argument("--peak-dbfs", type=float, default=-1.0)
    r.add_argument("--bit-depth", type=int, default=16, choices=[16, 24])
    r.add_argument("--window", type=int, default=2048)
    r.add_argument("--hop", type=int, default=512)
    r.set_defaults(func=cmd_render)

    n = sub.add_parser("nl-table", help="tabulate a learned oscillator nonlinearity")
    n.add_argument("--model", required=True)
    n.add_argument("--dataset", required=True)
    n.add_argument("--csv", required=True)
    n.add_argument("--points", type=int, default=401)
    n.add_argument("--target", choices=["cubic", "sinh"])
    n.set_defaults(func=cmd_nl_table)

    c = sub.add_parser("tensor", help="build (and optionally dump) the coupling tensor")
    c.add_argument("--modes", type=int, required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_tensor)

    i = sub.add_parser("inspect", help="summarise a dataset, model, bundle or tensor file")
    i.add_argument("path")
    i.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        if exc.code:
            print(json.dumps({"error": "UsageError", "message": "invalid command line"}), file=sys.stderr)
            return 2
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except Exception as err:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"error": type(err).__name__, "message": str(err)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
