"""Discretise-then-optimise training of the network nonlinearity.

Ground-truth trajectories are cut into short teacher-forced segments. Each
segment is rolled out with the same Verlet update as the integrator, using
the network as the nonlinearity, and the full-state MSE is backpropagated
through every solver stage by hand.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import TrajectoryBundle, excitation_shape, system_for
from .integrator import _verlet_arrays
from .neural import AdamState, MlpNetwork, adam_step, load_model, mlp_backward, mlp_forward, mlp_init, save_model

log = logging.getLogger(__name__)

DIVERGED_LOSS = math.inf


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class SegmentContext:
    """Linear system and excitation shape a segment is integrated with."""

    omega: np.ndarray
    damping: np.ndarray
    gamma: float
    phi_e: np.ndarray
    k: float

    @classmethod
    def from_bundle(cls, bundle: TrajectoryBundle) -> "SegmentContext":
        s = system_for(bundle)
        return cls(s.omega, s.damping, s.gamma, excitation_shape(bundle), 1.0 / bundle.fs)

    @classmethod
    def from_system(cls, system, phi_e, k) -> "SegmentContext":
        return cls(system.omega, system.damping, system.gamma, np.asarray(phi_e, dtype=np.float64), k)


@dataclass
class Segment:
    traj: int
    start: int  # absolute step of the initial condition
    length: int  # number of predicted steps
    q0: np.ndarray
    p0: np.ndarray
    target_q: np.ndarray  # (length, M): steps start+1 .. start+length
    target_p: np.ndarray
    excitation: np.ndarray  # (length + 1,): absolute-time samples start .. start+length
    context: SegmentContext = field(repr=False)


def segment_length(segment_ms: float, fs: float) -> int:
    # small tolerance so e.g. 1 ms at 44.1 kHz is not hit by float fuzz
    return int(math.floor(segment_ms * fs / 1000.0 + 1e-9))


def segment_dataset(bundles, segment_ms: float = 1.0, fs: float | None = None, contexts=None):
    """Non-overlapping teacher-forcing segments; partial tails are kept."""
    bundles = list(bundles)
    if not bundles:
        raise ValueError("no trajectories to segment")
    segs = []
    for t, b in enumerate(bundles):
        rate = b.fs if fs is None else fs
        L = segment_length(segment_ms, rate)
        if L < 2:
            raise ValueError(f"{segment_ms} ms at {rate:g} Hz gives {L} samples; need >= 2")
        ctx = SegmentContext.from_bundle(b) if contexts is None else contexts[t]
        N = b.n_steps
        for n0 in range(0, N - 1, L):
            n = min(L, N - 1 - n0)
            segs.append(
                Segment(
                    traj=t,
                    start=n0,
                    length=n,
                    q0=b.q[n0],
                    p0=b.p[n0],
                    target_q=b.q[n0 + 1 : n0 + n + 1],
                    target_p=b.p[n0 + 1 : n0 + n + 1],
                    excitation=b.excitation[n0 : n0 + n + 1],
                    context=ctx,
                )
            )
    return segs


class _Stacked:
    """Per-row system parameters shaped to broadcast against (B, M) states."""

    def __init__(self, segs):
        self.omega = np.stack([s.context.omega for s in segs])
        self.damping = np.stack([s.context.damping for s in segs])
        self.gamma = np.array([[s.context.gamma] for s in segs])
        self.phi_e = np.stack([s.context.phi_e for s in segs])
        ks = {s.context.k for s in segs}
        if len(ks) != 1:
            raise ValueError("segments in one batch must share the time step")
        self.k = ks.pop()


class _TapedNet:
    def __init__(self, net):
        self.net = net
        self.tapes = []

    def __call__(self, q):
        out, tape = mlp_forward(self.net, q)
        self.tapes.append(tape)
        return out


def _batch_forward(nl, segs, sys: _Stacked):
    L = segs[0].length
    q = np.stack([s.q0 for s in segs])
    p = np.stack([s.p0 for s in segs])
    exc = np.stack([s.excitation for s in segs])  # (B, L + 1)
    forces = exc.T[:, :, None] * sys.phi_e  # (L + 1, B, M)
    Q, P = [], []
    with np.errstate(over="ignore", invalid="ignore"):
        f_q = nl(q)
        for n in range(L):
            q, p, f_q = _verlet_arrays(q, p, f_q, forces[n], forces[n + 1], sys, nl, sys.k)
            Q.append(q)
            P.append(p)
    return np.stack(Q, axis=1), np.stack(P, axis=1)  # (B, L, M)


def _per_segment_loss(Q, P, segs):
    tq = np.stack([s.target_q for s in segs])
    tp = np.stack([s.target_p for s in segs])
    K, L = 2 * Q.shape[-1], Q.shape[1]
    with np.errstate(over="ignore", invalid="ignore"):
        loss = (np.sum((Q - tq) ** 2, axis=(1, 2)) + np.sum((P - tp) ** 2, axis=(1, 2))) / (K * L)
    return np.where(np.isfinite(loss), loss, DIVERGED_LOSS), tq, tp


def _by_length(segs):
    groups = {}
    for s in segs:
        groups.setdefault(s.length, []).append(s)
    return list(groups.values())


def batch_losses(nl, segs, chunk: int = 1024) -> np.ndarray:
    """Per-segment losses for any nonlinearity (no gradient)."""
    out = np.empty(len(segs))
    index = {id(s): i for i, s in enumerate(segs)}
    for group in _by_length(segs):
        for c in range(0, len(group), chunk):
            part = group[c : c + chunk]
            Q, P = _batch_forward(nl, part, _Stacked(part))
            losses, _, _ = _per_segment_loss(Q, P, part)
            for s, v in zip(part, losses):
                out[index[id(s)]] = v
    return out


def segment_loss(nl, segment: Segment) -> float:
    """(1 / (K N)) sum_n |y~^n - y^n|^2 over the segment's predicted steps.

    ``nl`` is any nonlinearity (an MlpNetwork, the exact tensor, ...).
    Returns DIVERGED_LOSS when the rollout blows up.
    """
    if segment.length < 1:
        raise ValueError("segment has no prediction horizon")
    return float(batch_losses(nl, [segment])[0])


def _batch_grad(net: MlpNetwork, segs, scale: float, grad: np.ndarray):
    """Accumulate d(scale * sum of segment losses)/d(theta) into ``grad``.

    Returns the per-segment losses.
    """
    sys = _Stacked(segs)
    taped = _TapedNet(net)
    Q, P = _batch_forward(taped, segs, sys)
    losses, tq, tp = _per_segment_loss(Q, P, segs)
    if not np.isfinite(losses).all():
        return losses
    B, L, M = Q.shape
    K = 2 * M
    k = sys.k
    S, W2, g2 = sys.damping, sys.omega**2, sys.gamma**2
    D = 1.0 / (1.0 + k * S)
    dQ = scale * 2.0 * (Q - tq) / (K * L)
    dP = scale * 2.0 * (P - tp) / (K * L)
    tapes = taped.tapes  # tapes[n] evaluated at q^n, n = 0..L
    qbar = np.zeros((B, M))
    pbar = np.zeros((B, M))
    fbar = np.zeros((B, M))
    for n in range(L - 1, -1, -1):
        # step n maps (q^n, p^n, f^n) -> (q^{n+1}, p^{n+1}, f^{n+1})
        qbar += dQ[:, n]
        pbar += dP[:, n]
        br = D * pbar
        hbar = br
        qbar -= 0.5 * k * W2 * br
        fbar += 0.5 * k * g2 * br
        _, gin = mlp_backward(net, tapes[n + 1], fbar, grad)
        qbar += gin
        hbar = hbar + k * qbar
        abar = 0.5 * k * hbar
        pbar = hbar - 2.0 * S * abar
        qbar = qbar - W2 * abar
        fbar = g2 * abar
    mlp_backward(net, tapes[0], fbar, grad)
    return losses


def segment_grad(net: MlpNetwork, segment: Segment, normalisation: float = 1.0):
    """Loss and exact d(loss)/d(theta) for one segment.

    The loss is divided by ``normalisation``. On divergence the loss is
    DIVERGED_LOSS and the gradient is zero.
    """
    if segment.length < 1:
        raise ValueError("segment has no prediction horizon")
    grad = np.zeros_like(net.params)
    losses = _batch_grad(net, [segment], 1.0 / normalisation, grad)
    if not np.isfinite(losses[0]):
        return DIVERGED_LOSS, np.zeros_like(net.params)
    return float(losses[0]) / normalisation, grad


def batch_grad(net: MlpNetwork, segs):
    """Mean loss and gradient over a mini-batch; diverging segments are skipped.

    Returns (mean loss over kept segments, gradient, number skipped).
    """
    losses = batch_losses(net, segs)
    keep = [s for s, v in zip(segs, losses) if np.isfinite(v)]
    skipped = len(segs) - len(keep)
    grad = np.zeros_like(net.params)
    if not keep:
        return DIVERGED_LOSS, grad, skipped
    for group in _by_length(keep):
        _batch_grad(net, group, 1.0 / len(keep), grad)
    return float(np.mean(losses[np.isfinite(losses)])), grad, skipped


# --- training loop -------------------------------------------------------------


@dataclass
class TrainingConfig:
    segment_ms: float = 1.0
    epochs: int = 5000
    lr: float = 1e-3
    batch_size: int = 32
    val_fraction: float = 0.2
    seed: int = 0
    hidden: int = 5
    width: int = 100
    alpha: float = 0.01
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    log_path: str | None = None
    max_skipped: int = 10000

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.segment_ms <= 0 or self.lr <= 0:
            raise ValueError("segment_ms and lr must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        return cls(**d)


def split_trajectories(n: int, val_fraction: float, seed: int):
    """Seeded trajectory-level split -> (train indices, validation indices)."""
    if n < 2:
        raise ValueError("need at least two trajectories for a train/validation split")
    n_val = min(n - 1, max(1, int(round(val_fraction * n))))
    perm = np.random.default_rng(seed).permutation(n)
    return sorted(perm[n_val:].tolist()), sorted(perm[:n_val].tolist())


@dataclass
class TrainingResult:
    model: MlpNetwork
    log: list
    best_epoch: int
    best_val_loss: float
    train_ids: list
    val_ids: list


def _mean_loss(net, segs):
    losses = batch_losses(net, segs)
    finite = np.isfinite(losses)
    return float(losses[finite].mean()) if finite.any() else DIVERGED_LOSS, int((~finite).sum())


def save_checkpoint(path, net, adam: AdamState, rng, epoch: int, best: MlpNetwork, best_val: float, best_epoch: int):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_model(net, path / "model.bin")
    save_model(best, path / "best.bin")
    np.savez(path / "optimizer.npz", m=adam.m, v=adam.v)
    (path / "state.json").write_text(
        json.dumps(
            {
                "epoch": epoch,
                "adam": {k: getattr(adam, k) for k in ("lr", "beta1", "beta2", "eps", "step")},
                "rng": rng.bit_generator.state,
                "best_val_loss": best_val,
                "best_epoch": best_epoch,
            },
            default=int,
        )
    )


def load_checkpoint(path):
    path = Path(path)
    net = load_model(path / "model.bin")
    best = load_model(path / "best.bin")
    state = json.loads((path / "state.json").read_text())
    mom = np.load(path / "optimizer.npz")
    adam = AdamState(net.param_count, m=mom["m"].copy(), v=mom["v"].copy(), **state["adam"])
    rng = np.random.default_rng()
    rng.bit_generator.state = state["rng"]
    return net, adam, rng, state, best


def train(config: TrainingConfig, bundles, net: MlpNetwork | None = None, resume_from=None, progress=None):
    """Train with Adam on teacher-forced segments; select by validation loss.

    Epoch 0 in the log is the untrained network. Returns a TrainingResult
    holding the parameters with the lowest validation loss.
    """
    bundles = list(bundles)
    train_ids, val_ids = split_trajectories(len(bundles), config.val_fraction, config.seed)
    modes = bundles[0].modes
    if any(b.modes != modes for b in bundles):
        raise ValueError("all trajectories must share the mode count")
    train_segs = segment_dataset([bundles[i] for i in train_ids], config.segment_ms)
    val_segs = segment_dataset([bundles[i] for i in val_ids], config.segment_ms)
    if not train_segs or not val_segs:
        raise ValueError("empty train or validation split")

    if resume_from is not None:
        net, adam, rng, state, best = load_checkpoint(resume_from)
        start_epoch, best_val, best_epoch = state["epoch"] + 1, state["best_val_loss"], state["best_epoch"]
        history = []
    else:
        if net is None:
            net = mlp_init(modes, config.hidden, config.width, config.alpha, config.seed)
        net = net.copy()
        if net.n_inputs != modes:
            raise ValueError(f"network has {net.n_inputs} inputs, data has {modes} modes")
        adam = AdamState(net.param_count, lr=config.lr)
        rng = np.random.default_rng(config.seed)
        t0 = time.perf_counter()
        train0, _ = _mean_loss(net, train_segs)
        best_val, skipped0 = _mean_loss(net, val_segs)
        best, best_epoch, start_epoch = net.copy(), 0, 1
        history = [_record(0, train0, best_val, time.perf_counter() - t0, skipped0)]
        _emit(config, history[-1], fresh=True)

    total_skipped = 0
    for epoch in range(start_epoch, config.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_segs))
        batch_losses_, skipped = [], 0
        for c in range(0, len(order), config.batch_size):
            batch = [train_segs[i] for i in order[c : c + config.batch_size]]
            loss, grad, sk = batch_grad(net, batch)
            skipped += sk
            if np.isfinite(loss):
                adam_step(adam, net.params, grad)
                batch_losses_.append(loss)
        total_skipped += skipped
        if total_skipped > config.max_skipped:
            raise TrainingDivergedError(
                f"{total_skipped} diverging segments by epoch {epoch} (limit {config.max_skipped})"
            )
        val, vskip = _mean_loss(net, val_segs)
        train_loss = float(np.mean(batch_losses_)) if batch_losses_ else DIVERGED_LOSS
        rec = _record(epoch, train_loss, val, time.perf_counter() - t0, skipped + vskip)
        history.append(rec)
        _emit(config, rec)
        if progress is not None:
            progress(rec)
        if val < best_val:
            best_val, best_epoch, best = val, epoch, net.copy()
        if config.checkpoint_every and config.checkpoint_dir and epoch % config.checkpoint_every == 0:
            save_checkpoint(config.checkpoint_dir, net, adam, rng, epoch, best, best_val, best_epoch)
    return TrainingResult(best, history, best_epoch, best_val, train_ids, val_ids)


def _record(epoch, train_loss, val_loss, wall, skipped):
    return {
        "epoch": epoch,
        "train_loss": train_loss,
        "val_loss": val_loss,
        "wall_time": wall,
        "skipped_segments": skipped,
    }


def _emit(config, rec, fresh=False):
    log.info("epoch %(epoch)d train %(train_loss).4e val %(val_loss).4e", rec)
    if config.log_path:
        with open(config.log_path, "w" if fresh else "a") as fh:
            fh.write(json.dumps(rec) + "\n")


def config_dict(config: TrainingConfig) -> dict:
    return asdict(config)
