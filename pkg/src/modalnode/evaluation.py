"""Relative-MSE metrics, per-mode errors and linear-baseline comparison."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import TrajectoryBundle, excitation_shape, output_shape, regenerate_at_rate, system_for
from .integrator import DivergenceError, SimulationGrid, Trajectory, ZeroNonlinearity, rollout
from .modal import State, readout

log = logging.getLogger(__name__)


def _horizon(n_total: int, horizon) -> int:
    h = n_total if horizon is None else int(horizon)
    if not 1 <= h <= n_total:
        raise ValueError(f"horizon {h} outside [1, {n_total}]")
    return h


def _ratio_terms(pred, target, horizon):
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"misaligned series {pred.shape} vs {target.shape}")
    h = _horizon(target.shape[0], horizon)
    num = float(np.sum((pred[:h] - target[:h]) ** 2))
    den = float(np.sum(target[:h] ** 2))
    if den == 0.0:
        raise ZeroDivisionError("target series is identically zero over the horizon")
    return num, den


def rel_mse_displacement(pred, target, horizon=None) -> float:
    """sum_n |q~ - q|^2 / sum_n |q|^2 over the first ``horizon`` steps."""
    num, den = _ratio_terms(pred, target, horizon)
    return num / den


def rel_mse_output(pred_w, target_w, horizon=None) -> float:
    num, den = _ratio_terms(pred_w, target_w, horizon)
    return num / den


def per_mode_mse(pred: Trajectory, target: Trajectory, horizon=None):
    """(displacement, velocity) MSE per mode over the first ``horizon`` steps."""
    if pred.q.shape != target.q.shape:
        raise ValueError("misaligned trajectories")
    h = _horizon(target.q.shape[0], horizon)
    return (
        np.mean((pred.q[:h] - target.q[:h]) ** 2, axis=0),
        np.mean((pred.p[:h] - target.p[:h]) ** 2, axis=0),
    )


def free_rollout(nl, bundle: TrajectoryBundle) -> Trajectory:
    """Free-running prediction from rest with the bundle's system and excitation."""
    return rollout(
        State.zeros(bundle.modes), system_for(bundle), nl, bundle.excitation, excitation_shape(bundle), bundle.grid
    )


def linear_baseline(bundle: TrajectoryBundle) -> Trajectory:
    return free_rollout(ZeroNonlinearity(), bundle)


def parse_horizon(spec: str, fs: float) -> int | None:
    """'100ms' -> steps, '0.5s' -> steps, '4410' -> steps, 'full' -> None."""
    spec = spec.strip()
    if spec == "full":
        return None
    if spec.endswith("ms"):
        return int(round(float(spec[:-2]) * 1e-3 * fs))
    if spec.endswith("s"):
        return int(round(float(spec[:-1]) * fs))
    return int(spec)


@dataclass
class TrajectoryMetrics:
    index: int
    diverged: bool = False
    # per horizon label: numerators / denominators for q and w, model and linear
    terms: dict = field(default_factory=dict)

    def rel(self, label, what="q", which="model"):
        t = self.terms[label]
        return t[f"{which}_{what}_num"] / t[f"{what}_den"]


@dataclass
class EvalReport:
    model_id: str
    dataset_id: str
    horizons: list
    trajectories: list
    aggregate: dict  # label -> ratio-of-sums and mean-of-ratios metrics
    per_mode: dict  # model/linear -> q/p -> per-mode arrays (first horizon)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_mode"] = {k: {kk: np.asarray(vv).tolist() for kk, vv in v.items()} for k, v in self.per_mode.items()}
        return d

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def save_per_mode_csv(self, path) -> None:
        M = len(self.per_mode["model"]["q"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "model_q_mse", "model_p_mse", "linear_q_mse", "linear_p_mse"])
            for m in range(M):
                w.writerow(
                    [m + 1]
                    + [repr(float(self.per_mode[a][b][m])) for a in ("model", "linear") for b in ("q", "p")]
                )


def _aggregate(trajs, label):
    ok = [t for t in trajs if not t.diverged]
    out = {"n_trajectories": len(ok), "n_diverged": len(trajs) - len(ok)}
    if not ok:
        return out
    for which in ("model", "linear"):
        for what in ("q", "w"):
            num = sum(t.terms[label][f"{which}_{what}_num"] for t in ok)
            den = sum(t.terms[label][f"{what}_den"] for t in ok)
            out[f"{which}_rel_mse_{what}"] = num / den
            out[f"{which}_mean_rel_mse_{what}"] = float(np.mean([t.rel(label, what, which) for t in ok]))
    return out


def evaluate_model(model, bundles, horizons=("100ms", "full"), fs=None, model_id="model", dataset_id="dataset"):
    """Free-running rollouts of ``model`` against each target bundle.

    ``model`` is any nonlinearity. ``horizons`` are labels understood by
    parse_horizon. With ``fs`` the targets are re-simulated at that rate and
    the model runs on the new grid unchanged. Aggregates are ratios of summed
    numerators and denominators; per-trajectory means are reported alongside.
    Per-mode arrays are averaged over trajectories for the first horizon.
    """
    bundles = list(bundles)
    trajs = []
    pm = {"model": {"q": 0.0, "p": 0.0}, "linear": {"q": 0.0, "p": 0.0}}
    n_pm = 0
    for i, target in enumerate(bundles):
        if fs is not None and fs != target.fs:
            target = regenerate_at_rate(target, fs)
        if getattr(model, "n_inputs", target.modes) != target.modes:
            raise ValueError(f"model expects {model.n_inputs} modes, dataset has {target.modes}")
        tm = TrajectoryMetrics(i)
        try:
            pred = free_rollout(model, target)
        except DivergenceError as err:
            log.warning("trajectory %d diverged at step %d", i, err.step)
            tm.diverged = True
            trajs.append(tm)
            continue
        lin = linear_baseline(target)
        phi_o = output_shape(target)
        pred_w, lin_w = readout(pred.q, phi_o), readout(lin.q, phi_o)
        truth = Trajectory(target.q, target.p)
        for j, label in enumerate(horizons):
            h = parse_horizon(label, target.fs)
            h = None if h is None else min(h, target.n_steps)
            mq, dq = _ratio_terms(pred.q, target.q, h)
            mw, dw = _ratio_terms(pred_w, target.w, h)
            lq, _ = _ratio_terms(lin.q, target.q, h)
            lw, _ = _ratio_terms(lin_w, target.w, h)
            tm.terms[label] = {
                "model_q_num": mq, "model_w_num": mw, "linear_q_num": lq, "linear_w_num": lw,
                "q_den": dq, "w_den": dw,
            }
            if j == 0:
                for which, traj in (("model", pred), ("linear", lin)):
                    eq, ep = per_mode_mse(traj, truth, h)
                    pm[which]["q"] = pm[which]["q"] + eq
                    pm[which]["p"] = pm[which]["p"] + ep
        n_pm += 1
        trajs.append(tm)
    per_mode = {w: {k: np.asarray(v) / max(n_pm, 1) for k, v in d.items()} for w, d in pm.items()}
    aggregate = {label: _aggregate(trajs, label) for label in horizons}
    return EvalReport(model_id, dataset_id, list(horizons), [asdict(t) for t in trajs], aggregate, per_mode)
