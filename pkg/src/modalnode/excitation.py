"""Raised-cosine pluck excitation and seeded parameter draws."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .modal import ScaledStringParams


@dataclass(frozen=True)
class PluckParams:
    amplitude: float
    duration: float  # s
    position: float  # x_e in (0, 1)

    def __post_init__(self):
        if not self.amplitude > 0 or not self.duration > 0:
            raise ValueError("pluck amplitude and duration must be positive")
        if not 0.0 < self.position < 1.0:
            raise ValueError(f"excitation position must lie in (0, 1), got {self.position}")


def pluck_value(params: PluckParams, t):
    """1/2 f_amp [1 - cos(pi t / T_e)] on [0, T_e], zero elsewhere.

    The pulse peaks at f_amp exactly at t = T_e and then drops to zero.
    """
    t = np.asarray(t, dtype=np.float64)
    inside = (t >= 0.0) & (t <= params.duration)
    val = 0.5 * params.amplitude * (1.0 - np.cos(np.pi * t / params.duration))
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def sample_pluck_sequence(params: PluckParams, fs: float, n: int) -> np.ndarray:
    if fs <= 0 or n < 1:
        raise ValueError("fs must be positive and n >= 1")
    return pluck_value(params, np.arange(n) / fs)


Interval = tuple  # (lo, hi)


@dataclass(frozen=True)
class ParameterRanges:
    """Sampling ranges for one dataset. Times in s, rates in Hz."""

    gamma: Interval = (123.4, 123.4)
    kappa: Interval = (1.01, 1.01)
    sigma0: float = 3.0
    sigma1: float = 2e-4
    x_e: Interval = (0.1, 0.9)
    x_o: Interval = (0.1, 0.9)
    f_amp: Interval = (2e4, 3e4)
    T_e: Interval = (0.5e-3, 1.5e-3)
    fs: float = 88200.0
    duration: float = 2.0
    n_traj: int = 60
    seed: int = 0

    def __post_init__(self):
        for f in ("gamma", "kappa", "x_e", "x_o", "f_amp", "T_e"):
            lo, hi = getattr(self, f)
            object.__setattr__(self, f, (float(lo), float(hi)))
            if lo > hi:
                raise ValueError(f"{f}: lower bound {lo} exceeds upper bound {hi}")
        if self.gamma[0] <= 0 or self.f_amp[0] <= 0 or self.T_e[0] <= 0:
            raise ValueError("gamma, f_amp and T_e must be positive")
        if self.kappa[0] < 0 or self.sigma0 < 0 or self.sigma1 < 0:
            raise ValueError("kappa and loss parameters must be non-negative")
        for f in ("x_e", "x_o"):
            lo, hi = getattr(self, f)
            if not (0.0 <= lo and hi <= 1.0):
                raise ValueError(f"{f} must lie within [0, 1]")
        if self.fs <= 0 or self.duration <= 0 or self.n_traj < 1:
            raise ValueError("fs, duration and n_traj must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration * self.fs))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterRanges":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown range keys: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ParameterRanges":
        return cls.from_dict(json.loads(Path(path).read_text()))


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent PCG64 stream per (seed, trajectory index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def _uniform(rng, interval):
    lo, hi = interval
    u = rng.random()
    return lo if lo == hi else lo + (hi - lo) * u


def draw_trajectory_params(ranges: ParameterRanges, rng: np.random.Generator):
    """Returns (ScaledStringParams, PluckParams, x_o). Draw order is fixed."""
    gamma = _uniform(rng, ranges.gamma)
    kappa = _uniform(rng, ranges.kappa)
    x_e = _uniform(rng, ranges.x_e)
    x_o = _uniform(rng, ranges.x_o)
    f_amp = _uniform(rng, ranges.f_amp)
    T_e = _uniform(rng, ranges.T_e)
    scaled = ScaledStringParams(gamma=gamma, kappa=kappa, sigma0=ranges.sigma0, sigma1=ranges.sigma1)
    return scaled, PluckParams(f_amp, T_e, x_e), x_o
