"""Single nonlinear oscillator q'' + w0^2 q = gamma^2 f(q) + f_e(t).

It runs through the string pipeline as a one-mode system with zero damping
and a unit excitation/readout weight.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import PROFILES, DatasetProfile, oscillator_system
from .nonlinearity import LumpedNonlinearity


@dataclass(frozen=True)
class OscillatorConfig:
    omega0: float = 400.0
    gamma: float = 110.0
    nonlinearity: str = "cubic"  # cubic | sinh | neural
    profile: DatasetProfile = PROFILES["oscillator-cubic-desk"]

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")

    def dataset_profile(self) -> DatasetProfile:
        kind = self.nonlinearity if self.nonlinearity != "neural" else self.profile.nonlinearity
        return self.profile.replace(omega0=self.omega0, nonlinearity=kind, gamma=(self.gamma, self.gamma))


def make_oscillator_system(config: OscillatorConfig, net=None):
    """Returns (one-mode ModalSystem, nonlinearity, unit excitation shape)."""
    system = oscillator_system(config.omega0, config.gamma)
    if config.nonlinearity == "neural":
        if net is None:
            raise ValueError("a network is required for the neural oscillator")
        nl = net
    else:
        nl = LumpedNonlinearity(config.nonlinearity)
    return system, nl, np.ones(1)


def observed_range(bundles):
    lo = min(float(b.q.min()) for b in bundles)
    hi = max(float(b.q.max()) for b in bundles)
    return lo, hi


def sample_learned_nonlinearity(nl, q_grid) -> np.ndarray:
    """Tabulate (q, f(q)) for a one-input nonlinearity; returns an (n, 2) array."""
    q = np.asarray(q_grid, dtype=np.float64).reshape(-1, 1)
    return np.column_stack([q[:, 0], np.asarray(nl(q)).reshape(-1)])


def relative_l2_error(table: np.ndarray, reference) -> float:
    ref = np.asarray(reference(table[:, 0]), dtype=np.float64)
    return float(np.linalg.norm(table[:, 1] - ref) / np.linalg.norm(ref))


def save_table_csv(table: np.ndarray, path, reference=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "f_learned"] + (["f_target"] if reference is not None else []))
        ref = None if reference is None else np.asarray(reference(table[:, 0]))
        for i, (q, f) in enumerate(table):
            row = [repr(float(q)), repr(float(f))]
            if ref is not None:
                row.append(repr(float(ref[i])))
            w.writerow(row)
