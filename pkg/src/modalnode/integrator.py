"""Explicit Stormer-Verlet integration of the modal system

    q'' + 2 S q' + Omega^2 q = gamma^2 f(q) + Phi(x_e) f_e(t)

with a pluggable nonlinearity. A nonlinearity is any callable mapping
(..., M) displacements to (..., M) forces: a CouplingTensor, a lumped closed
form, an MLP, or ZeroNonlinearity for the linear baseline.

Arrays may carry a leading batch axis; all rollouts of a batch share the
system and time step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .modal import ModalSystem, State


class DivergenceError(FloatingPointError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class SimulationGrid:
    fs: float
    n_steps: int

    def __post_init__(self):
        if not self.fs > 0 or self.n_steps < 1:
            raise ValueError("fs must be positive and n_steps >= 1")

    @property
    def k(self) -> float:
        return 1.0 / self.fs

    @classmethod
    def from_duration(cls, fs: float, duration: float) -> "SimulationGrid":
        return cls(fs, int(round(fs * duration)))


@dataclass(frozen=True)
class StabilityReport:
    passed: bool
    margin: float  # k * Omega_max / 2; must stay below 1


def check_stability(system: ModalSystem, k: float) -> StabilityReport:
    """Linear undamped Verlet bound k * Omega_max < 2."""
    margin = float(k * system.omega.max() / 2.0)
    return StabilityReport(margin < 1.0, margin)


class ZeroNonlinearity:
    def __call__(self, q):
        return np.zeros_like(np.asarray(q, dtype=np.float64))

    def __repr__(self):
        return "ZeroNonlinearity()"


class CountingNonlinearity:
    """Wraps a nonlinearity and counts how often it is evaluated."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def __call__(self, q):
        self.calls += 1
        return self.inner(q)


def _verlet_arrays(q, p, f_q, force_n, force_n1, system: ModalSystem, nl, k):
    """One step on raw arrays; forces are Phi(x_e) * f_e already projected."""
    S, W2, g2 = system.damping, system.omega**2, system.gamma**2
    p_half = p + 0.5 * k * (-2.0 * S * p - W2 * q + g2 * f_q + force_n)
    q_next = q + k * p_half
    f_next = nl(q_next)
    p_next = (p_half + 0.5 * k * (-W2 * q_next + g2 * f_next + force_n1)) / (1.0 + k * S)
    return q_next, p_next, f_next


def verlet_step(state: State, system: ModalSystem, nl, fe_n, fe_n1, phi_e, k, cached_f=None, step=0):
    """Advance (q^n, p^n) -> (q^{n+1}, p^{n+1}).

    Returns (next_state, f(q^{n+1})); pass the latter as ``cached_f`` on the
    following call to evaluate the nonlinearity once per step.
    """
    if state.q.shape[-1] != system.modes:
        raise ValueError(f"state has {state.q.shape[-1]} modes, system has {system.modes}")
    f_q = nl(state.q) if cached_f is None else cached_f
    phi_e = np.asarray(phi_e, dtype=np.float64)
    force_n = phi_e * np.asarray(fe_n)[..., None] if np.ndim(fe_n) else phi_e * fe_n
    force_n1 = phi_e * np.asarray(fe_n1)[..., None] if np.ndim(fe_n1) else phi_e * fe_n1
    q, p, f_next = _verlet_arrays(state.q, state.p, f_q, force_n, force_n1, system, nl, k)
    if not (np.isfinite(q).all() and np.isfinite(p).all()):
        raise DivergenceError(step + 1)
    return State(q, p), f_next


@dataclass
class Trajectory:
    """States on the integer grid; axis -2 is time (N, M) or (B, N, M)."""

    q: np.ndarray
    p: np.ndarray


def rollout(initial: State, system: ModalSystem, nl, pluck, phi_e, grid: SimulationGrid, force: bool = False):
    """Integrate N - 1 steps from ``initial``; index 0 holds the initial state.

    ``pluck`` is the excitation sampled on the grid, shape (N,) or (B, N) for
    a batch of initial states (B, M). Raises StabilityError unless the linear
    bound holds (override with ``force``) and DivergenceError on non-finite
    states.
    """
    report = check_stability(system, grid.k)
    if not report.passed and not force:
        raise StabilityError(f"k * Omega_max = {2 * report.margin:.4g} >= 2; increase fs or pass force=True")
    k, N = grid.k, grid.n_steps
    pluck = np.asarray(pluck, dtype=np.float64)
    if pluck.shape[-1] < N:
        raise ValueError(f"excitation has {pluck.shape[-1]} samples, need {N}")
    phi_e = np.asarray(phi_e, dtype=np.float64)
    q, p = initial.q, initial.p
    batch = q.shape[:-1]
    Q = np.empty(batch[:1] + (N,) + q.shape[-1:]) if batch else np.empty((N, q.shape[-1]))
    P = np.empty_like(Q)
    Q[..., 0, :], P[..., 0, :] = q, p
    # forces indexed by absolute step: (N, ..., M)
    forces = np.moveaxis(pluck[..., :N], -1, 0)[..., None] * phi_e
    f_q = nl(q)
    for n in range(N - 1):
        q, p, f_q = _verlet_arrays(q, p, f_q, forces[n], forces[n + 1], system, nl, k)
        if not (np.isfinite(q).all() and np.isfinite(p).all()):
            raise DivergenceError(n + 1)
        Q[..., n + 1, :], P[..., n + 1, :] = q, p
    return Trajectory(Q, P)


def energy(q, p, system: ModalSystem, potential=None):
    """H = |p|^2/2 + |Omega q|^2/2 + gamma^2 V(q); potential is V or None."""
    H = 0.5 * np.sum(p**2, axis=-1) + 0.5 * np.sum((system.omega * q) ** 2, axis=-1)
    if potential is not None:
        H = H + system.gamma**2 * potential(q)
    return H
