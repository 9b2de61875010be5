"""String parameters, scaling, modal frequencies/damping and mode shapes.

All positions are normalised to [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PhysicalStringParams:
    length: float  # m
    density: float  # kg m^-3
    radius: float  # m
    tension: float  # N
    young: float  # N m^-2
    sigma0: float = 0.0  # s^-1
    sigma1: float = 0.0  # m^2 s^-1

    @property
    def area(self) -> float:
        return np.pi * self.radius**2

    @property
    def inertia(self) -> float:
        return 0.25 * np.pi * self.radius**4


@dataclass(frozen=True)
class ScaledStringParams:
    gamma: float
    kappa: float
    sigma0: float
    sigma1: float
    u0: float = 1.0
    force_scale: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.kappa < 0 or self.sigma0 < 0 or self.sigma1 < 0:
            raise ValueError("kappa, sigma0 and sigma1 must be non-negative")
        if not self.u0 > 0:
            raise ValueError(f"u0 must be positive, got {self.u0}")


@dataclass(frozen=True)
class ModalSystem:
    """Diagonal linear skeleton: per-mode angular frequency and damping."""

    omega: np.ndarray
    damping: np.ndarray
    gamma: float

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=np.float64)
        damping = np.asarray(self.damping, dtype=np.float64)
        if omega.ndim != 1 or omega.shape != damping.shape or omega.size == 0:
            raise ValueError("omega and damping must be equal-length 1-D arrays")
        omega.setflags(write=False)
        damping.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "damping", damping)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def modes(self) -> int:
        return self.omega.size


@dataclass
class State:
    q: np.ndarray
    p: np.ndarray = field(default=None)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.p = np.zeros_like(self.q) if self.p is None else np.asarray(self.p, dtype=np.float64)
        if self.q.shape != self.p.shape:
            raise ValueError(f"q and p shapes differ: {self.q.shape} vs {self.p.shape}")

    @classmethod
    def zeros(cls, modes: int) -> "State":
        return cls(np.zeros(modes), np.zeros(modes))


def scale_physical(params: PhysicalStringParams) -> ScaledStringParams:
    """Reduce the physical parameter set to (gamma, kappa, sigma0, sigma1').

    Raises ValueError for non-positive geometry/material values and for
    EA <= T, where the geometric nonlinearity (and u0) vanishes or is not
    conservative.
    """
    L, rho, r, T, E = params.length, params.density, params.radius, params.tension, params.young
    for name, value in [("length", L), ("density", rho), ("radius", r), ("tension", T), ("young", E)]:
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    if params.sigma0 < 0 or params.sigma1 < 0:
        raise ValueError("loss parameters must be non-negative")
    A, I = params.area, params.inertia
    if E * A < T:
        raise ValueError(f"non-conservative string: EA={E * A:g} < T={T:g}")
    if E * A == T:
        raise ValueError("degenerate string: EA == T gives u0 = 0 (no nonlinearity)")
    gamma = np.sqrt(T / (rho * A)) / L
    kappa = np.sqrt(E * I / (rho * A)) / L**2
    u0 = np.sqrt(0.5 * (E * A / T - 1.0)) / L
    return ScaledStringParams(
        gamma=float(gamma),
        kappa=float(kappa),
        sigma0=params.sigma0,
        sigma1=params.sigma1 / L**2,
        u0=float(u0),
        force_scale=float(u0 / (rho * A * L)),
    )


def wavenumbers(modes: int) -> np.ndarray:
    return np.pi * np.arange(1, modes + 1, dtype=np.float64)


def build_modal_system(scaled: ScaledStringParams, modes: int) -> ModalSystem:
    if modes < 1:
        raise ValueError(f"mode count must be >= 1, got {modes}")
    beta = wavenumbers(modes)
    omega = np.sqrt(scaled.gamma**2 * beta**2 + scaled.kappa**2 * beta**4)
    damping = scaled.sigma0 + scaled.sigma1 * beta**2
    return ModalSystem(omega=omega, damping=damping, gamma=scaled.gamma)


def mode_shape_vector(x: float, modes: int) -> np.ndarray:
    """sqrt(2) sin(m pi x) for m = 1..modes."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"position must lie in [0, 1], got {x}")
    return np.sqrt(2.0) * np.sin(wavenumbers(modes) * x)


def readout(q: np.ndarray, phi_out: np.ndarray) -> np.ndarray:
    """Output w = phi_out . q; q may carry leading (time) axes."""
    q = np.asarray(q, dtype=np.float64)
    phi_out = np.asarray(phi_out, dtype=np.float64)
    if q.shape[-1] != phi_out.shape[-1]:
        raise ValueError(f"length mismatch: q has {q.shape[-1]} modes, phi has {phi_out.shape[-1]}")
    return q @ phi_out
