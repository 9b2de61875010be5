import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from modalnode.modal import (
    PhysicalStringParams,
    ScaledStringParams,
    State,
    build_modal_system,
    mode_shape_vector,
    readout,
    scale_physical,
)


def string_with(gamma, kappa, L=1.0, rho=7850.0, r=5e-4, sigma1=0.0):
    """Physical string whose scaled gamma and kappa hit the requested values."""
    A = np.pi * r**2
    I = 0.25 * np.pi * r**4
    T = (gamma * L) ** 2 * rho * A
    E = rho * A * (kappa * L**2) ** 2 / I
    return PhysicalStringParams(L, rho, r, T, E, sigma0=3.0, sigma1=sigma1)


def test_scale_physical_formulas():
    p = PhysicalStringParams(0.65, 7850.0, 5e-4, 80.0, 2e11, 1.0, 1e-4)
    s = scale_physical(p)
    A = np.pi * 5e-4**2
    assert s.gamma == pytest.approx(np.sqrt(80.0 / (7850.0 * A)) / 0.65, rel=1e-14)
    assert s.kappa == pytest.approx(np.sqrt(2e11 * 0.25 * np.pi * 5e-4**4 / (7850.0 * A)) / 0.65**2, rel=1e-14)
    assert s.sigma1 == pytest.approx(1e-4 / 0.65**2)
    assert s.u0 == pytest.approx(np.sqrt(0.5 * (2e11 * A / 80.0 - 1.0)) / 0.65)
    assert s.force_scale == pytest.approx(s.u0 / (7850.0 * A * 0.65))


def test_doubling_length_halves_gamma_quarters_kappa():
    p = PhysicalStringParams(0.65, 7850.0, 5e-4, 80.0, 2e11)
    a = scale_physical(p)
    b = scale_physical(PhysicalStringParams(1.3, 7850.0, 5e-4, 80.0, 2e11))
    assert b.gamma == pytest.approx(a.gamma / 2, rel=1e-14)
    assert b.kappa == pytest.approx(a.kappa / 4, rel=1e-14)


def test_degenerate_and_invalid_strings_rejected():
    r = 5e-4
    A = np.pi * r**2
    with pytest.raises(ValueError, match="degenerate"):
        scale_physical(PhysicalStringParams(1.0, 7850.0, r, 100.0, 100.0 / A))
    with pytest.raises(ValueError, match="non-conservative"):
        scale_physical(PhysicalStringParams(1.0, 7850.0, r, 100.0, 50.0 / A))
    for bad in [dict(length=0.0), dict(density=-1.0), dict(radius=0.0), dict(tension=0.0)]:
        kw = dict(length=1.0, density=7850.0, radius=r, tension=80.0, young=2e11) | bad
        with pytest.raises(ValueError):
            scale_physical(PhysicalStringParams(**kw))


def test_steel_like_string_gives_61_72_hz():
    s = scale_physical(string_with(123.4, 1.01))
    assert s.gamma == pytest.approx(123.4, rel=1e-12)
    sys = build_modal_system(s, 1)
    assert sys.omega[0] / (2 * np.pi) == pytest.approx(61.72, abs=0.01)


def test_table1_frequencies():
    sys = build_modal_system(ScaledStringParams(123.4, 1.01, 3.0, 2e-4), 100)
    assert sys.omega[0] / (2 * np.pi) == pytest.approx(61.72, abs=0.01)
    assert sys.omega[-1] / (2 * np.pi) == pytest.approx(17e3, rel=0.01)
    beta = np.pi * np.arange(1, 101)
    assert np.allclose(sys.damping, 3.0 + 2e-4 * beta**2, rtol=1e-15)


def test_harmonic_when_stiffness_and_sigma1_vanish():
    sys = build_modal_system(ScaledStringParams(100.0, 0.0, 2.0, 0.0), 6)
    assert np.allclose(sys.omega, 100.0 * np.pi * np.arange(1, 7), rtol=1e-15)
    assert np.all(sys.damping == 2.0)


def test_invariance_under_length_rescaling():
    base = string_with(123.4, 1.01, L=0.8, sigma1=3e-4)
    ref = build_modal_system(scale_physical(base), 30)
    for c in (0.5, 1.7, 3.0):
        other = string_with(123.4, 1.01, L=0.8 * c, sigma1=3e-4 * c**2)
        sys = build_modal_system(scale_physical(other), 30)
        assert np.allclose(sys.omega, ref.omega, rtol=1e-12, atol=0)
        assert np.allclose(sys.damping, ref.damping, rtol=1e-12, atol=0)


@settings(max_examples=50, deadline=None)
@given(
    gamma=st.floats(1e-3, 1e3),
    kappa=st.floats(0.0, 10.0),
    modes=st.integers(2, 200),
)
def test_omega_strictly_increasing(gamma, kappa, modes):
    sys = build_modal_system(ScaledStringParams(gamma, kappa, 0.0, 0.0), modes)
    assert np.all(np.diff(sys.omega) > 0)


def test_mode_shape_values():
    assert np.all(mode_shape_vector(0.0, 5) == 0.0)
    v = mode_shape_vector(0.5, 2)
    assert v[0] == pytest.approx(np.sqrt(2))
    assert v[1] == pytest.approx(0.0, abs=1e-15)
    assert mode_shape_vector(0.25, 2)[1] == pytest.approx(np.sqrt(2))
    with pytest.raises(ValueError):
        mode_shape_vector(1.2, 3)
    with pytest.raises(ValueError):
        mode_shape_vector(-0.01, 3)


def test_mode_shapes_orthonormal():
    x = np.linspace(0, 1, 8193)
    Phi = np.array([mode_shape_vector(xi, 32) for xi in x])  # (n, M)
    gram = trapezoid(Phi[:, :, None] * Phi[:, None, :], x, axis=0)
    assert np.allclose(gram, np.eye(32), atol=1e-6)


def test_readout(rng):
    assert readout(np.eye(3)[0], mode_shape_vector(0.5, 3)) == pytest.approx(np.sqrt(2))
    assert readout(np.zeros(4), mode_shape_vector(0.3, 4)) == 0.0
    q = rng.normal(size=4)
    direct = sum(np.sqrt(2) * np.sin((m + 1) * np.pi * 0.3) * q[m] for m in range(4))
    assert readout(q, mode_shape_vector(0.3, 4)) == pytest.approx(direct, rel=1e-14)
    with pytest.raises(ValueError):
        readout(np.zeros(3), np.zeros(4))


def test_state_shapes():
    s = State(np.zeros(3))
    assert s.p.shape == (3,)
    with pytest.raises(ValueError):
        State(np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        ScaledStringParams(0.0, 1.0, 0.0, 0.0)
