import numpy as np
import pytest

from stirring_lab.kernels import reflected_kernel_matrix
from stirring_lab.models import DomainError, LatticeParams, ParticleConfig, RhoField, Side
from stirring_lab.pde import (
    Scheme,
    boundary_current,
    boundary_drift,
    discrete_laplacian,
    duhamel_residual,
    evolve_rho,
    evolve_rho_path,
    gradient_envelope_fit,
    gradient_profile,
    reservoir_drift,
)


def _mirror(rho: RhoField) -> RhoField:
    return RhoField(rho.params, rho.time, 1.0 - rho.values[::-1])


# ---------------------------------------------------------------------------
# Правая часть
# ---------------------------------------------------------------------------

def test_laplacian_conserves_mass(rng):
    f = rng.random(9)
    assert discrete_laplacian(f).sum() == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(discrete_laplacian(np.full(9, 0.4)), 0.0)


def test_reservoir_drift_single_site():
    params = LatticeParams(n=2, k=1, j=1.0)
    f = np.array([0.6, 0.5, 0.5, 0.5, 0.3])
    drift = reservoir_drift(params, f)
    assert drift[-1] == pytest.approx(0.7)
    assert drift[0] == pytest.approx(-0.6)
    assert np.all(drift[1:-1] == 0.0)


def test_reservoir_drift_matches_sitewise_products(rng):
    params = LatticeParams(n=4, k=3, j=1.0)
    f = rng.random(params.size)
    drift = reservoir_drift(params, f)
    for x in (2, 3, 4):
        assert drift[params.index(x)] == pytest.approx(boundary_drift(params, f, Side.PLUS, x))
    for x in (-4, -3, -2):
        assert drift[params.index(x)] == pytest.approx(-boundary_drift(params, f, Side.MINUS, x))
    with pytest.raises(DomainError):
        boundary_drift(params, f, Side.PLUS, 0)


def test_boundary_current_vanishes_without_reservoirs():
    rho = RhoField.constant(LatticeParams(n=3, j=0.0), 0.4)
    assert boundary_current(rho) == (0.0, 0.0)


# ---------------------------------------------------------------------------
# Эволюция
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("t", [0.01, 0.2, 1.5])
def test_closed_system_equals_kernel_convolution(t):
    params = LatticeParams(n=5, j=0.0)
    rho0 = RhoField.from_config(ParticleConfig.step(params))
    rho = evolve_rho(rho0, t)
    expected = reflected_kernel_matrix(params, t).values @ rho0.values
    assert np.max(np.abs(rho.values - expected)) <= 1e-7
    assert rho.time == t


def test_strang_agrees_with_radau():
    params = LatticeParams(n=4, k=2, j=2.0)
    rho0 = RhoField.from_config(ParticleConfig.alternating(params))
    radau = evolve_rho(rho0, 0.3, tol=1e-9, scheme=Scheme.RADAU)
    strang = evolve_rho(rho0, 0.3, tol=1e-6, scheme=Scheme.STRANG)
    assert np.max(np.abs(radau.values - strang.values)) <= 1e-5


def test_solution_stays_in_unit_interval():
    params = LatticeParams(n=4, k=2, j=4.0)
    for rho in evolve_rho_path(RhoField.from_config(ParticleConfig.step(params)), [0.05, 0.5, 2.0]):
        assert rho.values.min() >= -1e-7
        assert rho.values.max() <= 1.0 + 1e-7


def test_particle_hole_symmetry():
    params = LatticeParams(n=4, k=2, j=1.5)
    rho0 = RhoField(params, 0.0, np.linspace(0.1, 0.8, params.size) ** 2)
    forward = evolve_rho(rho0, 0.4, tol=1e-10)
    mirrored = evolve_rho(_mirror(rho0), 0.4, tol=1e-10)
    assert np.max(np.abs(_mirror(forward).values - mirrored.values)) <= 1e-7


def test_path_uses_absolute_times():
    params = LatticeParams(n=3, j=1.0)
    rho0 = RhoField.from_config(ParticleConfig.step(params))
    path = evolve_rho_path(rho0, [0.1, 0.1, 0.4])
    assert [r.time for r in path] == [0.1, 0.1, 0.4]
    direct = evolve_rho(rho0, 0.4, tol=1e-10)
    assert np.max(np.abs(path[-1].values - direct.values)) <= 1e-6
    with pytest.raises(DomainError):
        evolve_rho_path(rho0, [0.3, 0.2])


def test_evolve_rejects_bad_input():
    params = LatticeParams(n=2)
    with pytest.raises(DomainError):
        evolve_rho(RhoField.constant(params, 0.5), -1.0)
    with pytest.raises(DomainError):
        evolve_rho(RhoField.constant(params, 1.5), 0.1)


def test_zero_elapsed_time_is_identity(step3):
    rho0 = RhoField.from_config(step3)
    assert np.array_equal(evolve_rho(rho0, 0.0).values, rho0.values)


# ---------------------------------------------------------------------------
# Диагностика
# ---------------------------------------------------------------------------

def test_duhamel_residual_small():
    params = LatticeParams(n=3, k=1, j=1.0)
    rho0 = RhoField.from_config(ParticleConfig.step(params))
    assert duhamel_residual(rho0, 0.1) <= 1e-6


def test_gradient_decays_from_step():
    params = LatticeParams(n=6, j=0.0)
    rho0 = RhoField.from_config(ParticleConfig.step(params))
    grads = [gradient_profile(r) for r in evolve_rho_path(rho0, [0.01, 0.05, 0.2])]
    assert gradient_profile(rho0) == 1.0
    assert grads[0] > grads[1] > grads[2]


def test_gradient_envelope_fit_recovers_constant():
    lams = np.geomspace(1.0, 1e4, 9)
    gradients = 2.0 / (lams ** 0.45 + 1.0)
    slope, c = gradient_envelope_fit(lams, gradients, zeta=0.05)
    assert c == pytest.approx(2.0)
    assert -0.45 < slope < 0.0
