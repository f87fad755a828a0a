import numpy as np
import pytest

from stirring_lab.exact import (
    Derivative,
    StateSpace,
    andjel_gap,
    build_generator,
    check_evolution_identity,
    duality_exact,
    evolve_distribution,
    exact_v,
    integral_form_residual,
    liggett_gap,
    site_marginals,
    stationary_sector,
    v_table,
)
from stirring_lab.models import DomainError, LatticeParams, ParticleConfig, RhoField
from stirring_lab.pde import evolve_rho


def _random_config(params, rng):
    return ParticleConfig(params, rng.integers(0, 2, params.size))


# ---------------------------------------------------------------------------
# Пространство состояний и генератор
# ---------------------------------------------------------------------------

def test_state_space_round_trip(params2):
    space = StateSpace(params2)
    assert space.size == 32
    for index in (0, 5, 31):
        assert space.index(space.config(index)) == index
    assert space.index_of_sites([-2, 2]) == 1 + 16
    with pytest.raises(DomainError):
        space.config(32)


def test_generator_rows_sum_to_zero(params3):
    generator = build_generator(params3)
    rows = np.asarray(generator.total.sum(axis=1)).ravel()
    assert np.max(np.abs(rows)) <= 1e-10
    assert generator.uniformization_rate > 0


def test_generator_size_limit():
    with pytest.raises(DomainError):
        build_generator(LatticeParams(n=8))


@pytest.mark.parametrize("n", [2, 3])
def test_chapman_kolmogorov(n, rng):
    params = LatticeParams(n=n, k=1, j=1.0)
    generator = build_generator(params)
    p0 = generator.space.point_mass(_random_config(params, rng))
    direct = evolve_distribution(generator, p0, 0.7)
    split = evolve_distribution(generator, evolve_distribution(generator, p0, 0.3), 0.4)
    assert np.max(np.abs(direct - split)) <= 1e-9
    assert direct.sum() == pytest.approx(1.0, abs=1e-9)


def test_evolve_distribution_rejects_bad_vector(params2):
    generator = build_generator(params2)
    with pytest.raises(DomainError):
        evolve_distribution(generator, np.full(32, 0.5), 0.1)
    with pytest.raises(DomainError):
        evolve_distribution(generator, generator.space.point_mass(ParticleConfig.filled(params2)), -1.0)


@pytest.mark.parametrize("count", [1, 2, 3])
def test_stationary_sector_is_uniform(params2, count):
    sector, vector = stationary_sector(params2, count)
    assert np.all(build_generator(params2).space.counts[sector] == count)
    assert np.max(np.abs(vector - 1.0 / len(sector))) <= 1e-10


# ---------------------------------------------------------------------------
# v-функции
# ---------------------------------------------------------------------------

def test_v_vanishes_at_time_zero(step3):
    params = step3.params
    assert exact_v(params, (-1,), 0.0, step3) == 0.0
    assert exact_v(params, (-1, 2), 0.0, step3) == 0.0


def test_single_reservoir_site_marginals_follow_rho(params3, step3):
    # при K = 1 уравнение для средних линейно и совпадает с уравнением ρ
    for t in (0.1, 0.8):
        marginals = site_marginals(params3, step3, t)
        rho = evolve_rho(RhoField.from_config(step3), t, tol=1e-11).values
        assert np.max(np.abs(marginals - rho)) <= 1e-8
        table = v_table(params3, step3, t, max_order=1)
        assert max(abs(v) for v in table.values.values()) <= 1e-8


def test_v_table_keys_and_limits(params2):
    eta0 = ParticleConfig.alternating(params2)
    table = v_table(params2, eta0, 0.3, max_order=2)
    assert len(table.values) == 5 + 10
    assert table.get((1, -1)) == pytest.approx(exact_v(params2, (-1, 1), 0.3, eta0), abs=1e-12)
    with pytest.raises(DomainError):
        v_table(params2, eta0, 0.3, max_order=5)
    with pytest.raises(DomainError):
        exact_v(params2, (0, 0), 0.3, eta0)
    with pytest.raises(DomainError):
        exact_v(LatticeParams(n=6), (0,), 0.3, ParticleConfig.filled(LatticeParams(n=6)))


# ---------------------------------------------------------------------------
# Тождество эволюции
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3])
def test_evolution_identity_richardson(n, rng):
    params = LatticeParams(n=n, k=1, j=1.0)
    eta0 = _random_config(params, rng)
    interior = list(range(-n + 1, n))
    for sites in ([interior[0]], interior[:2], [interior[0], interior[-1]]):
        assert check_evolution_identity(params, sites, 0.3, eta0) <= 1e-5


def test_evolution_identity_analytic(params3, step3):
    for sites in ((0,), (-1, 0), (-2, 1)):
        residual = check_evolution_identity(params3, sites, 0.3, step3, derivative=Derivative.ANALYTIC)
        assert residual <= 1e-6


def test_evolution_identity_rejects_reservoir_sites(params2, rng):
    eta0 = _random_config(params2, rng)
    with pytest.raises(DomainError):
        check_evolution_identity(params2, (2,), 0.3, eta0)
    with pytest.raises(DomainError):
        check_evolution_identity(params2, (0,), 1e-6, eta0)


def test_integral_form(params2):
    eta0 = ParticleConfig.step(params2)
    assert integral_form_residual(params2, (-1, 0), 0.2, eta0) <= 1e-5


# ---------------------------------------------------------------------------
# Двойственность и неравенства
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3])
def test_duality_exact(n, rng):
    params = LatticeParams(n=n)
    eta0 = _random_config(params, rng)
    for sites in ((), (0,), (-n,), (-1, 1), (0, n)):
        lhs, rhs = duality_exact(params, sites, eta0, 0.4)
        assert lhs == pytest.approx(rhs, abs=1e-9)
    assert duality_exact(params, (), eta0, 0.4) == pytest.approx((1.0, 1.0))


@pytest.mark.parametrize("y1,y2", [(-2, 0), (-1, 1), (0, 2), (-2, 2)])
def test_liggett_gap_nonnegative(params2, y1, y2):
    for t in (0.05, 0.5, 2.0):
        assert liggett_gap(params2, y1, y2, t) >= -1e-10


def test_andjel_gap_nonnegative(params3):
    for t in (0.1, 1.0):
        assert andjel_gap(params3, (-1, 0, 2), (-1,), (0, 2), t) >= -1e-10
        assert andjel_gap(params3, (-1, 1), (3,), (-3,), t) >= -1e-10
    with pytest.raises(DomainError):
        andjel_gap(params3, (-1, 1), (0,), (0,), 0.5)
    with pytest.raises(DomainError):
        andjel_gap(params3, (-1, 1), (0,), (), 0.5)
