import numpy as np
import pytest

from stirring_lab.exact import exact_v
from stirring_lab.hydro import parse_profile
from stirring_lab.models import DomainError, LatticeParams, ParticleConfig, RhoField
from stirring_lab.vfn import (
    _round_replicas,
    batch_means,
    block_average_test,
    block_averages,
    block_half_width,
    compare_v_scaling,
    estimate_v,
    initial_profile_check,
)


# ---------------------------------------------------------------------------
# Пакетные средние
# ---------------------------------------------------------------------------

def test_batch_means(rng):
    values = rng.normal(2.0, 1.0, 3200)
    mean, se = batch_means(values)
    assert mean == pytest.approx(values.mean())
    assert 0.0 < se < 0.1
    with pytest.raises(DomainError):
        batch_means(np.ones(65))


def test_replicas_round_up_to_batches():
    assert _round_replicas(2) == 32
    assert _round_replicas(33) == 64
    assert _round_replicas(640) == 640
    with pytest.raises(DomainError):
        _round_replicas(1)


# ---------------------------------------------------------------------------
# Оценка v
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("sites", [(0,), (-1, 0), (-2, 1)])
def test_estimate_v_agrees_with_exact(params3, step3, sites):
    estimate = estimate_v(sites, 0.3, step3, 6400, seed=41)
    exact = exact_v(params3, sites, 0.3, step3)
    assert estimate.replicas == 6400
    assert estimate.sites == tuple(sorted(sites))
    assert abs(estimate.estimate - exact) < 4.0 * estimate.std_error + 1e-12


def test_estimate_v_rejects_bad_sites(step3):
    with pytest.raises(DomainError):
        estimate_v((), 0.3, step3, 64, seed=0)
    with pytest.raises(DomainError):
        estimate_v((0, 0), 0.3, step3, 64, seed=0)
    with pytest.raises(DomainError):
        estimate_v((-3, -1, 0, 1, 3), 0.3, step3, 64, seed=0)


@pytest.mark.slow
def test_v_decays_with_lattice_size():
    report = compare_v_scaling((-0.2, 0.2), 0.05, ns=(10, 40), replicas=3200, seed=5)
    assert [n for n, _ in report.estimates] == [10, 40]
    assert report.estimates[1][1].sites == (-8, 8)
    assert report.decays


# ---------------------------------------------------------------------------
# Блочные средние
# ---------------------------------------------------------------------------

def test_block_half_width():
    assert block_half_width(LatticeParams(n=100), 0.5) == 10
    with pytest.raises(DomainError):
        block_half_width(LatticeParams(n=3), 0.5)
    with pytest.raises(DomainError):
        block_half_width(LatticeParams(n=100), 1.0)


def test_block_averages_of_constant_field():
    params = LatticeParams(n=100)
    blocks = block_averages(params, np.full(params.size, 0.3), 0.5)
    assert len(blocks) == params.size - 20
    assert blocks[0].center == -90 and blocks[-1].center == 90
    assert all(b.value == pytest.approx(0.3) for b in blocks)


def test_alternating_configuration_approximates_half():
    params = LatticeParams(n=100)
    gap = initial_profile_check(ParticleConfig.alternating(params), parse_profile("const:0.5"), 0.5)
    assert gap <= 1.0 / 21.0 + 1e-12
    rho = RhoField.constant(params, 0.5)
    assert initial_profile_check(rho, parse_profile("const:0.5"), 0.5) == pytest.approx(0.0, abs=1e-12)


def test_block_average_test_reports_probability():
    params = LatticeParams(n=100, j=1.0)
    result = block_average_test(ParticleConfig.alternating(params), 0.01, 0.5, 0.3, 64, seed=3)
    assert 0.0 <= result.probability <= 1.0
    assert result.half_width == 10
    assert result.sup_values.shape == (64,)
