import math

import numpy as np
import pytest
from scipy import integrate

from stirring_lab.estimates import (
    SmoothedNorm,
    an_bound,
    an_closed_form,
    an_product_integration,
    an_series_bound,
    format_an_report,
    iterated_kernel_an,
    smoothed_norm,
)
from stirring_lab.models import DomainError, LatticeParams


# ---------------------------------------------------------------------------
# a_n(t)
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("t", [0.1, 1.0, 5.0, 10.0])
def test_an_matches_closed_form(t):
    for n in range(1, 11):
        assert iterated_kernel_an(n, t) == pytest.approx(an_closed_form(n, t), rel=1e-8)
    assert iterated_kernel_an(1, t) == pytest.approx(2.0 * math.sqrt(t), rel=1e-10)


@pytest.mark.parametrize("t", [0.3, 2.0])
def test_second_iterate_by_direct_quadrature(t):
    # вес 'alg' у quad: s^{−1/2}(t − s)^{1/2}, a_1(t − s) = 2√(t − s)
    direct, _ = integrate.quad(lambda s: 2.0, 0.0, t, weight="alg", wvar=(-0.5, 0.5))
    assert iterated_kernel_an(2, t) == pytest.approx(direct, rel=1e-10)
    assert direct == pytest.approx(math.pi * t, rel=1e-12)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_grid_recursion(t):
    for n in range(1, 11):
        assert an_product_integration(n, t) == pytest.approx(an_closed_form(n, t), rel=1e-3)
    assert an_product_integration(1, t) == pytest.approx(2.0 * math.sqrt(t), rel=1e-12)
    coarse = abs(an_product_integration(2, t, steps=100) - math.pi * t)
    fine = abs(an_product_integration(2, t, steps=400) - math.pi * t)
    assert fine < coarse / 4.0
    assert an_product_integration(3, 0.0) == 0.0
    with pytest.raises(DomainError):
        an_product_integration(2, t, steps=0)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_an_below_bound(t):
    for n in range(1, 31):
        assert iterated_kernel_an(n, t) <= an_bound(n, t) * (1.0 + 1e-9)


def test_an_edge_cases():
    assert iterated_kernel_an(3, 0.0) == 0.0
    for n in (0, 31, 2.5):
        with pytest.raises(DomainError):
            iterated_kernel_an(n, 1.0)
    with pytest.raises(DomainError):
        iterated_kernel_an(2, -1.0)


@pytest.mark.parametrize("t", [0.5, 1.0, 10.0])
def test_series_report(t):
    report = an_series_bound(t)
    assert report.partial_sum <= report.full_series * (1.0 + 1e-9)
    assert report.fitted_c <= 2.0
    assert report.within_bound
    assert report.max_tail_ratio < 1.0
    assert "a_n(t)" in format_an_report(report)


def test_series_rejects_long_times():
    with pytest.raises(DomainError):
        an_series_bound(11.0)


# ---------------------------------------------------------------------------
# Сглаженная норма
# ---------------------------------------------------------------------------

def test_smoothed_norm_of_constant():
    params = LatticeParams(n=20)
    assert smoothed_norm(params, np.full(params.size, -0.7), 0.5) == pytest.approx(0.7, abs=1e-10)


def test_smoothed_norm_contracts(rng):
    params = LatticeParams(n=20)
    f = rng.normal(size=params.size)
    assert smoothed_norm(params, f, 0.5) <= np.max(np.abs(f)) + 1e-12
    alternating = (-1.0) ** np.arange(params.size)
    assert smoothed_norm(params, alternating, 0.5) < 1.0


def test_smoothed_norm_validation():
    params = LatticeParams(n=5)
    with pytest.raises(DomainError):
        SmoothedNorm(params, 1.0)
    with pytest.raises(DomainError):
        smoothed_norm(params, np.ones(3), 0.5)
    assert SmoothedNorm(params, 0.5).time == pytest.approx(5.0 ** -1.5)
