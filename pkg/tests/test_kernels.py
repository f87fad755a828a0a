import math

import numpy as np
import pytest

from stirring_lab.hydro import parse_profile
from stirring_lab.kernels import (
    envelope_constants,
    format_lclt_report,
    free_walk_kernel,
    gaussian_kernel,
    lclt_comparison,
    poisson_mixture_kernel,
    reflected_kernel_expm,
    reflected_kernel_matrix,
    reflected_walk_kernel,
    theta_kernels,
    theta_p_q,
    theta_w,
)
from stirring_lab.models import DomainError, LatticeParams, Side


# ---------------------------------------------------------------------------
# Свободное и отражённое блуждание
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.5, 5.0, 40.0])
def test_free_kernel_matches_poisson_mixture(lam):
    for dx in range(0, 12):
        assert free_walk_kernel(lam, dx) == pytest.approx(poisson_mixture_kernel(lam, dx), abs=1e-12)


def test_free_kernel_is_symmetric_and_normalised():
    lam = 7.5
    dx = np.arange(-80, 81)
    q = free_walk_kernel(lam, dx)
    assert q.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(q, q[::-1])
    assert free_walk_kernel(0.0, 0) == 1.0 and free_walk_kernel(0.0, 3) == 0.0


@pytest.mark.parametrize("n", [1, 3, 6])
@pytest.mark.parametrize("t", [0.01, 0.3, 2.0])
def test_reflected_kernel_rows_sum_to_one(n, t):
    table = reflected_kernel_matrix(LatticeParams(n=n), t)
    assert np.max(np.abs(table.row_sums() - 1.0)) <= 1e-10


@pytest.mark.parametrize("n", [1, 2, 4, 6])
@pytest.mark.parametrize("t", [0.05, 0.5, 3.0])
def test_reflected_kernel_matches_matrix_exponential(n, t):
    params = LatticeParams(n=n)
    table = reflected_kernel_matrix(params, t).values
    assert np.max(np.abs(table - reflected_kernel_expm(params, t))) <= 1e-8


def test_reflected_kernel_symmetry_and_pointwise_form():
    params = LatticeParams(n=3)
    table = reflected_kernel_matrix(params, 0.2)
    assert np.allclose(table.values, table.values.T, atol=1e-14)
    assert reflected_walk_kernel(params, 0.2, -3, 2) == pytest.approx(table(-3, 2), abs=1e-14)
    assert reflected_walk_kernel(params, 0.0, 1, 1) == 1.0


def test_reflected_kernel_rejects_negative_time():
    with pytest.raises(DomainError):
        reflected_kernel_matrix(LatticeParams(n=2), -0.1)


# ---------------------------------------------------------------------------
# Локальная ЦПТ и оболочки
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("lam", [100.0, 400.0, 1600.0])
def test_lclt_relative_error_within_window(lam):
    report = lclt_comparison(lam)
    assert report.window == math.floor(lam ** 0.625)
    assert report.c1 <= 5.0
    assert report.mode_error <= 0.05
    assert report.tail_max < gaussian_kernel(lam, 0.0)
    assert "λ" in format_lclt_report(report)


def test_lclt_constant_does_not_grow():
    assert lclt_comparison(400.0).c1 <= 1.1 * lclt_comparison(100.0).c1


@pytest.mark.parametrize("lam", [100.0, 400.0, 1600.0])
def test_lclt_tail_under_both_envelopes(lam):
    report = lclt_comparison(lam)
    # Q(d) ≤ P(X ≥ d) ≤ exp(−d(log d − 1 − log(λ/2))) и ≤ e^{−d²/4λ} при d ≤ 2λ
    assert 0.0 < report.envelope_constant <= 1.0
    assert report.envelope_shift <= 1.0 + math.log(lam / 2.0)
    d = np.arange(report.window + 1, 3 * report.window)
    q = free_walk_kernel(lam, d)
    bound = np.minimum(report.envelope_constant * np.exp(-d * d / (4.0 * lam)),
                       np.exp(-d * (np.log(d) - report.envelope_shift)))
    assert np.all(q <= bound * (1.0 + 1e-9))


def test_lclt_needs_large_intensity():
    with pytest.raises(DomainError):
        lclt_comparison(4.0)


def test_envelope_constants_are_finite():
    c_dom, c_grad = envelope_constants((2, 4), (0.05, 0.2))
    assert 0.0 < c_dom < math.inf
    assert 0.0 < c_grad < math.inf


# ---------------------------------------------------------------------------
# Тета-ядра
# ---------------------------------------------------------------------------

def test_theta_kernels_short_time_limits():
    p, q = theta_p_q(1e-4)
    assert p == pytest.approx(2.0 * gaussian_kernel(1e-4, 0.0), rel=1e-12)
    assert q < 1e-100


@pytest.mark.parametrize("t", [50.0, 100.0])
def test_theta_kernels_long_time_balance(t):
    # образы равномерно покрывают период 4: p, q → ½
    p, q = theta_p_q(t)
    assert p == pytest.approx(q, rel=1e-10)
    assert p + q == pytest.approx(1.0, abs=1e-3)
    table = theta_kernels([0.1, 1.0, t])
    assert table.p.shape == (3,) and table.truncation >= 2


@pytest.mark.parametrize("c", [0.0, 0.3, 1.0])
def test_theta_w_of_constant_profile(c):
    u0 = parse_profile(f"const:{c}")
    for t in (0.01, 0.5, 2.0):
        assert theta_w(t, Side.PLUS, u0) == pytest.approx(c, abs=1e-9)
        assert theta_w(t, Side.MINUS, u0) == pytest.approx(c, abs=1e-9)


@pytest.mark.parametrize("t", [1e-4, 0.01, 0.05])
def test_theta_w_of_linear_profile_near_wall(t):
    # ∫₀² (2 − s) G_t(s) ds: у стенки r = 1 профиль (1+r)/2 равен 1
    u0 = parse_profile("linear:0,1")
    expected = 1.0 - math.sqrt(t / (2.0 * math.pi))
    assert theta_w(t, Side.PLUS, u0) == pytest.approx(expected, abs=1e-8)
    assert theta_w(t, Side.MINUS, u0) == pytest.approx(1.0 - expected, abs=1e-8)
    if t <= 0.01:
        assert theta_w(t, Side.PLUS, u0) == pytest.approx(1.0, abs=0.05)
