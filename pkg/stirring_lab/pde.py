"""
Дискретное мезоскопическое уравнение для ρ_ε(x, t):

    dρ/dt = ½ε⁻²Δρ + ε⁻¹(j/2)(1_{I+}D₊ρ − 1_{I−}D₋ρ)

Линейная часть жёсткая (ε⁻²), граничная нелинейность порядка ε⁻¹ и живёт
только в резервуарах. Две схемы:
- STRANG: точные полушаги по косинусному базису + явная средняя точка для D_±
- RADAU: неявный Рунге–Кутта из scipy с разреженным шаблоном якобиана
При j = 0 обе схемы сводятся к точному косинусному пропагатору.
"""

from __future__ import annotations

import logging
import math
from enum import Enum
from typing import Iterable

import numpy as np
from scipy import fft, integrate, sparse

from .kernels import reflected_kernel_matrix
from .lattice import in_reservoir
from .models import ConvergenceError, DomainError, LatticeParams, RhoField, Side

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8


class Scheme(Enum):
    STRANG = "strang"
    RADAU = "radau"


# ---------------------------------------------------------------------------
# Операторы правой части
# ---------------------------------------------------------------------------

def discrete_laplacian(f) -> np.ndarray:
    """Отражающий лапласиан: внутри f(x+1)+f(x−1)−2f(x), на краях f(±(N−1))−f(±N)."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[1:-1] = f[2:] + f[:-2] - 2.0 * f[1:-1]
    out[0] = f[1] - f[0]
    out[-1] = f[-2] - f[-1]
    return out


def boundary_drift(params: LatticeParams, f, side: Side, x: int) -> float:
    """D₊f(x) = (1−f(x))Π_{y>x} f(y); D₋f(x) = f(x)Π_{y<x}(1−f(y))."""
    if not in_reservoir(params, x, side):
        raise DomainError(f"site {x} is not in reservoir I_{side.value}")
    f = np.asarray(f, dtype=float)
    i = params.index(x)
    if side is Side.PLUS:
        return float((1.0 - f[i]) * np.prod(f[i + 1:]))
    return float(f[i] * np.prod(1.0 - f[:i]))


def reservoir_drift(params: LatticeParams, f) -> np.ndarray:
    """Вектор 1_{I+}D₊f − 1_{I−}D₋f на всей решётке."""
    f = np.asarray(f, dtype=float)
    k = params.k
    out = np.zeros_like(f)

    right = f[-k:]
    # Π_{y>x} f(y): сдвинутые суффиксные произведения
    suffix = np.ones(k)
    suffix[:-1] = np.cumprod(right[::-1])[::-1][1:]
    out[-k:] += (1.0 - right) * suffix

    left = f[:k]
    prefix = np.ones(k)
    prefix[1:] = np.cumprod(1.0 - left)[:-1]
    out[:k] -= left * prefix
    return out


def rho_rhs(params: LatticeParams, f) -> np.ndarray:
    """Правая часть уравнения для ρ_ε."""
    n = params.n
    return 0.5 * n * n * discrete_laplacian(f) + params.reservoir_rate * reservoir_drift(params, f)


def boundary_current(rho: RhoField) -> tuple[float, float]:
    """Потоки резервуаров: рождение ε⁻¹(j/2)ΣD₊ρ и гибель ε⁻¹(j/2)ΣD₋ρ."""
    drift = reservoir_drift(rho.params, rho.values)
    k = rho.params.k
    rate = rho.params.reservoir_rate
    return rate * float(drift[-k:].sum()), -rate * float(drift[:k].sum())


# ---------------------------------------------------------------------------
# Точный линейный пропагатор
# ---------------------------------------------------------------------------

class CosineBasis:
    """Собственный базис отражающего лапласиана: DCT-II, λ_k = −4 sin²(πk/2M)."""

    def __init__(self, params: LatticeParams):
        self.params = params
        size = params.size
        k = np.arange(size)
        self.eigenvalues = -4.0 * np.sin(np.pi * k / (2.0 * size)) ** 2

    def propagate(self, f: np.ndarray, h: float) -> np.ndarray:
        """exp(h·½ε⁻²Δ) f."""
        n = self.params.n
        decay = np.exp(0.5 * n * n * self.eigenvalues * h)
        return fft.idct(decay * fft.dct(f, type=2, norm="ortho"), type=2, norm="ortho")


# ---------------------------------------------------------------------------
# Схемы по времени
# ---------------------------------------------------------------------------

def _strang_step(basis: CosineBasis, f: np.ndarray, h: float) -> np.ndarray:
    params = basis.params
    rate = params.reservoir_rate
    f = basis.propagate(f, 0.5 * h)
    mid = f + 0.5 * h * rate * reservoir_drift(params, f)
    f = f + h * rate * reservoir_drift(params, mid)
    return basis.propagate(f, 0.5 * h)


def _evolve_strang(params: LatticeParams, f: np.ndarray, t: float, tol: float) -> np.ndarray:
    """Strang с удвоением шага: оценка ошибки |fine − coarse|/3, локальная экстраполяция."""
    basis = CosineBasis(params)
    elapsed = 0.0
    h = min(t, 0.1 / max(params.reservoir_rate, 1.0))
    h_min = 1e-14 * max(t, 1.0)
    accepted = rejected = 0

    while elapsed < t:
        h = min(h, t - elapsed)
        coarse = _strang_step(basis, f, h)
        fine = _strang_step(basis, _strang_step(basis, f, 0.5 * h), 0.5 * h)
        err = float(np.max(np.abs(fine - coarse))) / 3.0
        candidate = fine + (fine - coarse) / 3.0
        violation = max(-float(candidate.min()), float(candidate.max()) - 1.0, 0.0)
        local_tol = tol * h / t

        if err <= local_tol and violation <= tol:
            f = candidate
            elapsed += h
            accepted += 1
            growth = 4.0 if err == 0 else min(4.0, 0.9 * (local_tol / err) ** (1.0 / 3.0))
            h *= max(growth, 1.0)
        else:
            rejected += 1
            if violation > tol:
                logger.debug("strang: [0,1] violation %.2e at t=%.4g, halving h", violation, elapsed)
                h *= 0.5
            else:
                h *= max(0.2, 0.9 * (local_tol / err) ** (1.0 / 3.0))
        if h < h_min and elapsed < t:
            raise ConvergenceError(
                f"Strang step size underflow at t={elapsed:.6g} (h={h:.3e}, err={err:.3e}, "
                f"violation={violation:.3e})"
            )

    logger.debug("strang: %d accepted, %d rejected steps", accepted, rejected)
    return f


def _jacobian_pattern(params: LatticeParams) -> sparse.csr_matrix:
    size, k = params.size, params.k
    pattern = sparse.lil_matrix((size, size), dtype=np.int8)
    for i in range(size):
        for d in (-1, 0, 1):
            if 0 <= i + d < size:
                pattern[i, i + d] = 1
    for a in range(k):
        for b in range(a, k):
            pattern[size - k + a, size - k + b] = 1   # D₊ в x зависит от x..N
            pattern[b, a] = 1                         # D₋ в x зависит от −N..x
    return pattern.tocsr()


def _evolve_radau(params: LatticeParams, f: np.ndarray, t: float, tol: float) -> np.ndarray:
    n = params.n
    lap = 0.5 * n * n * sparse.diags(
        [np.ones(params.size - 1), np.r_[-1.0, -2.0 * np.ones(params.size - 2), -1.0],
         np.ones(params.size - 1)],
        [-1, 0, 1],
        format="csr",
    )
    rate = params.reservoir_rate

    def fun(_, y):
        return lap @ y + rate * reservoir_drift(params, y)

    solution = integrate.solve_ivp(
        fun,
        (0.0, t),
        f,
        method="Radau",
        rtol=max(tol / 10.0, 1e-13),
        atol=max(tol / 10.0, 1e-15),
        jac_sparsity=_jacobian_pattern(params),
    )
    if solution.status != 0:
        raise ConvergenceError(f"Radau integration failed at t≤{t:.6g}: {solution.message}")
    return solution.y[:, -1]


def evolve_rho(
    rho0: RhoField,
    t: float,
    tol: float = DEFAULT_TOL,
    scheme: Scheme = Scheme.RADAU,
) -> RhoField:
    """Решение через время t после rho0 с глобальной ошибкой ≈ tol."""
    values = rho0.values
    if values.min() < -tol or values.max() > 1.0 + tol:
        raise DomainError("initial profile must take values in [0, 1]")
    if t < 0:
        raise DomainError(f"elapsed time must be ≥ 0, got {t}")
    if t == 0:
        return RhoField(rho0.params, rho0.time, values.copy())

    params = rho0.params
    if params.j == 0:
        out = CosineBasis(params).propagate(values, t)
    elif scheme is Scheme.STRANG:
        out = _evolve_strang(params, values.copy(), t, tol)
    else:
        out = _evolve_radau(params, values.copy(), t, tol)
    return RhoField(params, rho0.time + t, out)


def evolve_rho_path(
    rho0: RhoField,
    times: Iterable[float],
    tol: float = DEFAULT_TOL,
    scheme: Scheme = Scheme.RADAU,
) -> list[RhoField]:
    """Профили в неубывающие абсолютные моменты times (последовательные перезапуски)."""
    out = []
    current = rho0
    for t in times:
        if t < current.time - 1e-15:
            raise DomainError("sample times must be non-decreasing and ≥ rho0.time")
        current = evolve_rho(current, max(t - current.time, 0.0), tol, scheme)
        current.time = float(t)
        out.append(current)
    return out


# ---------------------------------------------------------------------------
# Диагностика
# ---------------------------------------------------------------------------

def gradient_profile(rho: RhoField) -> float:
    """max_x |ρ(x+1) − ρ(x)|."""
    return float(np.max(np.abs(np.diff(rho.values))))


def gradient_envelope_fit(lams, gradients, zeta: float = 0.05) -> tuple[float, float]:
    """
    Наклон log–log градиента по λ = ε⁻²t и константа оболочки c/(λ^{1/2−ζ} + 1).

    Возвращает (slope, c).
    """
    lams = np.asarray(lams, dtype=float)
    gradients = np.asarray(gradients, dtype=float)
    slope = float(np.polyfit(np.log(lams), np.log(gradients), 1)[0])
    c = float(np.max(gradients * (lams ** (0.5 - zeta) + 1.0)))
    return slope, c


def duhamel_residual(rho0: RhoField, t: float, n_nodes: int = 40, tol: float = 1e-10) -> float:
    """
    max_x |ρ(t) − P_t ρ0 − ∫₀ᵗ P_{t−s} ε⁻¹(j/2) drift(ρ(s)) ds| (Гаусс–Лежандр по s).
    """
    params = rho0.params
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    s = 0.5 * t * (nodes + 1.0)
    w = 0.5 * t * weights

    path = evolve_rho_path(rho0, list(rho0.time + s) + [rho0.time + t], tol)
    final = path[-1].values
    linear = reflected_kernel_matrix(params, t).values @ rho0.values

    forcing = np.zeros(params.size)
    for s_i, w_i, rho_s in zip(s, w, path[:-1]):
        kernel = reflected_kernel_matrix(params, t - s_i).values
        forcing += w_i * kernel @ (params.reservoir_rate * reservoir_drift(params, rho_s.values))
    return float(np.max(np.abs(final - linear - forcing)))
