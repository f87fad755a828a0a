"""
Числовые ингредиенты оценок: сглаженная sup-норма и итерированные
интегралы с особенностью s^{−1/2}.

    a_1(t) = 2√t,  a_n(t) = ∫₀ᵗ s^{−1/2} a_{n−1}(t − s) ds,  a_0 ≡ 1
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Chebyshev
from scipy import special

from .kernels import reflected_kernel_matrix
from .models import DomainError, LatticeParams

logger = logging.getLogger(__name__)

AN_MAX_ORDER = 30
SERIES_MAX_T = 10.0
AN_NODES = 48
AN_GRID_STEPS = 2000


# ---------------------------------------------------------------------------
# Сглаженная норма
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothedNorm:
    """|||f||| = sup_x |Σ_y P_{ε^{1+b}}(x, y) f(y)|."""

    params: LatticeParams
    b: float

    def __post_init__(self):
        if not 0 < self.b < 1:
            raise DomainError(f"b must lie in (0, 1), got {self.b}")

    @property
    def time(self) -> float:
        return self.params.epsilon ** (1.0 + self.b)

    def __call__(self, f) -> float:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.params.size,):
            raise DomainError(f"function length {f.shape} != 2N+1={self.params.size}")
        kernel = reflected_kernel_matrix(self.params, self.time).values
        return float(np.max(np.abs(kernel @ f)))


def smoothed_norm(params: LatticeParams, f, b: float) -> float:
    return SmoothedNorm(params, b)(f)


# ---------------------------------------------------------------------------
# Итерированные интегралы a_n(t)
# ---------------------------------------------------------------------------

def _an_levels(t: float, n_max: int) -> np.ndarray:
    """
    a_1(t), …, a_{n_max}(t) по рекурсии.

    Подстановка s = t cos²θ снимает особенность:
    a_n(t) = 2√t ∫₀^{π/2} sin θ · a_{n−1}(t sin²θ) dθ. Каждый уровень хранится
    в узлах Чебышёва по z = √(r/t) ∈ [0, 1]: в этой переменной a_n многочлен.
    """
    z = 0.5 * (1.0 - np.cos(np.pi * np.arange(AN_NODES) / (AN_NODES - 1)))
    nodes, weights = np.polynomial.legendre.leggauss(AN_NODES)
    theta = 0.25 * np.pi * (nodes + 1.0)
    w = 0.5 * np.pi * weights * np.sin(theta)
    points = z[:, None] * np.sin(theta)[None, :]

    root = math.sqrt(t)
    level = np.ones(AN_NODES)
    out = np.empty(n_max)
    for n in range(n_max):
        previous = Chebyshev.fit(z, level, AN_NODES - 1, domain=[0.0, 1.0])
        level = root * z * (previous(points) @ w)
        out[n] = level[-1]
    return out


def _check_order(n: int, t: float) -> None:
    if int(n) != n or not 1 <= n <= AN_MAX_ORDER:
        raise DomainError(f"order n must be in 1..{AN_MAX_ORDER}, got {n}")
    if t < 0:
        raise DomainError(f"time must be ≥ 0, got {t}")


def iterated_kernel_an(n: int, t: float) -> float:
    """a_n(t) через n шагов рекурсии."""
    _check_order(n, t)
    if t == 0:
        return 0.0
    return float(_an_levels(t, int(n))[-1])


def an_product_integration(n: int, t: float, steps: int = AN_GRID_STEPS) -> float:
    """
    a_n(t) на равномерной сетке: веса точны для кусочно-линейной a_{n−1}
    против s^{−1/2}. Сходимость O(h^{3/2}) из-за √ у a_1.
    """
    _check_order(n, t)
    if steps < 1:
        raise DomainError(f"steps must be ≥ 1, got {steps}")
    if t == 0:
        return 0.0
    h = t / steps
    left = h * np.arange(steps)
    right = left + h
    m0 = 2.0 * (np.sqrt(right) - np.sqrt(left))
    m1 = ((2.0 / 3.0) * (right ** 1.5 - left ** 1.5) - left * m0) / h
    a, b = m0 - m1, m1

    values = np.ones(steps + 1)
    for _ in range(int(n)):
        nxt = np.zeros(steps + 1)
        nxt[1:] = (np.convolve(a, values)[1:steps + 1] - np.append(a[1:], 0.0) * values[0]
                   + np.convolve(b, values)[:steps])
        values = nxt
    return float(values[-1])


def an_closed_form(n: int, t: float) -> float:
    """(πt)^{n/2}/Γ(n/2 + 1)."""
    if t == 0:
        return 0.0
    return math.exp(0.5 * n * math.log(math.pi * t) - special.gammaln(0.5 * n + 1.0))


def an_bound(n: int, t: float) -> float:
    """(πt)^{n/2} e^{−(n/2)(log(n/2) − 1)}."""
    half = 0.5 * n
    return (math.pi * t) ** half * math.exp(-half * (math.log(half) - 1.0))


@dataclass
class AnSeriesReport:
    t: float
    n_max: int
    partial_sum: float
    full_series: float
    fitted_c: float
    n_star: int
    max_tail_ratio: float

    @property
    def within_bound(self) -> bool:
        return self.fitted_c <= 3.0


def an_series_bound(t: float, n_max: int = AN_MAX_ORDER) -> AnSeriesReport:
    """
    Частичная сумма Σ_{n≤n_max} a_n(t) против e^{πt}.

    Полный ряд Σ_{n≥1} x^n/Γ(n/2+1) при x = √(πt) равен e^{πt}(1 + erf √(πt)) − 1,
    так что c ≤ 2. Отношение a_{n+2}/a_n = πt/(n/2 + 1) < 1 при n > n* = 2(πt − 1).
    """
    if not 0 <= t <= SERIES_MAX_T:
        raise DomainError(f"series check needs 0 ≤ t ≤ {SERIES_MAX_T}, got {t}")
    values = _an_levels(t, n_max) if t > 0 else np.zeros(n_max)
    partial = float(values.sum())
    full = math.exp(math.pi * t) * (1.0 + math.erf(math.sqrt(math.pi * t))) - 1.0
    n_star = max(int(math.ceil(2.0 * (math.pi * t - 1.0))), 1)

    ratios = [values[n + 1] / values[n - 1] for n in range(n_star, n_max - 1) if values[n - 1] > 0]
    report = AnSeriesReport(
        t=float(t),
        n_max=n_max,
        partial_sum=partial,
        full_series=full,
        fitted_c=partial / math.exp(math.pi * t),
        n_star=n_star,
        max_tail_ratio=float(max(ratios)) if ratios else 0.0,
    )
    logger.debug("a_n series t=%g: partial %.6g, full %.6g, c=%.4f", t, partial, full, report.fitted_c)
    return report


def format_an_report(report: AnSeriesReport) -> str:
    lines = [
        "=" * 60,
        "  ИТЕРИРОВАННЫЕ ИНТЕГРАЛЫ a_n(t)",
        "=" * 60,
        "",
        f"  t:                          {report.t:g}",
        f"  Σ_(n≤{report.n_max}) a_n(t):           {report.partial_sum:.10g}",
        f"  e^(πt)(1+erf√(πt)) − 1:     {report.full_series:.10g}",
        f"  c = сумма / e^(πt):         {report.fitted_c:.6f}",
        f"  n* = ⌈2(πt − 1)⌉:           {report.n_star}",
        f"  max a_(n+2)/a_n при n ≥ n*: {report.max_tail_ratio:.4f}",
    ]
    return "\n".join(lines)
