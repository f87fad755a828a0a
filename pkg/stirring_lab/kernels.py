"""
Переходные ядра блужданий и тета-ядра макроскопической системы.

- Q: свободное блуждание на ℤ, скорость ½ в каждую сторону, интенсивность λ = ε⁻²t
- P: отражённое блуждание на Λ_N как сумма образов Q по прообразам ψ_N
- G: гауссово ядро, локальная ЦПТ и оболочки хвостов
- p, q, w_±: тета-ядра граничной системы Вольтерры
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import integrate, linalg, special, stats

from .lattice import laplacian_matrix, preimage_offsets
from .models import DomainError, KernelTable, LatticeParams, Side, ThetaKernels

logger = logging.getLogger(__name__)

KERNEL_TOL = 1e-12
LCLT_MIN_LAMBDA = 25.0
LCLT_WINDOW_EXPONENT = 5.0 / 8.0


# ---------------------------------------------------------------------------
# Гауссово ядро
# ---------------------------------------------------------------------------

def gaussian_kernel(t: float, r):
    """G_t(r) = e^{−r²/2t}/√(2πt)."""
    if not t > 0:
        raise DomainError(f"Gaussian kernel needs t > 0, got {t}")
    r = np.asarray(r, dtype=float)
    out = np.exp(-r * r / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)
    return float(out) if out.ndim == 0 else out


def log_gaussian_kernel(t: float, r):
    r = np.asarray(r, dtype=float)
    return -r * r / (2.0 * t) - 0.5 * math.log(2.0 * math.pi * t)


# ---------------------------------------------------------------------------
# Свободное блуждание
# ---------------------------------------------------------------------------

def free_walk_kernel(lam: float, dx):
    """
    Q(dx) после интенсивности λ: e^{−λ} I_dx(λ).

    Смесь Пуассона(λ) симметричных шагов ±1 есть закон Скеллама; масштабированная
    функция Бесселя `ive` не переполняется при больших λ.
    """
    if lam < 0:
        raise DomainError(f"intensity must be ≥ 0, got {lam}")
    dx = np.abs(np.asarray(dx))
    if lam == 0:
        out = (dx == 0).astype(float)
    else:
        out = special.ive(dx, lam)
    return float(out) if np.ndim(out) == 0 else out


def poisson_mixture_kernel(lam: float, dx: int, tol: float = 1e-14) -> float:
    """Σ_m Pois(λ; m)·Binom(m, ½)[(m+dx)/2] с отсечением хвоста Пуассона ниже tol."""
    if lam < 0:
        raise DomainError(f"intensity must be ≥ 0, got {lam}")
    dx = abs(int(dx))
    if lam == 0:
        return 1.0 if dx == 0 else 0.0
    m_max = max(int(stats.poisson.isf(tol, lam)) + 1, dx)
    m = np.arange(dx, m_max + 1, 2)
    weights = stats.poisson.pmf(m, lam)
    steps = stats.binom.pmf((m + dx) // 2, m, 0.5)
    return float(np.sum(weights * steps))


def free_tail_reach(lam: float, tol: float = KERNEL_TOL) -> int:
    """
    D с P(|X| > D) ≤ tol/10 по оценке Беннета–Бернштейна для суммы ±1.

    Решает D²/(2(λ + D/3)) = log(20/tol).
    """
    level = math.log(20.0 / tol)
    reach = level / 3.0 + math.sqrt(level * level / 9.0 + 2.0 * level * lam)
    return int(math.ceil(reach)) + 1


# ---------------------------------------------------------------------------
# Отражённое блуждание
# ---------------------------------------------------------------------------

def reflected_kernel_matrix(params: LatticeParams, t: float) -> KernelTable:
    """Вся таблица P_t(x, y) суммой образов по прообразам ψ_N."""
    if t < 0:
        raise DomainError(f"time must be ≥ 0, got {t}")
    size = params.size
    if t == 0:
        return KernelTable(params, 0.0, np.eye(size))

    lam = params.n * params.n * t
    reach = free_tail_reach(lam)
    q_table = free_walk_kernel(lam, np.arange(reach + 1))

    sites = params.sites()
    images = np.stack([preimage_offsets(params, int(y), reach) for y in sites])  # (M, P)
    disp = np.abs(images[None, :, :] - sites[:, None, None])                      # (M, M, P)
    inside = disp <= reach
    contrib = np.where(inside, q_table[np.minimum(disp, reach)], 0.0)
    values = contrib.sum(axis=2)
    return KernelTable(params, float(t), values)


def reflected_walk_kernel(params: LatticeParams, t: float, x: int, y: int) -> float:
    """P_t(x, y) для одной пары сайтов."""
    if t < 0:
        raise DomainError(f"time must be ≥ 0, got {t}")
    params.index(x)
    params.index(y)
    if t == 0:
        return 1.0 if x == y else 0.0
    lam = params.n * params.n * t
    reach = free_tail_reach(lam)
    disp = np.abs(preimage_offsets(params, y, reach) - x)
    disp = disp[disp <= reach]
    return float(np.sum(free_walk_kernel(lam, disp)))


def walk_generator(params: LatticeParams) -> np.ndarray:
    """Генератор отражённого блуждания ½ε⁻²Δ."""
    return 0.5 * params.n * params.n * laplacian_matrix(params)


def reflected_kernel_expm(params: LatticeParams, t: float) -> np.ndarray:
    """Оракул: exp(t·½ε⁻²Δ) плотной экспонентой (малые N)."""
    return linalg.expm(t * walk_generator(params))


# ---------------------------------------------------------------------------
# Локальная ЦПТ и оболочки
# ---------------------------------------------------------------------------

@dataclass
class LcltReport:
    """Сравнение Q_λ с G_λ внутри окна |dx| ≤ λ^{5/8} и хвост за окном."""

    lam: float
    window: int
    c1: float                 # max |Q − G|/G · √λ внутри окна
    mode_error: float         # |Q(0) − G(0)|/G(0)
    tail_max: float           # max Q вне окна
    envelope_constant: float  # c₂ при c₃ = ¼: max Q·e^{d²/4λ} вне окна
    envelope_shift: float     # c₅ при c₄ = 1: max (log Q)/d + log d вне окна


def lclt_comparison(lam: float, window: Optional[Iterable[int]] = None) -> LcltReport:
    """Локальная ЦПТ: относительная ошибка в окне и проверка хвоста оболочкой."""
    if lam < LCLT_MIN_LAMBDA:
        raise DomainError(f"LCLT comparison needs λ ≥ {LCLT_MIN_LAMBDA}, got {lam}")
    if window is None:
        half = int(math.floor(lam ** LCLT_WINDOW_EXPONENT))
    else:
        half = int(max(abs(d) for d in window))

    inner = np.arange(0, half + 1)
    q_in = free_walk_kernel(lam, inner)
    g_in = gaussian_kernel(lam, inner)
    rel = np.abs(q_in - g_in) / g_in
    c1 = float(np.max(rel) * math.sqrt(lam))

    reach = free_tail_reach(lam)
    outer = np.arange(half + 1, max(reach, half + 2) + 1)
    q_out = free_walk_kernel(lam, outer)
    d = outer.astype(float)
    positive = q_out > 0
    if np.any(positive):
        log_q, d = np.log(q_out[positive]), d[positive]
        envelope = float(np.exp(np.max(log_q + d * d / (4.0 * lam))))
        shift = float(np.max(log_q / d + np.log(d)))
        tail_max = float(np.max(q_out))
    else:
        envelope, shift, tail_max = 0.0, -math.inf, 0.0

    report = LcltReport(
        lam=float(lam),
        window=half,
        c1=c1,
        mode_error=float(rel[0]),
        tail_max=tail_max,
        envelope_constant=envelope,
        envelope_shift=shift,
    )
    logger.debug("LCLT λ=%g window=%d c1=%.4g tail=%.3g", lam, half, c1, tail_max)
    return report


def format_lclt_report(report: LcltReport) -> str:
    lines = [
        "=" * 60,
        "  ЛОКАЛЬНАЯ ЦПТ: Q_λ ПРОТИВ G_λ",
        "=" * 60,
        "",
        f"  λ = ε⁻²t:                 {report.lam:g}",
        f"  Окно |dx| ≤ λ^(5/8):      {report.window}",
        f"  c₁ (max отн. ошибка·√λ):  {report.c1:.6g}",
        f"  Ошибка в моде dx=0:       {report.mode_error:.3e}",
        f"  max Q вне окна:           {report.tail_max:.3e}",
        f"  c₂ (гауссова оболочка):   {report.envelope_constant:.4g}",
        f"  c₅ (оболочка d log d):    {report.envelope_shift:.4g}",
    ]
    return "\n".join(lines)


def envelope_constants(ns: Iterable[int], ts: Iterable[float]) -> tuple[float, float]:
    """
    Подгонка констант доминирования и градиента по сетке (N, t).

    c_dom = max P_t(x,y)/G_λ(x−y); c_grad = max |P_t(x,y) − P_t(x+1,y)|·√λ / G_λ(x−y).
    Отношения считаются в логарифмах, нулевые вероятности пропускаются.
    """
    c_dom, c_grad = 0.0, 0.0
    for n in ns:
        params = LatticeParams(n=n)
        sites = params.sites()
        for t in ts:
            lam = n * n * t
            table = reflected_kernel_matrix(params, t).values
            log_g = log_gaussian_kernel(lam, sites[:, None] - sites[None, :])

            positive = table > 0
            ratio = np.exp(np.log(table[positive]) - log_g[positive])
            c_dom = max(c_dom, float(ratio.max()))

            diff = np.abs(table[:-1, :] - table[1:, :]) * math.sqrt(lam)
            mask = diff > 0
            if np.any(mask):
                g_rows = log_g[:-1, :]
                c_grad = max(c_grad, float(np.exp(np.log(diff[mask]) - g_rows[mask]).max()))
    return c_dom, c_grad


# ---------------------------------------------------------------------------
# Тета-ядра граничной системы
# ---------------------------------------------------------------------------

def theta_reach(t: float) -> int:
    """k_max: слагаемые с |k| > k_max меньше e^{−40} относительно G_t(0)."""
    return int(math.ceil(math.sqrt(80.0 * t) / 4.0)) + 2


def theta_p_q(t: float) -> tuple[float, float]:
    """p(t) = 2Σ_k G_t(4k), q(t) = 2Σ_k G_t(4k+2)."""
    if not t > 0:
        raise DomainError(f"theta kernels need t > 0, got {t}")
    k = np.arange(-theta_reach(t), theta_reach(t) + 1)
    p = 2.0 * float(np.sum(gaussian_kernel(t, 4.0 * k)))
    q = 2.0 * float(np.sum(gaussian_kernel(t, 4.0 * k + 2.0)))
    return p, q


def theta_kernels(grid) -> ThetaKernels:
    grid = np.asarray(grid, dtype=float)
    values = np.array([theta_p_q(t) for t in grid])
    return ThetaKernels(
        grid=grid,
        p=values[:, 0],
        q=values[:, 1],
        truncation=theta_reach(float(grid.max())),
    )


def theta_w(t: float, side: Side, u0: Callable[[float], float], tol: float = 1e-11) -> float:
    """
    w_{±,t}: интеграл начального профиля против суммы образов 2G_t.

    Для + центры гауссиан в r′ = 1 + 4k, для − в r′ = −1 − 4k. Каждое слагаемое
    интегрируется по части [−1, 1], где гауссиана заметна (±12√t от центра).
    """
    if not t > 0:
        raise DomainError(f"theta_w needs t > 0, got {t}")
    width = 12.0 * math.sqrt(t)
    sqrt_norm = 2.0 / math.sqrt(2.0 * math.pi * t)
    total = 0.0
    reach = theta_reach(t)
    for k in range(-reach, reach + 1):
        center = (1.0 + 4.0 * k) if side is Side.PLUS else (-1.0 - 4.0 * k)
        lo, hi = max(-1.0, center - width), min(1.0, center + width)
        if lo >= hi:
            continue

        def integrand(r, c=center):
            return u0(r) * sqrt_norm * math.exp(-(c - r) ** 2 / (2.0 * t))

        points = [center] if lo < center < hi else None
        value, _ = integrate.quad(integrand, lo, hi, points=points,
                                  epsabs=tol, epsrel=tol, limit=200)
        total += value
    return total
