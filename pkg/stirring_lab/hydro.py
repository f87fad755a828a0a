"""
Макроскопический предел: уравнение теплопроводности ∂ρ/∂t = ½∂²ρ/∂r² на [−1, 1]
с граничными значениями u_±(t) из нелинейной системы Вольтерры

    u_+(t) = ∫₀ᵗ {p(s) f_+(u_+(t−s)) − q(s) f_−(u_−(t−s))} ds + w_{+,t}
    u_−(t) = ∫₀ᵗ {q(s) f_+(u_+(t−s)) − p(s) f_−(u_−(t−s))} ds + w_{−,t}

Приток f_+ справа поднимает u_+, сток f_− слева опускает u_−; второе уравнение
получается из первого заменой r ↦ −r, u ↦ 1−u.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg

from .kernels import theta_reach, theta_w
from .models import (
    BoundaryTrace,
    ConvergenceError,
    DomainError,
    MacroField,
    RhoField,
    Side,
)

logger = logging.getLogger(__name__)

PICARD_TOL = 1e-11
PICARD_MAX_ITER = 200
GAUSS_NODES = 8


# ---------------------------------------------------------------------------
# Начальные профили u₀
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """
    Начальный профиль на [−1, 1].

    kind: const (c), linear (a, b: значения в −1 и 1), step (a слева, b справа),
    sine (c + a·sin(πr/2)).
    """

    kind: str
    args: tuple[float, ...]

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        if self.kind == "const":
            out = np.full_like(r_arr, self.args[0])
        elif self.kind == "linear":
            a, b = self.args
            out = a + (b - a) * (1.0 + r_arr) / 2.0
        elif self.kind == "step":
            a, b = self.args
            out = np.where(r_arr < 0, a, b)
        elif self.kind == "sine":
            c, a = self.args
            out = c + a * np.sin(0.5 * np.pi * r_arr)
        else:
            raise DomainError(f"unknown profile kind {self.kind!r}")
        return float(out) if out.ndim == 0 else out

    def spec(self) -> str:
        return f"{self.kind}:" + ",".join(repr(float(a)) for a in self.args)


@dataclass(frozen=True)
class MirroredProfile:
    """r ↦ 1 − u₀(−r): частично-дырочное отражение профиля."""

    base: Callable

    def __call__(self, r):
        out = 1.0 - np.asarray(self.base(-np.asarray(r, dtype=float)))
        return float(out) if out.ndim == 0 else out


PROFILE_ARITY = {"const": 1, "linear": 2, "step": 2, "sine": 2}


def parse_profile(text: str) -> Profile:
    """'const:0.5', 'linear:0.2,0.8', 'step:1,0', 'sine:0.5,0.25'."""
    kind, _, rest = text.strip().partition(":")
    kind = kind.lower()
    if kind not in PROFILE_ARITY:
        raise DomainError(f"unknown profile {text!r}; expected one of {sorted(PROFILE_ARITY)}")
    try:
        args = tuple(float(a) for a in rest.split(",") if a.strip())
    except ValueError as exc:
        raise DomainError(f"bad profile arguments in {text!r}") from exc
    if len(args) != PROFILE_ARITY[kind]:
        raise DomainError(f"profile {kind} takes {PROFILE_ARITY[kind]} arguments, got {len(args)}")

    profile = Profile(kind, args)
    sample = profile(np.linspace(-1.0, 1.0, 401))
    if sample.min() < 0.0 or sample.max() > 1.0:
        raise DomainError(f"profile {text!r} leaves [0, 1]")
    return profile


def mirror_profile(u0: Callable) -> MirroredProfile:
    return MirroredProfile(u0)


# ---------------------------------------------------------------------------
# Нелинейность резервуаров
# ---------------------------------------------------------------------------

def reaction_terms(u: float, j: float, k: int) -> tuple[float, float]:
    """f_+(u) = (j/2)(1 − u^K), f_−(u) = (j/2)(1 − (1−u)^K)."""
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"boundary value {u} outside [0, 1]")
    return 0.5 * j * (1.0 - u ** k), 0.5 * j * (1.0 - (1.0 - u) ** k)


def _f_plus(u: np.ndarray, j: float, k: int) -> np.ndarray:
    return 0.5 * j * (1.0 - u ** k)


def _f_minus(u: np.ndarray, j: float, k: int) -> np.ndarray:
    return 0.5 * j * (1.0 - (1.0 - u) ** k)


# ---------------------------------------------------------------------------
# Веса произведённого интегрирования
# ---------------------------------------------------------------------------

def _smooth_p(s: np.ndarray, reach: int) -> np.ndarray:
    """p(s) − √(2/(πs)) = 4Σ_{k≥1} G_s(4k)."""
    k = np.arange(1, reach + 1)
    return 4.0 * gaussian_kernel_sum(s, 4.0 * k)


def _q(s: np.ndarray, reach: int) -> np.ndarray:
    k = np.arange(0, reach + 1)
    return 4.0 * gaussian_kernel_sum(s, 4.0 * k + 2.0)


def gaussian_kernel_sum(s: np.ndarray, centers: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.sum(
        np.exp(-centers[None, :] ** 2 / (2.0 * s[:, None])) / np.sqrt(2.0 * np.pi * s[:, None]),
        axis=1,
    )


@dataclass
class CellWeights:
    """Моменты ядра на ячейках [lh, (l+1)h]: A: вес левого узла, B: правого."""

    a: np.ndarray
    b: np.ndarray

    @property
    def mass(self) -> np.ndarray:
        return self.a + self.b


def _cell_weights(h: float, n_cells: int, horizon: float) -> tuple[CellWeights, CellWeights]:
    """
    Веса, точные для кусочно-линейных функций против p и q.

    Особенность √(2/(πs)) интегрируется аналитически, гладкие остатки
    интегрируются Гауссом–Лежандром на каждой ячейке.
    """
    reach = theta_reach(horizon)
    left = h * np.arange(n_cells)
    right = left + h

    c = math.sqrt(2.0 / math.pi)
    sq_l, sq_r = np.sqrt(left), np.sqrt(right)
    p0 = c * 2.0 * (sq_r - sq_l)
    p1 = c * ((2.0 / 3.0) * (right ** 1.5 - left ** 1.5) - 2.0 * left * (sq_r - sq_l)) / h

    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_NODES)
    frac = 0.5 * (nodes + 1.0)
    s = left[:, None] + h * frac[None, :]
    w = 0.5 * h * weights[None, :]

    smooth = _smooth_p(s.ravel(), reach).reshape(s.shape)
    p0 = p0 + np.sum(w * smooth, axis=1)
    p1 = p1 + np.sum(w * smooth * frac[None, :], axis=1)

    qv = _q(s.ravel(), reach).reshape(s.shape)
    q0 = np.sum(w * qv, axis=1)
    q1 = np.sum(w * qv * frac[None, :], axis=1)
    return CellWeights(p0 - p1, p1), CellWeights(q0 - q1, q1)


def _convolve(weights: CellWeights, values: np.ndarray, n: int) -> float:
    """Σ_l A_l g_{n−l} + Σ_l B_l g_{n−l−1} ≈ ∫₀^{t_n} kernel(s) g(t_n − s) ds."""
    if n == 0:
        return 0.0
    rev = values[n::-1]
    return float(np.dot(weights.a[:n], rev[:n]) + np.dot(weights.b[:n], rev[1:n + 1]))


# ---------------------------------------------------------------------------
# Система Вольтерры
# ---------------------------------------------------------------------------

class _VolterraSystem:
    def __init__(self, u0: Callable, j: float, k: int, horizon: float, h: float):
        self.j, self.k, self.h = j, k, h
        self.n_steps = int(round(horizon / h))
        if self.n_steps < 1 or abs(self.n_steps * h - horizon) > 1e-9 * max(horizon, 1.0):
            raise DomainError(f"horizon {horizon} must be a positive multiple of h={h}")
        self.grid = h * np.arange(self.n_steps + 1)
        self.p, self.q = _cell_weights(h, self.n_steps, horizon)

        self.w_plus = np.empty(self.n_steps + 1)
        self.w_minus = np.empty(self.n_steps + 1)
        self.w_plus[0], self.w_minus[0] = float(u0(1.0)), float(u0(-1.0))
        for i, t in enumerate(self.grid[1:], start=1):
            self.w_plus[i] = theta_w(t, Side.PLUS, u0)
            self.w_minus[i] = theta_w(t, Side.MINUS, u0)

    def evaluate(self, n: int, up: np.ndarray, um: np.ndarray) -> tuple[float, float]:
        fp = _f_plus(up, self.j, self.k)
        fm = _f_minus(um, self.j, self.k)
        new_plus = _convolve(self.p, fp, n) - _convolve(self.q, fm, n) + self.w_plus[n]
        new_minus = _convolve(self.q, fp, n) - _convolve(self.p, fm, n) + self.w_minus[n]
        return new_plus, new_minus

    def window_length(self) -> int:
        """Наибольшее W с L·∫₀^{(W+1)h}(p+q) ≤ ½, L = (j/2)K."""
        lipschitz = 0.5 * self.j * self.k
        if lipschitz == 0:
            return self.n_steps
        mass = np.cumsum(self.p.mass + self.q.mass)
        fits = np.nonzero(lipschitz * mass <= 0.5)[0]
        return max(int(fits[-1]) if len(fits) else 1, 1)


def solve_boundary_traces(
    u0: Callable,
    j: float,
    k: int,
    horizon: float,
    h: float,
) -> BoundaryTrace:
    """Неподвижная точка системы Вольтерры на [0, T] маршем по окнам Пикара."""
    if j < 0 or k < 1:
        raise DomainError(f"need j ≥ 0 and K ≥ 1, got j={j}, K={k}")
    system = _VolterraSystem(u0, j, k, horizon, h)
    n_steps = system.n_steps
    up = system.w_plus.copy()
    um = system.w_minus.copy()

    if j == 0:
        return BoundaryTrace(system.grid, up, um, residual=0.0)

    window = system.window_length()
    projections = 0
    start = 1
    while start <= n_steps:
        stop = min(start + window - 1, n_steps)
        up[start:stop + 1] = up[start - 1]
        um[start:stop + 1] = um[start - 1]

        for iteration in range(PICARD_MAX_ITER):
            change = 0.0
            new_p = up.copy()
            new_m = um.copy()
            for n in range(start, stop + 1):
                a, b = system.evaluate(n, up, um)
                new_p[n], new_m[n] = a, b
            low = min(new_p[start:stop + 1].min(), new_m[start:stop + 1].min())
            high = max(new_p[start:stop + 1].max(), new_m[start:stop + 1].max())
            if low < 0.0 or high > 1.0:
                projections += 1
                np.clip(new_p, 0.0, 1.0, out=new_p)
                np.clip(new_m, 0.0, 1.0, out=new_m)
            change = max(np.max(np.abs(new_p - up)), np.max(np.abs(new_m - um)))
            up, um = new_p, new_m
            if change <= PICARD_TOL:
                break
        else:
            raise ConvergenceError(
                f"Picard did not converge on window t∈[{system.grid[start]:.4g}, "
                f"{system.grid[stop]:.4g}] after {PICARD_MAX_ITER} iterations "
                f"(last change {change:.3e}, window {window} steps)"
            )
        start = stop + 1

    if projections:
        logger.warning("Picard iterates left [0,1] %d times; projected back", projections)

    residual = trace_residual(system, up, um)
    logger.info("boundary traces: %d steps, window %d, residual %.2e", n_steps, window, residual)
    return BoundaryTrace(system.grid, up, um, residual=residual)


def trace_residual(system: _VolterraSystem, up: np.ndarray, um: np.ndarray) -> float:
    worst = 0.0
    for n in range(1, system.n_steps + 1):
        a, b = system.evaluate(n, up, um)
        worst = max(worst, abs(a - up[n]), abs(b - um[n]))
    return worst


# ---------------------------------------------------------------------------
# Уравнение теплопроводности с данными Дирихле
# ---------------------------------------------------------------------------

def _theta_step(u, dt, dr, theta, b_old, b_new):
    """(I − θ dt L)u¹ = (I + (1−θ) dt L)u⁰ + dt[θ b¹ + (1−θ) b⁰], L = ½∂²."""
    m = len(u)
    coef = 0.5 / (dr * dr)
    lu = np.empty(m)
    lu[1:-1] = coef * (u[2:] + u[:-2] - 2.0 * u[1:-1])
    lu[0] = coef * (u[1] - 2.0 * u[0])
    lu[-1] = coef * (u[-2] - 2.0 * u[-1])
    rhs = u + (1.0 - theta) * dt * lu + dt * (theta * b_new + (1.0 - theta) * b_old)

    banded = np.zeros((3, m))
    banded[0, 1:] = -theta * dt * coef
    banded[1, :] = 1.0 + 2.0 * theta * dt * coef
    banded[2, :-1] = -theta * dt * coef
    return linalg.solve_banded((1, 1), banded, rhs)


def solve_macro(u0: Callable, trace: BoundaryTrace, t: float, cells: int = 400) -> MacroField:
    """
    Кранк–Николсон на равномерной сетке с данными Дирихле из следа.

    Первые шаги заменены четырьмя полушагами неявного Эйлера (старт Раннахера).
    """
    if t < 0 or t > trace.horizon + 1e-12:
        raise DomainError(f"trace covers [0, {trace.horizon}], requested t={t}")
    grid = np.linspace(-1.0, 1.0, cells + 1)
    dr = grid[1] - grid[0]
    values = np.asarray(u0(grid), dtype=float) * np.ones_like(grid)
    if t == 0:
        return MacroField(grid, 0.0, values)

    dt_target = trace.h if trace.h > 0 else 1e-3
    n_steps = max(int(math.ceil(t / dt_target - 1e-9)), 2)
    dt = t / n_steps
    coef = 0.5 / (dr * dr)

    def forcing(time):
        u_plus, u_minus = trace.at(time)
        b = np.zeros(cells - 1)
        b[0] += coef * u_minus
        b[-1] += coef * u_plus
        return b

    inner = values[1:-1].copy()
    time = 0.0
    for _ in range(4):
        h = 0.25 * dt
        inner = _theta_step(inner, h, dr, 1.0, forcing(time), forcing(time + h))
        time += h
    for _ in range(n_steps - 1):
        inner = _theta_step(inner, dt, dr, 0.5, forcing(time), forcing(time + dt))
        time += dt

    u_plus, u_minus = trace.at(t)
    values = np.concatenate([[u_minus], inner, [u_plus]])
    return MacroField(grid, float(t), values)


def macro_current(macro: MacroField) -> tuple[float, float]:
    """½ρ_r на концах (второй порядок): приток справа и сток слева."""
    v, dr = macro.values, macro.grid[1] - macro.grid[0]
    right = 0.5 * (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dr)
    left = 0.5 * (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dr)
    return float(right), float(left)


def micro_macro_gap(rho_eps: RhoField, macro: MacroField) -> float:
    """sup_x |ρ_ε(x, t) − ρ(εx, t)|."""
    if abs(rho_eps.time - macro.time) > 1e-9:
        raise DomainError(f"times differ: micro {rho_eps.time}, macro {macro.time}")
    r = rho_eps.params.epsilon * rho_eps.params.sites()
    return float(np.max(np.abs(rho_eps.values - macro(r))))


def format_trace_summary(trace: BoundaryTrace) -> str:
    lines = [
        "=" * 60,
        "  ГРАНИЧНЫЕ ЗНАЧЕНИЯ u_±(t)",
        "=" * 60,
        "",
        f"  Горизонт T:        {trace.horizon:g}",
        f"  Шаг h:             {trace.h:g}",
        f"  Невязка Пикара:    {trace.residual:.3e}",
        f"  u_+(T):            {trace.u_plus[-1]:.10f}",
        f"  u_−(T):            {trace.u_minus[-1]:.10f}",
    ]
    return "\n".join(lines)
