"""
Монте-Карло для v-функций и закона больших чисел по блокам.

Ошибка оценки v считается по 32 пакетным средним; число реплик округляется вверх
до кратного 32.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .models import (
    BlockAverage,
    DomainError,
    LatticeParams,
    ParticleConfig,
    RhoField,
    VFunctionEstimate,
    parse_config,
)
from .pde import DEFAULT_TOL, evolve_rho
from .sim import sample_full_process

logger = logging.getLogger(__name__)

N_BATCHES = 32


def batch_means(values: np.ndarray, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Среднее и стандартная ошибка по n_batches последовательным пакетам."""
    values = np.asarray(values, dtype=float)
    if len(values) % n_batches:
        raise DomainError(f"{len(values)} samples do not split into {n_batches} batches")
    means = values.reshape(n_batches, -1).mean(axis=1)
    return float(values.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def _round_replicas(replicas: int) -> int:
    if replicas < 2:
        raise DomainError(f"need at least 2 replicas, got {replicas}")
    return N_BATCHES * max(1, math.ceil(replicas / N_BATCHES))


def estimate_v(
    sites: Sequence[int],
    t: float,
    eta0: ParticleConfig,
    replicas: int,
    seed: int,
    threads: int = 1,
    rho: Optional[RhoField] = None,
    tol: float = DEFAULT_TOL,
) -> VFunctionEstimate:
    """Выборочное среднее Π(η(x_i,t) − ρ_ε(x_i,t)) по независимым репликам L_ε."""
    params = eta0.params
    key = tuple(sorted(int(x) for x in sites))
    if len(set(key)) != len(key) or not key:
        raise DomainError(f"v-functions need a non-empty set of distinct sites, got {tuple(sites)}")
    if len(key) > 4:
        raise DomainError("Monte Carlo v-functions are supported for n ≤ 4")
    cols = [params.index(x) for x in key]
    replicas = _round_replicas(replicas)

    if rho is None:
        rho = evolve_rho(RhoField.from_config(eta0), t, tol=tol)
    sample = sample_full_process(eta0, [t], replicas, seed, threads)
    centered = sample.occupation[:, 0, cols] - rho.values[cols][None, :]
    products = np.prod(centered, axis=1)
    mean, se = batch_means(products)
    logger.debug("v%s at t=%g: %.4e ± %.1e (%d replicas)", key, t, mean, se, replicas)
    return VFunctionEstimate(key, float(t), mean, se, replicas)


@dataclass
class VScalingReport:
    """Оценки v в одних и тех же макроскопических точках при разных N."""

    positions: tuple[float, ...]
    estimates: list[tuple[int, VFunctionEstimate]]

    @property
    def joint_sigma(self) -> float:
        """Корень суммы квадратов ошибок крайних размеров."""
        return math.hypot(self.estimates[0][1].std_error, self.estimates[-1][1].std_error)

    @property
    def decays(self) -> bool:
        """|v|(N_max) ≤ |v|(N_min) + 3σ_joint."""
        small, large = self.estimates[0][1], self.estimates[-1][1]
        return abs(large.estimate) <= abs(small.estimate) + 3.0 * self.joint_sigma


def compare_v_scaling(
    positions: Sequence[float],
    t: float,
    ns: Sequence[int] = (25, 100),
    k: int = 1,
    j: float = 1.0,
    initial: str = "step",
    replicas: int = 3200,
    seed: int = 0,
    threads: int = 1,
) -> VScalingReport:
    """Независимые оценки v(x̄ = round(N·r̄), t) для каждого N."""
    estimates = []
    for n in ns:
        params = LatticeParams(n=n, k=k, j=j)
        sites = tuple(int(round(r * n)) for r in positions)
        eta0 = parse_config(params, initial)
        estimates.append((n, estimate_v(sites, t, eta0, replicas, seed, threads)))
    return VScalingReport(tuple(float(r) for r in positions), estimates)


# ---------------------------------------------------------------------------
# Блочные средние
# ---------------------------------------------------------------------------

def block_half_width(params: LatticeParams, a: float) -> int:
    if not 0 < a < 1:
        raise DomainError(f"block exponent a must lie in (0, 1), got {a}")
    half = int(math.floor(params.n ** a))
    if half < 2:
        raise DomainError(f"N^a = {params.n ** a:.3g} gives blocks narrower than 2 sites")
    return half


def _block_means(values: np.ndarray, half: int) -> np.ndarray:
    """Средние по окнам [x − half, x + half] ⊂ Λ_N вдоль последней оси."""
    width = 2 * half + 1
    cum = np.cumsum(values, axis=-1)
    pad = np.zeros(values.shape[:-1] + (1,))
    cum = np.concatenate([pad, cum], axis=-1)
    return (cum[..., width:] - cum[..., :-width]) / width


def block_averages(params: LatticeParams, values: np.ndarray, a: float) -> list[BlockAverage]:
    half = block_half_width(params, a)
    means = _block_means(np.asarray(values, dtype=float), half)
    centers = params.sites()[half:params.size - half]
    return [BlockAverage(int(c), half, float(v)) for c, v in zip(centers, means)]


@dataclass
class BlockTestResult:
    probability: float
    std_error: float
    half_width: int
    sup_values: np.ndarray


def block_average_test(
    eta0: ParticleConfig,
    t: float,
    a: float,
    delta: float,
    replicas: int,
    seed: int,
    threads: int = 1,
    rho: Optional[RhoField] = None,
) -> BlockTestResult:
    """Доля реплик с sup_x |J|⁻¹ Σ_{y∈J}(η(y,t) − ρ_ε(y,t)) ≥ δ."""
    params = eta0.params
    half = block_half_width(params, a)
    if rho is None:
        rho = evolve_rho(RhoField.from_config(eta0), t)
    sample = sample_full_process(eta0, [t], replicas, seed, threads)
    deviation = sample.occupation[:, 0, :] - rho.values[None, :]
    sup = np.max(np.abs(_block_means(deviation, half)), axis=1)
    p = float((sup >= delta).mean())
    se = math.sqrt(p * (1.0 - p) / len(sup))
    return BlockTestResult(p, se, half, sup)


def initial_profile_check(eta0: ParticleConfig | RhoField, u0: Callable, a: float) -> float:
    """
    sup_x | |J|⁻¹ Σ_{y∈J(x)} ρ_ε(y,0) − u₀(εx) |.

    Детерминированная конфигурация даёт ρ_ε(·,0) = η₀; профиль произведения
    мер передаётся как RhoField.
    """
    params = eta0.params
    values = eta0.values if isinstance(eta0, RhoField) else eta0.occupation.astype(float)
    blocks = block_averages(params, values, a)
    return max(abs(b.value - float(u0(params.epsilon * b.center))) for b in blocks)
