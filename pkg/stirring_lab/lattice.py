"""
Геометрия Λ_N = [−N, N]: резервуары I_± и отражающее отображение ψ_N.

ψ_N сворачивает ℤ на Λ_N так, что отражённое блуждание на Λ_N есть образ
свободного блуждания на ℤ. Стенки стоят между N и N+1 и между −N−1 и −N.
"""

from __future__ import annotations

import numpy as np

from .models import DomainError, LatticeParams, Side

__all__ = [
    "LatticeParams",
    "in_reservoir",
    "laplacian_matrix",
    "preimage_offsets",
    "reflection_map",
    "reflection_map_iterated",
    "reservoir_sites",
]


def reflection_map(params: LatticeParams, z):
    """
    ψ_N(z) в замкнутой форме.

    Период развёртки 2(2N+1); m = (z + N) mod (4N+2) лежит на прямом
    участке при m ≤ 2N и на отражённом иначе. Принимает скаляр или массив.
    """
    n = params.n
    m = np.mod(np.asarray(z) + n, 4 * n + 2)
    out = np.where(m <= 2 * n, m - n, 3 * n + 1 - m)
    return int(out) if np.ndim(out) == 0 else out


def reflection_map_iterated(params: LatticeParams, z: int) -> int:
    """ψ_N повторными отражениями от стенок N+½ и −N−½."""
    n = params.n
    z = int(z)
    while not -n <= z <= n:
        if z > n:
            z = 2 * n + 1 - z
        else:
            z = -2 * n - 1 - z
    return z


def preimage_offsets(params: LatticeParams, y: int, reach: int) -> np.ndarray:
    """
    Все z ∈ ℤ с ψ_N(z) = y и |z − y| ≤ reach + 2(2N+1).

    Прообразы: y + 2Mm и 2N+1−y + 2Mm, M = 2N+1.
    """
    period = 2 * params.size
    m_max = reach // period + 2
    shifts = period * np.arange(-m_max, m_max + 1)
    return np.concatenate([y + shifts, 2 * params.n + 1 - y + shifts])


def in_reservoir(params: LatticeParams, x: int, side: Side) -> bool:
    if not params.contains(x):
        raise DomainError(f"site {x} outside Λ_N")
    if side is Side.PLUS:
        return x >= params.n - params.k + 1
    return x <= -params.n + params.k - 1


def reservoir_sites(params: LatticeParams, side: Side) -> np.ndarray:
    """Сайты резервуара в порядке сканирования: I_+ от N вниз, I_− от −N вверх."""
    if side is Side.PLUS:
        return np.arange(params.n, params.n - params.k, -1)
    return np.arange(-params.n, -params.n + params.k)


def laplacian_matrix(params: LatticeParams) -> np.ndarray:
    """Плотная матрица отражающего лапласиана: строки ±N равны f(±(N−1)) − f(±N)."""
    size = params.size
    lap = np.zeros((size, size))
    idx = np.arange(size - 1)
    lap[idx, idx + 1] = 1.0
    lap[idx + 1, idx] = 1.0
    lap[np.arange(size), np.arange(size)] = -2.0
    lap[0, 0] = lap[-1, -1] = -1.0
    return lap
