"""
Стохастический движок: метки active/passive, полная динамика L_ε, меченые
частицы, статистика пар, двойственность и каплинг с независимыми блужданиями.

Часы связей агрегируются в один пуассоновский поток полной интенсивности;
тип события выбирается равномерной величиной. Реплики идут пакетами
фиксированного размера, пакет b получает поток SeedSequence(seed, (stream, b)),
поэтому результат не зависит от числа потоков.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .models import (
    CouplingState,
    DomainError,
    LabeledState,
    LatticeParams,
    MarkAttribute,
    MarkEvent,
    PairMeetingStats,
    ParticleConfig,
)

logger = logging.getLogger(__name__)

REPLICA_BATCH = 256

STREAM_FULL = 0
STREAM_LABELED = 1
STREAM_COUPLING = 2


# ---------------------------------------------------------------------------
# Потоки случайных чисел и пакеты реплик
# ---------------------------------------------------------------------------

def batch_rng(seed: int, stream: int, batch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, batch)))


def run_batches(
    worker: Callable[[int, int], object],
    replicas: int,
    threads: int = 1,
    batch_size: int = REPLICA_BATCH,
) -> list:
    """worker(b, size) для каждого пакета; результаты в порядке номеров пакетов."""
    if replicas < 1:
        raise DomainError(f"need at least one replica, got {replicas}")
    sizes = [min(batch_size, replicas - start) for start in range(0, replicas, batch_size)]
    if threads <= 1 or len(sizes) == 1:
        return [worker(b, size) for b, size in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(len(sizes)), sizes))


def _check_times(times: Sequence[float]) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise DomainError("need at least one sample time")
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise DomainError("sample times must be non-negative and non-decreasing")
    return times


# ---------------------------------------------------------------------------
# Полная динамика: перемешивание + резервуары
# ---------------------------------------------------------------------------

@dataclass
class ReservoirTally:
    """Число рождений и гибелей по репликам."""

    births: np.ndarray
    deaths: np.ndarray

    def birth_rate(self, t: float) -> float:
        return float(self.births.mean() / t) if t > 0 else 0.0

    def death_rate(self, t: float) -> float:
        return float(self.deaths.mean() / t) if t > 0 else 0.0


@dataclass
class FullProcessSample:
    """Занятости (реплика × момент × сайт) и счётчики резервуаров."""

    params: LatticeParams
    times: np.ndarray
    occupation: np.ndarray
    tally: ReservoirTally

    @property
    def replicas(self) -> int:
        return self.occupation.shape[0]

    def site_means(self, k: int = -1) -> np.ndarray:
        return self.occupation[:, k, :].mean(axis=0)

    def site_std_errors(self, k: int = -1) -> np.ndarray:
        return self.occupation[:, k, :].std(axis=0, ddof=1) / math.sqrt(self.replicas)


def _birth(occ: np.ndarray, rows: np.ndarray, params: LatticeParams) -> np.ndarray:
    """Рождение в первом пустом сайте I_+, считая от N; возвращает маску успеха."""
    size, k = params.size, params.k
    window = occ[rows, size - k:][:, ::-1] == 0
    has = window.any(axis=1)
    col = size - 1 - np.argmax(window, axis=1)
    occ[rows[has], col[has]] = 1
    return has


def _death(occ: np.ndarray, rows: np.ndarray, params: LatticeParams) -> np.ndarray:
    """Гибель первой частицы I_−, считая от −N."""
    window = occ[rows, :params.k] == 1
    has = window.any(axis=1)
    col = np.argmax(window, axis=1)
    occ[rows[has], col[has]] = 0
    return has


def _full_batch(params: LatticeParams, occ0: np.ndarray, times: np.ndarray,
                size: int, rng: np.random.Generator):
    bond_rate = params.exchange_rate
    exchange_total = bond_rate * (params.size - 1)
    reservoir = params.reservoir_rate
    total = exchange_total + 2.0 * reservoir

    occ = np.tile(occ0.astype(np.int8), (size, 1))
    births = np.zeros(size, dtype=np.int64)
    deaths = np.zeros(size, dtype=np.int64)
    out = np.empty((size, len(times), params.size), dtype=np.int8)
    clock = rng.exponential(1.0 / total, size)

    for k, s in enumerate(times):
        while True:
            idx = np.nonzero(clock <= s)[0]
            if idx.size == 0:
                break
            u = rng.random(idx.size) * total

            swap = u < exchange_total
            if swap.any():
                rows = idx[swap]
                b = np.minimum((u[swap] / bond_rate).astype(np.int64), params.size - 2)
                left = occ[rows, b].copy()
                occ[rows, b] = occ[rows, b + 1]
                occ[rows, b + 1] = left

            birth = ~swap & (u < exchange_total + reservoir)
            if birth.any():
                rows = idx[birth]
                births[rows[_birth(occ, rows, params)]] += 1

            death = ~swap & ~birth
            if death.any():
                rows = idx[death]
                deaths[rows[_death(occ, rows, params)]] += 1

            clock[idx] += rng.exponential(1.0 / total, idx.size)
        out[:, k] = occ
    return out, births, deaths


def sample_full_process(
    eta0: ParticleConfig,
    times: Sequence[float],
    replicas: int,
    seed: int,
    threads: int = 1,
    batch_size: int = REPLICA_BATCH,
) -> FullProcessSample:
    """Независимые реплики L_ε = ε⁻²L₀ + ε⁻¹L_b из η₀, снимки в моменты times."""
    params = eta0.params
    times = _check_times(times)

    def worker(b: int, size: int):
        return _full_batch(params, eta0.occupation, times, size, batch_rng(seed, STREAM_FULL, b))

    parts = run_batches(worker, replicas, threads, batch_size)
    occupation = np.concatenate([p[0] for p in parts])
    tally = ReservoirTally(np.concatenate([p[1] for p in parts]),
                           np.concatenate([p[2] for p in parts]))
    logger.debug("full process N=%d j=%g: %d replicas, %d times", params.n, params.j,
                 replicas, len(times))
    return FullProcessSample(params, times, occupation, tally)


def run_full_process(eta0: ParticleConfig, times: Sequence[float], seed: int) -> list[ParticleConfig]:
    """Одна траектория: конфигурации в моменты times."""
    sample = sample_full_process(eta0, times, replicas=1, seed=seed)
    return [ParticleConfig(eta0.params, sample.occupation[0, k]) for k in range(len(sample.times))]


# ---------------------------------------------------------------------------
# Меченые частицы на метках active/passive
# ---------------------------------------------------------------------------

class _LabeledBatch:
    """
    Пакет меченых процессов перемешивания.

    Каждая частица несёт два слота (связь справа и слева) интенсивности ε⁻²;
    левый слот пуст, если слева сидит другая частица, так что каждая связь
    у частиц получает ровно одну пуассоновскую ленту меток. Связи {−N−1, −N}
    и {N, N+1} участвуют, но для перемешивания инертны.
    """

    def __init__(self, params: LatticeParams, start: Sequence[int], size: int,
                 rng: np.random.Generator, track_pair: bool = False,
                 stop_at_first_mark: bool = False, record: Optional[list] = None):
        self.params = params
        self.n_particles = len(start)
        self.rng = rng
        self.total = 2 * self.n_particles * params.n * params.n
        self.pos = np.tile(np.asarray(start, dtype=np.int64), (size, 1))
        self.clock = rng.exponential(1.0 / self.total, size)
        self.track_pair = track_pair
        self.stop_at_first_mark = stop_at_first_mark
        self.record = record
        self.stopped = np.zeros(size, dtype=bool)
        self.tau = np.full(size, np.inf)
        self.n_marks = np.zeros(size, dtype=np.int64)
        self.occupation = np.zeros(size)
        self.last = np.zeros(size)

    def _adjacent(self, rows) -> np.ndarray:
        return np.abs(self.pos[rows, 0] - self.pos[rows, 1]) == 1

    def run_until(self, s: float) -> None:
        n = self.params.n
        while True:
            idx = np.nonzero((self.clock <= s) & ~self.stopped)[0]
            if idx.size == 0:
                break
            times = self.clock[idx]
            if self.track_pair:
                adj = self._adjacent(idx)
                self.occupation[idx] += (times - self.last[idx]) * adj
                self.last[idx] = times

            slot = self.rng.integers(0, 2 * self.n_particles, idx.size)
            active = self.rng.random(idx.size) < 0.5
            label = slot // 2
            right = slot % 2 == 0
            pos = self.pos[idx]
            x = pos[np.arange(idx.size), label]
            bond = np.where(right, x, x - 1)
            blocked = ~right & np.any(pos == (x - 1)[:, None], axis=1)
            real = ~blocked

            if self.track_pair:
                low = np.minimum(pos[:, 0], pos[:, 1])
                between = real & adj & (bond == low)
                first = between & np.isinf(self.tau[idx])
                self.tau[idx[first]] = times[first]
                self.n_marks[idx[between]] += 1
                if self.stop_at_first_mark:
                    self.stopped[idx[between]] = True

            if self.record is not None:
                for r in np.nonzero(real)[0]:
                    attribute = MarkAttribute.ACTIVE if active[r] else MarkAttribute.PASSIVE
                    self.record.append(MarkEvent(float(times[r]), int(bond[r]), attribute))

            move = real & active & (bond >= -n) & (bond <= n - 1)
            if move.any():
                rows = idx[move]
                b = bond[move][:, None]
                p = self.pos[rows]
                self.pos[rows] = np.where(p == b, p + 1, np.where(p == b + 1, p - 1, p))

            self.clock[idx] += self.rng.exponential(1.0 / self.total, idx.size)

        if self.track_pair:
            live = np.nonzero(~self.stopped)[0]
            self.occupation[live] += (s - self.last[live]) * self._adjacent(live)
            self.last[live] = s


def _start_positions(params: LatticeParams, state0: LabeledState) -> tuple[int, ...]:
    state0.check_inside(params)
    return state0.positions


def run_marks_stirring(
    params: LatticeParams,
    state0: LabeledState,
    t: float,
    seed: int,
) -> tuple[LabeledState, list[MarkEvent]]:
    """
    Меченое перемешивание до момента t и лента меток.

    В ленту попадают только метки на связях, у которых хотя бы один конец
    занят меченой частицей в момент метки; остальные связи из [−N−1, N]
    не разыгрываются, их метки не меняют траекторию. Связи −N−1 и N
    записываются, но инертны.
    """
    if t < 0:
        raise DomainError(f"time must be ≥ 0, got {t}")
    marks: list[MarkEvent] = []
    batch = _LabeledBatch(params, _start_positions(params, state0), 1,
                          batch_rng(seed, STREAM_LABELED, 0), record=marks)
    batch.run_until(t)
    return LabeledState(tuple(int(x) for x in batch.pos[0])), marks


def sample_labeled(
    params: LatticeParams,
    state0: LabeledState,
    t: float,
    replicas: int,
    seed: int,
    threads: int = 1,
) -> np.ndarray:
    """Положения меченых частиц в момент t, массив (реплика × метка)."""
    start = _start_positions(params, state0)

    def worker(b: int, size: int):
        batch = _LabeledBatch(params, start, size, batch_rng(seed, STREAM_LABELED, b))
        batch.run_until(t)
        return batch.pos

    return np.concatenate(run_batches(worker, replicas, threads))


def labeled_occupation(params: LatticeParams, positions: np.ndarray) -> np.ndarray:
    """Частоты занятости сайтов по выборке положений меченых частиц."""
    counts = np.zeros(params.size)
    np.add.at(counts, positions.ravel() + params.n, 1.0)
    return counts / positions.shape[0]


# ---------------------------------------------------------------------------
# Статистика пар: τ, N, время соседства
# ---------------------------------------------------------------------------

@dataclass
class PairStatsResult:
    """Выборка по репликам; τ = inf означает цензуру на горизонте."""

    params: LatticeParams
    horizon: float
    tau: np.ndarray
    n_marks: np.ndarray
    occupation: np.ndarray
    stopped_at_first_mark: bool = False

    def stats(self) -> list[PairMeetingStats]:
        return [PairMeetingStats(float(a), int(b), float(c), self.horizon)
                for a, b, c in zip(self.tau, self.n_marks, self.occupation)]

    @property
    def replicas(self) -> int:
        return len(self.tau)


def pair_stats(
    params: LatticeParams,
    x1: int,
    x2: int,
    t: float,
    replicas: int,
    seed: int,
    threads: int = 1,
    stop_at_first_mark: bool = False,
    spectators: Sequence[int] = (),
) -> PairStatsResult:
    """
    τ_{x1,x2}, N_{x1,x2,t} и мера 𝒯_{x1,x2,t} по репликам.

    stop_at_first_mark обрывает реплику на τ: достаточно для кривой выживания.
    """
    if x1 == x2:
        raise DomainError("pair statistics need x1 ≠ x2")
    start = (int(x1), int(x2), *(int(x) for x in spectators))
    state0 = LabeledState(start)
    start = _start_positions(params, state0)

    def worker(b: int, size: int):
        batch = _LabeledBatch(params, start, size, batch_rng(seed, STREAM_LABELED, b),
                              track_pair=True, stop_at_first_mark=stop_at_first_mark)
        batch.run_until(t)
        return batch.tau, batch.n_marks, batch.occupation

    parts = run_batches(worker, replicas, threads)
    return PairStatsResult(
        params=params,
        horizon=float(t),
        tau=np.concatenate([p[0] for p in parts]),
        n_marks=np.concatenate([p[1] for p in parts]),
        occupation=np.concatenate([p[2] for p in parts]),
        stopped_at_first_mark=stop_at_first_mark,
    )


def survival_curve(result: PairStatsResult, grid: Iterable[float]) -> np.ndarray:
    """P[τ ≥ s] на сетке s ≤ горизонта."""
    grid = np.asarray(list(grid), dtype=float)
    if np.any(grid > result.horizon * (1 + 1e-12)):
        raise DomainError("survival grid extends past the simulated horizon")
    return np.array([(result.tau >= s).mean() for s in grid])


def log_grid(lam_min: float, lam_max: float, points: int, params: LatticeParams) -> np.ndarray:
    """Моменты s с ε⁻²s равномерно по логарифму в [lam_min, lam_max]."""
    return np.geomspace(lam_min, lam_max, points) / (params.n * params.n)


def survival_slope(result: PairStatsResult, lam_min: float = 1e2, lam_max: float = 1e4,
                   points: int = 12) -> float:
    """Наклон log P[τ ≥ s] против log ε⁻²s."""
    grid = log_grid(lam_min, lam_max, points, result.params)
    probs = survival_curve(result, grid)
    keep = probs > 0
    if keep.sum() < 2:
        raise DomainError("survival curve vanishes on the fit window; increase replicas")
    lams = grid * result.params.n ** 2
    return float(np.polyfit(np.log(lams[keep]), np.log(probs[keep]), 1)[0])


def mark_tail_frequency(result: PairStatsResult, zeta: float = 0.1) -> float:
    """Доля реплик с N_{x1,x2,t} ≥ (ε⁻²t)^{1/2+ζ}."""
    if result.stopped_at_first_mark:
        raise DomainError("mark counts are truncated when replicas stop at the first mark")
    lam = result.params.n ** 2 * result.horizon
    return float((result.n_marks >= lam ** (0.5 + zeta)).mean())


# ---------------------------------------------------------------------------
# Двойственность и антисимметрия
# ---------------------------------------------------------------------------

@dataclass
class DualityResult:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def z(self) -> float:
        joint = math.hypot(self.lhs_se, self.rhs_se)
        if joint == 0:
            return 0.0 if self.lhs == self.rhs else math.inf
        return (self.lhs - self.rhs) / joint


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


def duality_check(
    sites: Sequence[int],
    eta0: ParticleConfig,
    t: float,
    replicas: int,
    seed: int,
    threads: int = 1,
) -> DualityResult:
    """
    lhs = E[Π_{x∈X} η(x,t) | η₀] по полной динамике при j = 0;
    rhs = E[Π_{x∈X(t)} η₀(x) | X(0) = X] по меченому перемешиванию |X| частиц.
    """
    params = eta0.params.with_j(0.0)
    sites = tuple(int(x) for x in sites)
    if not sites:
        return DualityResult(1.0, 0.0, 1.0, 0.0)
    stirring = ParticleConfig(params, eta0.occupation)

    forward = sample_full_process(stirring, [t], replicas, seed, threads)
    cols = [params.index(x) for x in sites]
    lhs = np.prod(forward.occupation[:, 0, cols], axis=1)

    dual = sample_labeled(params, LabeledState(sites), t, replicas, seed, threads)
    rhs = np.prod(eta0.occupation[dual + params.n], axis=1)

    lhs_mean, lhs_se = _mean_se(lhs)
    rhs_mean, rhs_se = _mean_se(rhs)
    return DualityResult(lhs_mean, lhs_se, rhs_mean, rhs_se)


@dataclass
class AntisymmetryResult:
    mean: float
    std_error: float

    @property
    def z(self) -> float:
        if self.std_error == 0:
            return 0.0 if self.mean == 0 else math.inf
        return self.mean / self.std_error


def sign_difference(positions: np.ndarray) -> np.ndarray:
    """f(x̄) = sign(x₁ − x₂), антисимметрична по первым двум меткам."""
    return np.sign(positions[:, 0] - positions[:, 1]).astype(float)


def antisymmetry_check(
    params: LatticeParams,
    state0: LabeledState,
    s: float,
    t: float,
    f: Callable[[np.ndarray], np.ndarray],
    replicas: int,
    seed: int,
    threads: int = 1,
) -> AntisymmetryResult:
    """Оценка E[1_{τ₁₂ ≤ s} f(x̄(t))]; f векторизована по строкам (реплика × метка)."""
    if not 0 < s < t:
        raise DomainError(f"need 0 < s < t, got s={s}, t={t}")
    if state0.n < 2:
        raise DomainError("antisymmetry needs at least two labeled particles")
    start = _start_positions(params, state0)

    def worker(b: int, size: int):
        batch = _LabeledBatch(params, start, size, batch_rng(seed, STREAM_LABELED, b),
                              track_pair=True)
        batch.run_until(t)
        return (batch.tau <= s) * np.asarray(f(batch.pos), dtype=float)

    values = np.concatenate(run_batches(worker, replicas, threads))
    return AntisymmetryResult(*_mean_se(values))


# ---------------------------------------------------------------------------
# Каплинг перемешивания с независимыми блужданиями
# ---------------------------------------------------------------------------

@dataclass
class CouplingRun:
    """Снимки каплинга и моменты попыток прыжков x⁰ по меткам и направлениям."""

    states: list[CouplingState]
    attempts: dict[tuple[int, str], list[float]] = field(default_factory=dict)
    suppressed: int = 0
    top_identity: bool = True


def _check_priority(priority: Sequence[int], n: int) -> tuple[int, ...]:
    priority = tuple(int(p) for p in priority)
    if sorted(priority) != list(range(n)):
        raise DomainError(f"priority must be a permutation of 0..{n - 1}, got {priority}")
    return priority


def _coupling_replica(params: LatticeParams, start: tuple[int, ...], priority: tuple[int, ...],
                      times: np.ndarray, rng: np.random.Generator) -> CouplingRun:
    n = params.n
    count = len(start)
    x = list(start)
    x0 = list(start)
    y = list(start)
    top = priority.index(0)
    total = 2 * count * n * n
    attempts: dict[tuple[int, str], list[float]] = {
        (i, d): [] for i in range(count) for d in ("r", "l")
    }
    run = CouplingRun(states=[], attempts=attempts)

    def attempt(k: int, d: int, time: float) -> None:
        attempts[(k, "r" if d > 0 else "l")].append(time)
        y[k] = x0[k] + d
        if -n <= y[k] <= n:
            x0[k] = y[k]
        else:
            run.suppressed += 1
        y[k] = x0[k]

    clock = rng.exponential(1.0 / total)
    for s in times:
        while clock <= s:
            slot = int(rng.integers(0, 2 * count))
            active = rng.random() < 0.5
            i, right = slot // 2, slot % 2 == 0
            bond = x[i] if right else x[i] - 1
            if right or (x[i] - 1) not in x:
                members = [k for k in range(count) if x[k] in (bond, bond + 1)]
                if len(members) == 1:
                    if active:
                        d = 1 if x[i] == bond else -1
                        if -n <= bond <= n - 1:
                            x[i] += d
                        attempt(i, d, clock)
                else:
                    a, b = members
                    hi, lo = (a, b) if priority[a] < priority[b] else (b, a)
                    gap = x[lo] - x[hi]
                    if active:
                        attempt(hi, gap, clock)
                        x[a], x[b] = x[b], x[a]
                    else:
                        attempt(lo, -gap, clock)
                if x[top] != x0[top]:
                    run.top_identity = False
            clock += rng.exponential(1.0 / total)
        run.states.append(CouplingState(
            time=float(s),
            stirring=LabeledState(tuple(x)),
            independent=LabeledState(tuple(x0), exclusive=False),
            auxiliary=LabeledState(tuple(y), exclusive=False),
            priority=priority,
        ))
    return run


def run_coupling(
    params: LatticeParams,
    state0: LabeledState,
    priority: Sequence[int],
    t: float,
    seed: int,
    sample_times: Optional[Sequence[float]] = None,
) -> CouplingRun:
    """Каплинг с x̄(0) = x̄⁰(0); при σ(i) < σ(j) приоритет у i."""
    start = _start_positions(params, state0)
    priority = _check_priority(priority, state0.n)
    times = _check_times(sample_times if sample_times is not None else [t])
    if times[-1] > t + 1e-12:
        raise DomainError("sample times exceed the horizon")
    return _coupling_replica(params, start, priority, times, batch_rng(seed, STREAM_COUPLING, 0))


@dataclass
class CouplingSample:
    """Финальные положения по репликам и флаги тождества для σ-первой метки."""

    params: LatticeParams
    horizon: float
    priority: tuple[int, ...]
    stirring: np.ndarray
    independent: np.ndarray
    top_identity: np.ndarray

    @property
    def lowest_priority(self) -> int:
        return self.priority.index(len(self.priority) - 1)


def sample_coupling(
    params: LatticeParams,
    state0: LabeledState,
    priority: Sequence[int],
    t: float,
    replicas: int,
    seed: int,
    threads: int = 1,
    batch_size: int = REPLICA_BATCH,
) -> CouplingSample:
    start = _start_positions(params, state0)
    priority = _check_priority(priority, state0.n)
    times = np.array([float(t)])

    def worker(b: int, size: int):
        rng = batch_rng(seed, STREAM_COUPLING, b)
        runs = [_coupling_replica(params, start, priority, times, rng) for _ in range(size)]
        return (np.array([r.states[-1].stirring.positions for r in runs]),
                np.array([r.states[-1].independent.positions for r in runs]),
                np.array([r.top_identity for r in runs]))

    parts = run_batches(worker, replicas, threads, batch_size)
    return CouplingSample(
        params=params,
        horizon=float(t),
        priority=priority,
        stirring=np.concatenate([p[0] for p in parts]),
        independent=np.concatenate([p[1] for p in parts]),
        top_identity=np.concatenate([p[2] for p in parts]),
    )


def deviation_frequency(sample: CouplingSample, zeta: float = 0.05,
                        label: Optional[int] = None) -> float:
    """Доля реплик с |x_ℓ(t) − x⁰_ℓ(t)| ≥ (ε⁻²t)^{1/4+ζ} (по умолчанию ℓ последний в σ)."""
    label = sample.lowest_priority if label is None else label
    lam = sample.params.n ** 2 * sample.horizon
    gap = np.abs(sample.stirring[:, label] - sample.independent[:, label])
    return float((gap >= lam ** (0.25 + zeta)).mean())
