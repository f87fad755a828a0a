"""
Точный оракул на малых решётках: мастер-уравнение на всём {0,1}^Λ_N.

- StateSpace: нумерация 2^{2N+1} конфигураций (бит i ↔ сайт i−N)
- GeneratorMatrix: разреженная матрица скоростей, части ε⁻²L₀ и ε⁻¹L_b
- evolve_distribution: униформизация с гарантированным хвостом
- v-функции, оператор A, тождество эволюции и его интегральная форма
- неравенства Лиггетта и Анжеля для двухчастичного перемешивания
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from itertools import combinations
from typing import Iterable, Optional

import numpy as np
from scipy import linalg, sparse, stats

from .kernels import reflected_kernel_matrix
from .lattice import in_reservoir, reservoir_sites
from .models import (
    DomainError,
    LatticeParams,
    ParticleConfig,
    RhoField,
    Side,
    VFunctionTable,
)
from .pde import evolve_rho, rho_rhs

logger = logging.getLogger(__name__)

MAX_GENERATOR_N = 7
MAX_V_N = 5
MAX_IDENTITY_N = 4
UNIFORMIZATION_TOL = 1e-10
MAX_SUBSTEP_INTENSITY = 30.0
RHO_TOL = 1e-10
SHORT_STEP_TOL = 1e-15


# ---------------------------------------------------------------------------
# Пространство состояний и генератор
# ---------------------------------------------------------------------------

class StateSpace:
    """Все конфигурации Λ_N как целые числа 0 … 2^{2N+1} − 1."""

    def __init__(self, params: LatticeParams):
        self.params = params
        self.size = 1 << params.size

    def config(self, index: int) -> ParticleConfig:
        if not 0 <= index < self.size:
            raise DomainError(f"state index {index} outside [0, {self.size})")
        return ParticleConfig(self.params, self.bits[index].copy())

    def index(self, config: ParticleConfig) -> int:
        if config.params.size != self.params.size:
            raise DomainError("configuration belongs to a different lattice")
        return config.as_index()

    def index_of_sites(self, sites: Iterable[int]) -> int:
        out = 0
        for x in sites:
            out |= 1 << self.params.index(x)
        return out

    @cached_property
    def bits(self) -> np.ndarray:
        """(состояния × сайты) матрица занятостей."""
        states = np.arange(self.size, dtype=np.int64)[:, None]
        return ((states >> np.arange(self.params.size)) & 1).astype(np.int8)

    @cached_property
    def counts(self) -> np.ndarray:
        return self.bits.sum(axis=1)

    def point_mass(self, config: ParticleConfig) -> np.ndarray:
        p = np.zeros(self.size)
        p[self.index(config)] = 1.0
        return p


@dataclass
class GeneratorMatrix:
    """Q[a, b]: скорость перехода a → b; строки суммируются в ноль."""

    space: StateSpace
    exchange: sparse.csr_matrix
    boundary: sparse.csr_matrix

    @cached_property
    def total(self) -> sparse.csr_matrix:
        return (self.exchange + self.boundary).tocsr()

    @cached_property
    def uniformization_rate(self) -> float:
        return float(-self.total.diagonal().min()) if self.space.size else 0.0

    @cached_property
    def jump_transposed(self) -> sparse.csr_matrix:
        """(I + Q/Λ)ᵀ: шаг вложенной цепи для векторов-столбцов распределений."""
        rate = self.uniformization_rate
        jump = sparse.identity(self.space.size, format="csr") + self.total / rate
        return jump.T.tocsr()

    def forward(self, p: np.ndarray) -> np.ndarray:
        """dp/dt = Qᵀp."""
        return self.total.T @ p


def _rate_matrix(size: int, sources, targets, rates) -> sparse.csr_matrix:
    sources = np.concatenate(sources) if sources else np.zeros(0, dtype=np.int64)
    targets = np.concatenate(targets) if targets else np.zeros(0, dtype=np.int64)
    rates = np.concatenate(rates) if rates else np.zeros(0)
    off = sparse.coo_matrix((rates, (sources, targets)), shape=(size, size)).tocsr()
    out_rate = np.asarray(off.sum(axis=1)).ravel()
    return (off - sparse.diags(out_rate)).tocsr()


@lru_cache(maxsize=16)
def build_generator(params: LatticeParams) -> GeneratorMatrix:
    """Матрица L_ε на всём пространстве состояний (N ≤ 7)."""
    if params.n > MAX_GENERATOR_N:
        raise DomainError(
            f"exact generator limited to N ≤ {MAX_GENERATOR_N} (2^{params.size} states requested)"
        )
    space = StateSpace(params)
    states = np.arange(space.size, dtype=np.int64)
    bits = space.bits

    src, dst, rate = [], [], []
    for i in range(params.size - 1):
        differ = bits[:, i] != bits[:, i + 1]
        s = states[differ]
        src.append(s)
        dst.append(s ^ ((1 << i) | (1 << (i + 1))))
        rate.append(np.full(len(s), params.exchange_rate))
    exchange = _rate_matrix(space.size, src, dst, rate)

    src, dst, rate = [], [], []
    if params.j > 0:
        pending = np.ones(space.size, dtype=bool)
        for x in reservoir_sites(params, Side.PLUS):
            i = params.index(int(x))
            hit = pending & (bits[:, i] == 0)
            src.append(states[hit])
            dst.append(states[hit] | (1 << i))
            pending &= ~hit
        pending = np.ones(space.size, dtype=bool)
        for x in reservoir_sites(params, Side.MINUS):
            i = params.index(int(x))
            hit = pending & (bits[:, i] == 1)
            src.append(states[hit])
            dst.append(states[hit] & ~(1 << i))
            pending &= ~hit
        rate = [np.full(len(s), params.reservoir_rate) for s in src]
    boundary = _rate_matrix(space.size, src, dst, rate)

    logger.debug("generator N=%d: %d states, %d transitions", params.n, space.size,
                 exchange.nnz + boundary.nnz)
    return GeneratorMatrix(space, exchange, boundary)


# ---------------------------------------------------------------------------
# Униформизация
# ---------------------------------------------------------------------------

def _poisson_cutoff(mu: float, tail: float) -> int:
    k = stats.poisson.isf(tail, mu)
    if not np.isfinite(k):
        k = mu + 20.0 * math.sqrt(mu) + 50.0
    return int(k) + 1


def evolve_distribution(
    generator: GeneratorMatrix,
    p0: np.ndarray,
    t: float,
    tol: float = UNIFORMIZATION_TOL,
) -> np.ndarray:
    """
    exp(tQ)ᵀ p0 суммой Σ_m Pois(Λt; m)(I + Q/Λ)^m.

    Интервал режется на подшаги с Λ·dt ≤ 30; хвост Пуассона на каждом
    подшаге отсекается на уровне tol / (число подшагов).
    """
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (generator.space.size,):
        raise DomainError(f"distribution length {p0.shape} != {generator.space.size}")
    if abs(p0.sum() - 1.0) > 1e-10 or p0.min() < -1e-15:
        raise DomainError("initial vector is not a probability distribution")
    if t < 0:
        raise DomainError(f"time must be ≥ 0, got {t}")
    rate = generator.uniformization_rate
    if t == 0 or rate == 0:
        return p0.copy()

    substeps = max(1, int(math.ceil(rate * t / MAX_SUBSTEP_INTENSITY)))
    mu = rate * t / substeps
    k_max = _poisson_cutoff(mu, tol / substeps)
    weights = stats.poisson.pmf(np.arange(k_max + 1), mu)
    jump = generator.jump_transposed

    p = p0
    for _ in range(substeps):
        term = p
        acc = weights[0] * term
        for m in range(1, k_max + 1):
            term = jump @ term
            acc = acc + weights[m] * term
        p = acc
    return p


def stationary_sector(params: LatticeParams, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Стационарный вектор перемешивания (j=0) на секторе с count частицами."""
    generator = build_generator(params.with_j(0.0))
    sector = np.nonzero(generator.space.counts == count)[0]
    if len(sector) == 0:
        raise DomainError(f"no configurations with {count} particles")
    block = generator.total[sector][:, sector].toarray()
    null = linalg.null_space(block.T)
    if null.shape[1] != 1:
        raise DomainError(f"sector with {count} particles is not irreducible")
    vector = np.abs(null[:, 0])
    return sector, vector / vector.sum()


# ---------------------------------------------------------------------------
# v-функции
# ---------------------------------------------------------------------------

class _Snapshot:
    """Точное распределение и ρ_ε в один момент времени."""

    def __init__(self, space: StateSpace, p: np.ndarray, rho: np.ndarray, time: float):
        self.space = space
        self.p = p
        self.rho = rho
        self.time = time
        self.centered = space.bits - rho[None, :]

    def v(self, sites: Iterable[int]) -> float:
        cols = [self.space.params.index(x) for x in sites]
        if not cols:
            return 1.0
        return float(self.p @ np.prod(self.centered[:, cols], axis=1))

    def table(self, max_order: int) -> VFunctionTable:
        params = self.space.params
        values = {}
        for order in range(1, max_order + 1):
            for key in combinations(params.sites().tolist(), order):
                values[key] = self.v(key)
        return VFunctionTable(params, self.time, values)


def _snapshot(params: LatticeParams, eta0: ParticleConfig, t: float) -> _Snapshot:
    generator = build_generator(params)
    p = evolve_distribution(generator, generator.space.point_mass(eta0), t)
    rho = evolve_rho(RhoField.from_config(eta0), t, tol=RHO_TOL).values
    return _Snapshot(generator.space, p, rho, t)


def _check_sites(params: LatticeParams, sites) -> tuple[int, ...]:
    sites = tuple(int(x) for x in sites)
    if len(set(sites)) != len(sites):
        raise DomainError(f"v-functions need distinct sites, got {sites}")
    for x in sites:
        params.index(x)
    return sites


def exact_v(params: LatticeParams, sites, t: float, eta0: ParticleConfig) -> float:
    """v(x̄, t) = E[Π(η(x_i,t) − ρ_ε(x_i,t))] суммой по точному распределению."""
    if params.n > MAX_V_N:
        raise DomainError(f"exact v-functions limited to N ≤ {MAX_V_N}")
    sites = _check_sites(params, sites)
    return _snapshot(params, eta0, t).v(sites)


def v_table(params: LatticeParams, eta0: ParticleConfig, t: float, max_order: int = 2) -> VFunctionTable:
    """Все v(X, t) с |X| ≤ max_order (ключи: отсортированные кортежи)."""
    if params.n > MAX_V_N:
        raise DomainError(f"exact v-functions limited to N ≤ {MAX_V_N}")
    if not 1 <= max_order <= 4:
        raise DomainError(f"max_order must be in 1..4, got {max_order}")
    return _snapshot(params, eta0, t).table(max_order)


def _without(sites: tuple[int, ...], *drop: int) -> tuple[int, ...]:
    return tuple(x for x in sites if x not in drop)


def a_operator(vtab: VFunctionTable, rho: RhoField, sites) -> float:
    """
    (Av)(X) = Σ_{x,y∈X, |x−y|=1} [ρ(x)−ρ(y)][v(X∖x) − v(X∖y)] − ½[ρ(x)−ρ(y)]² v(X∖{x,y}).

    Пары неупорядоченные: каждая связь внутри X считается один раз.
    """
    sites = tuple(sorted(int(x) for x in sites))
    if len(sites) < 2:
        return 0.0
    members = set(sites)
    total = 0.0
    for x in sites:
        y = x + 1
        if y not in members:
            continue
        grad = rho[x] - rho[y]
        total += grad * (vtab.get(_without(sites, x)) - vtab.get(_without(sites, y)))
        total -= 0.5 * grad * grad * vtab.get(_without(sites, x, y))
    return total


def stirring_action(vtab: VFunctionTable, sites) -> float:
    """(L₀v)(X) = ½Σ_{связи b ⊂ Λ_N} [v(X^b) − v(X)], X^b: X с обменом концов b."""
    params = vtab.params
    sites = tuple(sorted(int(x) for x in sites))
    members = set(sites)
    base = vtab.get(sites)
    total = 0.0
    for x in range(-params.n, params.n):
        a, b = x in members, (x + 1) in members
        if a == b:
            continue
        moved = tuple(x + 1 if s == x else x if s == x + 1 else s for s in sites)
        total += vtab.get(moved) - base
    return 0.5 * total


# ---------------------------------------------------------------------------
# Тождество эволюции
# ---------------------------------------------------------------------------

class Derivative(Enum):
    RICHARDSON = "richardson"   # центральные разности на h и h/2
    ANALYTIC = "analytic"       # поток мастер-уравнения


def _check_interior(params: LatticeParams, sites) -> tuple[int, ...]:
    sites = _check_sites(params, sites)
    for x in sites:
        if in_reservoir(params, x, Side.PLUS) or in_reservoir(params, x, Side.MINUS):
            raise DomainError(
                f"site {x} lies in a reservoir; the boundary operator is not implemented"
            )
    return sites


def _analytic_derivative(params: LatticeParams, snap: _Snapshot, sites) -> float:
    """d/dt v = Σ_s (Qᵀp)(s) Π(η−ρ) − Σ_{x∈X} ρ̇(x) v(X∖x)."""
    generator = build_generator(params)
    flux = generator.forward(snap.p)
    cols = [params.index(x) for x in sites]
    first = float(flux @ np.prod(snap.centered[:, cols], axis=1))
    rho_dot = rho_rhs(params, snap.rho)
    second = sum(rho_dot[params.index(x)] * snap.v(_without(sites, x)) for x in sites)
    return first - second


def _advance(generator: GeneratorMatrix, snap: _Snapshot, dt: float) -> _Snapshot:
    params = generator.space.params
    p = evolve_distribution(generator, snap.p, dt, tol=SHORT_STEP_TOL)
    rho = evolve_rho(RhoField(params, snap.time, snap.rho), dt, tol=1e-12).values
    return _Snapshot(generator.space, p, rho, snap.time + dt)


def _richardson_derivative(params: LatticeParams, eta0: ParticleConfig, sites, t: float, h: float) -> float:
    generator = build_generator(params)
    s0 = _snapshot(params, eta0, t - h)
    s1 = _advance(generator, s0, 0.5 * h)
    s2 = _advance(generator, s1, 0.5 * h)
    s3 = _advance(generator, s2, 0.5 * h)
    s4 = _advance(generator, s3, 0.5 * h)
    coarse = (s4.v(sites) - s0.v(sites)) / (2.0 * h)
    fine = (s3.v(sites) - s1.v(sites)) / h
    return (4.0 * fine - coarse) / 3.0


def check_evolution_identity(
    params: LatticeParams,
    sites,
    t: float,
    eta0: ParticleConfig,
    dt: float = 1e-5,
    derivative: Derivative = Derivative.RICHARDSON,
) -> float:
    """
    |d/dt v(X,t) − ε⁻²(L₀v + Av)(X,t)| для X вне резервуаров.

    Вне I_± граничная часть тождества равна нулю, поэтому невязка измеряет
    только точность производной и оракула.
    """
    if params.n > MAX_IDENTITY_N:
        raise DomainError(f"evolution identity check limited to N ≤ {MAX_IDENTITY_N}")
    sites = _check_interior(params, sites)
    if derivative is Derivative.RICHARDSON and t <= dt:
        raise DomainError(f"need t > dt for centered differences, got t={t}, dt={dt}")

    snap = _snapshot(params, eta0, t)
    vtab = snap.table(len(sites))
    rho = RhoField(params, t, snap.rho)
    rhs = params.n * params.n * (stirring_action(vtab, sites) + a_operator(vtab, rho, sites))

    if derivative is Derivative.ANALYTIC:
        lhs = _analytic_derivative(params, snap, sites)
    else:
        lhs = _richardson_derivative(params, eta0, sites, t, dt)
    residual = abs(lhs - rhs)
    logger.debug("identity X=%s t=%g: dv/dt=%.6e rhs=%.6e residual=%.2e", sites, t, lhs, rhs, residual)
    return residual


def integral_form_residual(
    params: LatticeParams,
    sites,
    t: float,
    eta0: ParticleConfig,
    nodes: int = 24,
) -> float:
    """
    |v(X,t) − ∫₀ᵗ Σ_Y P(X →s Y)(Cv)(Y, t−s) ds|, Cv = d/dt v − ε⁻²L₀v.

    P(X →s Y): перемешивание множества X; v(·, 0) = 0 для детерминированного η₀.
    """
    if params.n > MAX_IDENTITY_N:
        raise DomainError(f"integral form check limited to N ≤ {MAX_IDENTITY_N}")
    sites = _check_sites(params, sites)
    order = len(sites)
    stirring = build_generator(params.with_j(0.0))
    start = np.zeros(stirring.space.size)
    start[stirring.space.index_of_sites(sites)] = 1.0
    targets = list(combinations(params.sites().tolist(), order))
    target_index = [stirring.space.index_of_sites(y) for y in targets]

    x, w = np.polynomial.legendre.leggauss(nodes)
    s_nodes = 0.5 * t * (x + 1.0)
    weights = 0.5 * t * w

    integral = 0.0
    for s, weight in zip(s_nodes, weights):
        moved = evolve_distribution(stirring, start, s)
        snap = _snapshot(params, eta0, t - s)
        vtab = snap.table(order)
        forcing = 0.0
        for y, idx in zip(targets, target_index):
            if moved[idx] == 0.0:
                continue
            cv = _analytic_derivative(params, snap, y) - params.n ** 2 * stirring_action(vtab, y)
            forcing += moved[idx] * cv
        integral += weight * forcing

    value = _snapshot(params, eta0, t).v(sites)
    return abs(value - integral)


# ---------------------------------------------------------------------------
# Двойственность и корреляционные неравенства
# ---------------------------------------------------------------------------

def duality_exact(params: LatticeParams, sites, eta0: ParticleConfig, t: float) -> tuple[float, float]:
    """
    (E[Π_{x∈X} η(x,t) | η₀], E[Π_{x∈X(t)} η₀(x) | X(0) = X]) для перемешивания.

    Обе стороны решают одно и то же мастер-уравнение (j игнорируется).
    """
    sites = _check_sites(params, sites)
    stirring = build_generator(params.with_j(0.0))
    space = stirring.space
    forward = evolve_distribution(stirring, space.point_mass(eta0), t)
    cols = [params.index(x) for x in sites]
    lhs = float(forward @ np.prod(space.bits[:, cols], axis=1)) if cols else 1.0

    start = np.zeros(space.size)
    start[space.index_of_sites(sites)] = 1.0
    dual = evolve_distribution(stirring, start, t)
    mask = space.bits.astype(bool)
    eta = eta0.occupation.astype(bool)
    contained = ~np.any(mask & ~eta[None, :], axis=1)
    rhs = float(dual[contained].sum())
    return lhs, rhs


def _set_process(params: LatticeParams, sites, t: float) -> tuple[StateSpace, np.ndarray]:
    stirring = build_generator(params.with_j(0.0))
    start = np.zeros(stirring.space.size)
    start[stirring.space.index_of_sites(sites)] = 1.0
    return stirring.space, evolve_distribution(stirring, start, t)


def liggett_gap(params: LatticeParams, y1: int, y2: int, t: float) -> float:
    """
    Σ_x P_{y1}[x₁ ∈ {x,x+1}]·P_{y2}[x₂ ∈ {x,x+1}] − P_{y1,y2}[|x₁ − x₂| = 1] (≥ 0).
    """
    _check_sites(params, (y1, y2))
    space, dist = _set_process(params, (y1, y2), t)
    bits = space.bits
    adjacent = np.any(bits[:, :-1] & bits[:, 1:], axis=1) & (space.counts == 2)
    lhs = float(dist[adjacent].sum())

    kernel = reflected_kernel_matrix(params, t)
    a = kernel.values[params.index(y1)]
    b = kernel.values[params.index(y2)]
    rhs = float(np.sum((a[:-1] + a[1:]) * (b[:-1] + b[1:])))
    return rhs - lhs


def andjel_gap(params: LatticeParams, sites, w: Iterable[int], z: Iterable[int], t: float) -> float:
    """
    (Σ_{Y⊃W} P(X →t Y))(Σ_{Y′⊃Z} P(X →t Y′)) − P(X →t W∪Z) (≥ 0).
    """
    sites = _check_sites(params, sites)
    w, z = tuple(w), tuple(z)
    if set(w) & set(z):
        raise DomainError("W and Z must be disjoint")
    if len(w) + len(z) != len(sites):
        raise DomainError("|W ∪ Z| must equal |X|")
    space, dist = _set_process(params, sites, t)

    def superset_mass(subset) -> float:
        cols = [params.index(x) for x in subset]
        if not cols:
            return 1.0
        return float(dist[np.all(space.bits[:, cols] == 1, axis=1)].sum())

    joint = float(dist[space.index_of_sites(w + z)])
    return superset_mass(w) * superset_mass(z) - joint


def site_marginals(params: LatticeParams, eta0: ParticleConfig, t: float,
                   generator: Optional[GeneratorMatrix] = None) -> np.ndarray:
    """E[η(x, t)] для всех x точным распределением."""
    generator = generator or build_generator(params)
    p = evolve_distribution(generator, generator.space.point_mass(eta0), t)
    return p @ generator.space.bits
