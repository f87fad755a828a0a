"""
Модели данных процесса перемешивания с граничными резервуарами.

Реализует структуры:
- Решётка Λ_N = [−N, N], резервуары I_± и параметры (N, ε, K, j)
- Конфигурация частиц η ∈ {0,1}^Λ_N
- Профили ρ_ε(x,t), граничные следы u_±(t), макро-поле ρ(r,t)
- Меченые частицы, метки active/passive, каплинг
- Таблицы v-функций и их оценки
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np


# ---------------------------------------------------------------------------
# Ошибки
# ---------------------------------------------------------------------------

class StirringError(Exception):
    """Корень иерархии ошибок пакета."""


class DomainError(StirringError, ValueError):
    """Нарушено предусловие операции (сайт вне решётки, t ≤ 0, K > N …)."""


class ConvergenceError(StirringError, RuntimeError):
    """Численная схема не сошлась: шаг выродился или Пикар не сжал."""


# ---------------------------------------------------------------------------
# Резервуары и метки
# ---------------------------------------------------------------------------

class Side(Enum):
    """Сторона решётки: правый резервуар рождает, левый уничтожает."""

    PLUS = "+"
    MINUS = "-"

    @property
    def sign(self) -> int:
        return 1 if self is Side.PLUS else -1

    @property
    def other(self) -> "Side":
        return Side.MINUS if self is Side.PLUS else Side.PLUS


SIDE_META: dict[str, dict[str, str]] = {
    Side.PLUS.value: {
        "name_ru": "Правый резервуар I_+",
        "interval": "[N−K+1, N]",
        "action": "рождение в первом пустом сайте, считая от N",
    },
    Side.MINUS.value: {
        "name_ru": "Левый резервуар I_−",
        "interval": "[−N, −N+K−1]",
        "action": "гибель первой частицы, считая от −N",
    },
}


class MarkAttribute(Enum):
    """Атрибут пуассоновской метки на связи {x, x+1}."""

    ACTIVE = "active"     # обмен содержимым связи
    PASSIVE = "passive"   # инертная метка


# ---------------------------------------------------------------------------
# Геометрия
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeParams:
    """Геометрия и скорости: полуширина N, ширина резервуара K, скорость j."""

    n: int
    k: int = 1
    j: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"N must be a positive integer, got {self.n}")
        if int(self.k) != self.k or self.k < 1 or self.k > self.n:
            raise DomainError(f"K must satisfy 1 ≤ K ≤ N, got K={self.k}, N={self.n}")
        if 2 * self.k > 2 * self.n + 1:
            raise DomainError(f"reservoirs overlap: 2K={2 * self.k} > 2N+1={2 * self.n + 1}")
        if not math.isfinite(self.j) or self.j < 0:
            raise DomainError(f"reservoir rate j must be finite and ≥ 0, got {self.j}")

    @property
    def epsilon(self) -> float:
        return 1.0 / self.n

    @property
    def size(self) -> int:
        """Число сайтов 2N+1."""
        return 2 * self.n + 1

    @property
    def exchange_rate(self) -> float:
        """Скорость обмена на одной связи, ε⁻²/2."""
        return 0.5 * self.n * self.n

    @property
    def reservoir_rate(self) -> float:
        """Скорость часов рождения (и гибели), ε⁻¹j/2."""
        return 0.5 * self.n * self.j

    def sites(self) -> np.ndarray:
        return np.arange(-self.n, self.n + 1)

    def contains(self, x: int) -> bool:
        return -self.n <= x <= self.n

    def index(self, x: int) -> int:
        """Сайт x → индекс массива x + N."""
        if not self.contains(x):
            raise DomainError(f"site {x} outside Λ_N = [{-self.n}, {self.n}]")
        return int(x) + self.n

    def with_j(self, j: float) -> "LatticeParams":
        return LatticeParams(n=self.n, k=self.k, j=j)


# ---------------------------------------------------------------------------
# Микросостояние
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ParticleConfig:
    """Конфигурация η: массив занятостей длины 2N+1, индекс i ↔ сайт i−N."""

    params: LatticeParams
    occupation: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupation, dtype=np.int8)
        if occ.shape != (self.params.size,):
            raise DomainError(
                f"configuration length {occ.shape} does not match 2N+1={self.params.size}"
            )
        if np.any((occ != 0) & (occ != 1)):
            raise DomainError("occupation numbers must be 0 or 1")
        self.occupation = occ

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParticleConfig):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.occupation, other.occupation)

    def __getitem__(self, x: int) -> int:
        return int(self.occupation[self.params.index(x)])

    @classmethod
    def from_string(cls, params: LatticeParams, text: str) -> "ParticleConfig":
        """'10101': слева направо сайты −N … N."""
        text = text.strip()
        return cls(params, np.array([int(ch) for ch in text], dtype=np.int8))

    @classmethod
    def filled(cls, params: LatticeParams, value: int = 1) -> "ParticleConfig":
        return cls(params, np.full(params.size, value, dtype=np.int8))

    @classmethod
    def alternating(cls, params: LatticeParams, start: int = 1) -> "ParticleConfig":
        occ = (np.arange(params.size) + (0 if start else 1)) % 2 == 0
        return cls(params, occ.astype(np.int8))

    @classmethod
    def step(cls, params: LatticeParams) -> "ParticleConfig":
        """Ступенька: заняты сайты x ≤ 0."""
        return cls(params, (params.sites() <= 0).astype(np.int8))

    @classmethod
    def from_sites(cls, params: LatticeParams, sites) -> "ParticleConfig":
        occ = np.zeros(params.size, dtype=np.int8)
        for x in sites:
            occ[params.index(x)] = 1
        return cls(params, occ)

    @property
    def count(self) -> int:
        return int(self.occupation.sum())

    def occupied_sites(self) -> list[int]:
        return [int(x) for x in self.params.sites()[self.occupation == 1]]

    def to_string(self) -> str:
        return "".join(str(int(v)) for v in self.occupation)

    def as_index(self) -> int:
        """Номер состояния: бит i ↔ сайт i−N."""
        return int(np.dot(self.occupation.astype(np.int64), 1 << np.arange(self.params.size)))


# ---------------------------------------------------------------------------
# Поля и ядра
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class RhoField:
    """Решение дискретного уравнения ρ_ε(·, t) на Λ_N."""

    params: LatticeParams
    time: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.params.size,):
            raise DomainError(f"profile length {self.values.shape} != 2N+1={self.params.size}")

    @classmethod
    def from_config(cls, config: ParticleConfig) -> "RhoField":
        return cls(config.params, 0.0, config.occupation.astype(float))

    @classmethod
    def constant(cls, params: LatticeParams, value: float) -> "RhoField":
        return cls(params, 0.0, np.full(params.size, float(value)))

    def __getitem__(self, x: int) -> float:
        return float(self.values[self.params.index(x)])


@dataclass(eq=False)
class KernelTable:
    """Переходные вероятности P_t(x, y) отражённого блуждания на Λ_N."""

    params: LatticeParams
    time: float
    values: np.ndarray   # (2N+1, 2N+1), строки x, столбцы y

    def __call__(self, x: int, y: int) -> float:
        return float(self.values[self.params.index(x), self.params.index(y)])

    def row_sums(self) -> np.ndarray:
        return self.values.sum(axis=1)


@dataclass(eq=False)
class ThetaKernels:
    """Тета-ядра p(t), q(t) на сетке времени."""

    grid: np.ndarray
    p: np.ndarray
    q: np.ndarray
    truncation: int


@dataclass(eq=False)
class BoundaryTrace:
    """Граничные значения u_±(t) на равномерной сетке с шагом h."""

    grid: np.ndarray
    u_plus: np.ndarray
    u_minus: np.ndarray
    residual: float = 0.0

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0]) if len(self.grid) > 1 else 0.0

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    def at(self, t: float) -> tuple[float, float]:
        """Линейная интерполяция следа в момент t."""
        return (float(np.interp(t, self.grid, self.u_plus)),
                float(np.interp(t, self.grid, self.u_minus)))


@dataclass(eq=False)
class MacroField:
    """Макроскопический профиль ρ(r, t) на сетке по [−1, 1]."""

    grid: np.ndarray
    time: float
    values: np.ndarray

    def __call__(self, r) -> np.ndarray:
        return np.interp(r, self.grid, self.values)


# ---------------------------------------------------------------------------
# Меченые частицы
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkEvent:
    """Метка: момент, связь {bond, bond+1}, атрибут."""

    time: float
    bond: int
    attribute: MarkAttribute


@dataclass(frozen=True)
class LabeledState:
    """
    Положения меченых частиц; метка i ↔ positions[i].

    exclusive=False для независимых блужданий x⁰ и вспомогательного y,
    которые могут делить сайт.
    """

    positions: tuple[int, ...]
    alive: tuple[int, ...] = ()
    exclusive: bool = True

    def __post_init__(self):
        if self.exclusive and len(set(self.positions)) != len(self.positions):
            raise DomainError(f"labeled positions must be distinct: {self.positions}")
        if not self.alive:
            object.__setattr__(self, "alive", tuple(range(len(self.positions))))

    def check_inside(self, params: LatticeParams) -> None:
        for x in self.positions:
            if not params.contains(x):
                raise DomainError(f"labeled particle at {x} outside Λ_N")

    @property
    def n(self) -> int:
        return len(self.positions)


@dataclass
class PairMeetingStats:
    """τ (первая метка при соседстве, inf при цензуре), N_{x1,x2,t}, время соседства."""

    tau: float
    n_marks: int
    occupation: float
    horizon: float


@dataclass(frozen=True)
class CouplingState:
    """Снимок каплинга: перемешивание x, независимые x⁰, вспомогательный y, приоритет σ."""

    time: float
    stirring: LabeledState
    independent: LabeledState
    auxiliary: LabeledState
    priority: tuple[int, ...]

    @property
    def discrepancy(self) -> int:
        """D(t) = Σ_i |x_i − x⁰_i|."""
        return sum(abs(a - b) for a, b in
                   zip(self.stirring.positions, self.independent.positions))


# ---------------------------------------------------------------------------
# v-функции
# ---------------------------------------------------------------------------

@dataclass
class VFunctionTable:
    """Точные v(x̄, t) для упорядоченных кортежей различных сайтов."""

    params: LatticeParams
    time: float
    values: dict[tuple[int, ...], float] = field(default_factory=dict)

    def get(self, sites) -> float:
        key = tuple(sorted(int(x) for x in sites))
        if not key:
            return 1.0
        return self.values[key]


@dataclass
class VFunctionEstimate:
    """Оценка Монте-Карло v(x̄, t) со стандартной ошибкой."""

    sites: tuple[int, ...]
    time: float
    estimate: float
    std_error: float
    replicas: int


@dataclass
class BlockAverage:
    """Блочное среднее |J|⁻¹ Σ_{y∈J}(η(y,t) − ρ_ε(y,t)), J = [x − N^a, x + N^a]."""

    center: int
    half_width: int
    value: float

    def __post_init__(self):
        if abs(self.value) > 1.0 + 1e-12:
            raise DomainError(f"block average {self.value} outside [−1, 1]")


CONFIG_NAMES = ("step", "alternating", "empty", "full")


def parse_config(params: LatticeParams, text: str) -> ParticleConfig:
    """Битовая строка длины 2N+1 или имя: step, alternating, empty, full."""
    text = text.strip().lower()
    if text == "step":
        return ParticleConfig.step(params)
    if text == "alternating":
        return ParticleConfig.alternating(params)
    if text == "empty":
        return ParticleConfig.filled(params, 0)
    if text == "full":
        return ParticleConfig.filled(params, 1)
    if set(text) <= {"0", "1"} and text:
        return ParticleConfig.from_string(params, text)
    raise DomainError(f"cannot read configuration {text!r}; use a 0/1 string or one of {CONFIG_NAMES}")


def parse_sites(text: Optional[str]) -> tuple[int, ...]:
    """'−1,1' → (−1, 1); пустая строка → ()."""
    if text is None or not text.strip():
        return ()
    try:
        return tuple(int(part) for part in text.replace(";", ",").split(",") if part.strip())
    except ValueError:
        raise DomainError(f"cannot read site list {text!r}; expected integers like '-1,1'") from None
