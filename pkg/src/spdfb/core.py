"""Primal-dual points, power-law step schedules and weighted running averages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when vector dimensions do not match."""


def _as_vector(values) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PrimalDualPoint:
    """A pair ``(x, lam)`` with ``x`` in R^d and ``lam`` in R^k.

    Both arrays are stored read-only so a point can be shared between runs.
    """

    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vector(self.x))
        object.__setattr__(self, "lam", _as_vector(self.lam))
        if self.x.size < 1 or self.lam.size < 1:
            raise DimensionError("primal and dual dimensions must be at least 1")

    @property
    def d(self) -> int:
        return self.x.size

    @property
    def k(self) -> int:
        return self.lam.size

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.lam)))

    def norm(self) -> float:
        return float(np.sqrt(self.x @ self.x + self.lam @ self.lam))

    def __eq__(self, other):
        if not isinstance(other, PrimalDualPoint):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.lam, other.lam)

    def __repr__(self):
        return f"PrimalDualPoint(x={self.x.tolist()}, lam={self.lam.tolist()})"

    @classmethod
    def zeros(cls, d: int, k: int) -> PrimalDualPoint:
        return cls(np.zeros(d), np.zeros(k))


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``gamma_n = gamma0 * (n + offset) ** (-exponent)``.

    For ``1/2 < exponent <= 1`` the sequence is square summable but not
    summable, and consecutive ratios tend to one.
    """

    gamma0: float = 0.5
    exponent: float = 0.75
    offset: int = 0

    def __call__(self, n: int) -> float:
        return schedule_gamma(self, n)

    def gammas(self, n_max: int) -> np.ndarray:
        """Vector of ``gamma_1 .. gamma_{n_max}``."""
        n = np.arange(1, n_max + 1, dtype=float)
        return self.gamma0 * (n + self.offset) ** (-self.exponent)


def schedule_gamma(sched: StepSchedule, n: int) -> float:
    if n < 1:
        raise ValueError(f"step index must be >= 1, got {n}")
    return sched.gamma0 * float(n + sched.offset) ** (-sched.exponent)


def validate_schedule(sched: StepSchedule) -> str | None:
    """Return ``None`` when the schedule is admissible, else a violation message."""
    if not (np.isfinite(sched.gamma0) and sched.gamma0 > 0):
        return "gamma0 not positive"
    if not np.isfinite(sched.exponent) or sched.exponent <= 0.5:
        return "exponent <= 1/2: sum of gamma_n^2 diverges"
    if sched.exponent > 1:
        return "exponent > 1: sum of gamma_n converges"
    if int(sched.offset) != sched.offset or sched.offset < 0:
        return "offset not a nonnegative integer"
    return None


@dataclass(frozen=True)
class RunningAverage:
    """Weighted mean of the points fed so far, together with the total weight."""

    mean: PrimalDualPoint
    total_weight: float = 0.0

    @classmethod
    def empty(cls, d: int, k: int) -> RunningAverage:
        return cls(PrimalDualPoint.zeros(d, k), 0.0)


def average_update(avg: RunningAverage, weight: float, point: PrimalDualPoint) -> RunningAverage:
    """Fold ``point`` with ``weight`` into the running average."""
    if not weight > 0:
        raise ValueError(f"weight must be positive, got {weight}")
    if point.d != avg.mean.d or point.k != avg.mean.k:
        raise DimensionError(
            f"point dimensions ({point.d}, {point.k}) do not match average "
            f"({avg.mean.d}, {avg.mean.k})"
        )
    total = avg.total_weight + weight
    rho = weight / total
    x = avg.mean.x + rho * (point.x - avg.mean.x)
    lam = avg.mean.lam + rho * (point.lam - avg.mean.lam)
    return RunningAverage(PrimalDualPoint(x, lam), total)


@dataclass
class _Accumulator:
    """Mutable in-place twin of :func:`average_update` used by the run loop."""

    x: np.ndarray
    lam: np.ndarray
    total_weight: float = 0.0

    def add(self, weight: float, x: np.ndarray, lam: np.ndarray) -> None:
        self.total_weight += weight
        rho = weight / self.total_weight
        self.x += rho * (x - self.x)
        self.lam += rho * (lam - self.lam)

    def snapshot(self) -> RunningAverage:
        return RunningAverage(PrimalDualPoint(self.x.copy(), self.lam.copy()), self.total_weight)
