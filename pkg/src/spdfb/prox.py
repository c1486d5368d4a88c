"""Closed-form proximal maps for the per-sample functions ``g(s, .)`` and ``p(s, .)``.

Every descriptor is an immutable value implementing

* ``value(x)``: the function value, ``inf`` outside the domain;
* ``prox(gamma, v)``: ``argmin_y h(y) + |y - v|^2 / (2 gamma)``;
* ``subgradient(x)``: the least-norm element of the subdifferential, or ``None``
  when ``x`` is outside its domain;
* ``project(x)``: projection onto the closure of the subdifferential's domain.

The module-level functions :func:`prox`, :func:`least_norm_subgradient` and
:func:`domain_projection` add dimension checks on top of these methods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError

# membership tolerance for indicator domains
DOMAIN_TOL = 1e-10


class ProxError(ValueError):
    """Raised when a proximal map cannot be evaluated."""


def _frozen(values, ndim=1) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if ndim == 1:
        arr = arr.reshape(-1)
    arr.setflags(write=False)
    return arr


_ARANGE = {}


def _arange(n):
    try:
        return _ARANGE[n]
    except KeyError:
        return _ARANGE.setdefault(n, np.arange(1.0, n + 1))


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the unit probability simplex.

    Sort-and-threshold rule: ``y_i = max(v_i - tau, 0)`` where ``tau`` makes the
    entries sum to one.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if n == 1:
        return np.ones(1)
    u = -np.sort(-v)
    css = u.cumsum()
    css -= 1.0
    # the threshold condition holds on a prefix of the sorted entries
    rho = int(np.count_nonzero(u * _arange(n) > css))
    tau = css[rho - 1] / rho
    return np.maximum(v - tau, 0.0)


class ProxFunction:
    """Base class of the closed-form descriptors."""

    #: dimension the descriptor is tied to, ``None`` if it adapts to its input
    dim: int | None = None

    def value(self, x) -> float:
        raise NotImplementedError

    def prox(self, gamma: float, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def subgradient(self, x: np.ndarray) -> np.ndarray | None:
        raise NotImplementedError

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, dtype=float)

    @property
    def is_indicator(self) -> bool:
        return False

    def to_dict(self) -> dict:
        """Plain-data description, used for serialization and comparisons."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Zero(ProxFunction):
    dim: int | None = None

    def value(self, x):
        return 0.0

    def prox(self, gamma, v):
        return np.array(v, dtype=float)

    def subgradient(self, x):
        return np.zeros(np.size(x))

    def to_dict(self):
        return {"kind": "zero", "dim": self.dim}


@dataclass(frozen=True, eq=False)
class Linear(ProxFunction):
    """``x -> <x, c>``."""

    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", _frozen(self.c))

    @property
    def dim(self):
        return self.c.size

    def value(self, x):
        return float(np.dot(x, self.c))

    def prox(self, gamma, v):
        return v - gamma * self.c

    def subgradient(self, x):
        return self.c.copy()

    def to_dict(self):
        return {"kind": "linear", "c": self.c.tolist()}


@dataclass(frozen=True, eq=False)
class Quadratic(ProxFunction):
    """``x -> x'Qx / 2 + <b, x>`` with ``Q`` symmetric positive semidefinite."""

    Q: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.array(self.Q, dtype=float))
        b = _frozen(self.b)
        if Q.shape != (b.size, b.size):
            raise DimensionError(f"Q has shape {Q.shape}, expected ({b.size}, {b.size})")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12):
            raise ValueError("Q must be symmetric")
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.b.size

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.b @ x)

    def prox(self, gamma, v):
        A = np.eye(self.b.size) + gamma * self.Q
        try:
            chol = np.linalg.cholesky(A)
        except np.linalg.LinAlgError as exc:
            raise ProxError(f"I + gamma*Q is not positive definite (gamma={gamma}); Q is not PSD") from exc
        rhs = v - gamma * self.b
        return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))

    def subgradient(self, x):
        return self.Q @ x + self.b

    def to_dict(self):
        return {"kind": "quadratic", "Q": self.Q.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True, eq=False)
class IndicatorSimplex(ProxFunction):
    """Indicator of the unit probability simplex."""

    dim: int | None = None

    @property
    def is_indicator(self):
        return True

    def contains(self, x, tol=DOMAIN_TOL) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)

    def value(self, x):
        return 0.0 if self.contains(x) else np.inf

    def prox(self, gamma, v):
        return project_simplex(v)

    def subgradient(self, x):
        # zero lies in the normal cone at every point of the simplex
        return np.zeros(np.size(x)) if self.contains(x) else None

    def project(self, x):
        return project_simplex(x)

    def to_dict(self):
        return {"kind": "simplex", "dim": self.dim}


@dataclass(frozen=True, eq=False)
class IndicatorBox(ProxFunction):
    """Indicator of ``{x : lo <= x <= hi}``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen(self.lo), _frozen(self.hi)
        if lo.shape != hi.shape:
            raise DimensionError("box bounds must have the same length")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    @property
    def is_indicator(self):
        return True

    def contains(self, x, tol=DOMAIN_TOL) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def value(self, x):
        return 0.0 if self.contains(x) else np.inf

    def prox(self, gamma, v):
        return np.minimum(np.maximum(v, self.lo), self.hi)

    def subgradient(self, x):
        return np.zeros(self.lo.size) if self.contains(x) else None

    def project(self, x):
        return np.minimum(np.maximum(x, self.lo), self.hi)

    def to_dict(self):
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class IndicatorPoint(ProxFunction):
    """Indicator of the singleton ``{c}``."""

    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", _frozen(self.c))

    @property
    def dim(self):
        return self.c.size

    @property
    def is_indicator(self):
        return True

    def contains(self, x, tol=DOMAIN_TOL) -> bool:
        return bool(np.all(np.abs(np.asarray(x) - self.c) <= tol))

    def value(self, x):
        return 0.0 if self.contains(x) else np.inf

    def prox(self, gamma, v):
        return self.c.copy()

    def subgradient(self, x):
        return np.zeros(self.c.size) if self.contains(x) else None

    def project(self, x):
        return self.c.copy()

    def to_dict(self):
        return {"kind": "point", "c": self.c.tolist()}


@dataclass(frozen=True, eq=False)
class L1(ProxFunction):
    """``x -> w * |x|_1`` with ``w > 0``."""

    w: float
    dim: int | None = None

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError(f"L1 weight must be positive, got {self.w}")
        object.__setattr__(self, "w", float(self.w))

    def value(self, x):
        return self.w * float(np.abs(x).sum())

    def prox(self, gamma, v):
        # |v_i| == gamma*w maps to exactly zero
        return np.sign(v) * np.maximum(np.abs(v) - gamma * self.w, 0.0)

    def subgradient(self, x):
        return self.w * np.sign(x)

    def to_dict(self):
        return {"kind": "l1", "w": self.w, "dim": self.dim}


_KINDS = {
    "zero": lambda d: Zero(d.get("dim")),
    "linear": lambda d: Linear(d["c"]),
    "quadratic": lambda d: Quadratic(d["Q"], d["b"]),
    "simplex": lambda d: IndicatorSimplex(d.get("dim")),
    "box": lambda d: IndicatorBox(d["lo"], d["hi"]),
    "point": lambda d: IndicatorPoint(d["c"]),
    "l1": lambda d: L1(d["w"], d.get("dim")),
}


def from_dict(spec: dict) -> ProxFunction:
    """Inverse of ``ProxFunction.to_dict``."""
    try:
        build = _KINDS[spec["kind"]]
    except KeyError:
        raise ValueError(f"unknown prox function kind {spec.get('kind')!r}") from None
    return build(spec)


def _check_dim(h: ProxFunction, v: np.ndarray) -> None:
    if v.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {v.shape}")
    if h.dim is not None and v.size != h.dim:
        raise DimensionError(f"{type(h).__name__} has dimension {h.dim}, got vector of size {v.size}")


def prox(h: ProxFunction, gamma: float, v) -> np.ndarray:
    """Proximal map of ``gamma * h`` at ``v``."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    v = np.asarray(v, dtype=float)
    _check_dim(h, v)
    return h.prox(gamma, v)


def least_norm_subgradient(h: ProxFunction, x) -> np.ndarray | None:
    """Minimum-norm subgradient of ``h`` at ``x``; ``None`` outside ``dom dh``."""
    x = np.asarray(x, dtype=float)
    _check_dim(h, x)
    return h.subgradient(x)


def domain_projection(h: ProxFunction, x) -> np.ndarray:
    """Projection onto the closure of ``dom dh`` (identity for full-domain functions)."""
    x = np.asarray(x, dtype=float)
    _check_dim(h, x)
    return h.project(x)
