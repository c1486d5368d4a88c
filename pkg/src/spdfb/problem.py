"""Finite-support sample distributions and stochastic saddle-point problem bundles.

A :class:`StochasticSaddleProblem` exposes the per-sample data of

    min_x  F(x) + G(x) + H(Lx),   F = E f(xi, .),  G = E g(xi, .),  H* = E p(xi, .),
    L = E L(xi),

through oracles evaluated at a :class:`SamplePoint`. Because the support is
finite, every expectation is an exact weighted sum, which is what the
:class:`DeterministicSaddleProblem` counterpart holds.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .core import DimensionError
from .prox import IndicatorSimplex, Linear, ProxFunction, from_dict

QUALIFICATION_TOL = 1e-9
PROB_TOL = 1e-12


class ProblemError(ValueError):
    """Raised for invalid problem data."""


@dataclass(frozen=True)
class SamplePoint:
    atom_index: int
    payload: Any = None


class FiniteDistribution:
    """Distribution putting mass ``probs[m]`` on ``atoms[m]``."""

    def __init__(self, atoms: Sequence, probs: Sequence[float]):
        probs = np.asarray(probs, dtype=float).reshape(-1)
        if len(atoms) != probs.size or probs.size == 0:
            raise ProblemError(f"{len(atoms)} atoms but {probs.size} probabilities")
        if np.any(~np.isfinite(probs)) or np.any(probs <= 0):
            raise ProblemError("probabilities must be positive")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ProblemError(f"probabilities must sum to 1 (sum is {probs.sum()!r})")
        self.atoms = list(atoms)
        self.probs = probs
        # bisect over the interior breakpoints maps u in [0, 1) to an atom
        self._breaks = np.cumsum(probs)[:-1].tolist()

    def __len__(self):
        return len(self.atoms)

    def index_of(self, u: float) -> int:
        return bisect.bisect_right(self._breaks, u)

    def point(self, m: int) -> SamplePoint:
        return SamplePoint(m, self.atoms[m])

    def indices(self, rng: np.random.Generator, size: int) -> list[int]:
        """``size`` consecutive draws; same stream as repeated :func:`sample` calls."""
        us = rng.random(size)
        breaks = self._breaks
        return [bisect.bisect_right(breaks, u) for u in us.tolist()]


def sample(dist: FiniteDistribution, rng: np.random.Generator) -> SamplePoint:
    """Draw one atom; consumes exactly one uniform from ``rng``."""
    return dist.point(dist.index_of(rng.random()))


@dataclass(frozen=True, eq=False)
class StochasticSaddleProblem:
    """Oracle bundle of the per-sample data ``f, g, p, L``.

    ``f_subgrad(s, x)`` returns a subgradient of ``f(s, .)`` at ``x``;
    ``g_prox(s)`` and ``p_prox(s)`` return :class:`~spdfb.prox.ProxFunction`
    descriptors of dimension ``d`` and ``k``; ``L_op(s)`` returns a ``k x d``
    matrix.
    """

    d: int
    k: int
    f_subgrad: Callable[[SamplePoint, np.ndarray], np.ndarray]
    g_prox: Callable[[SamplePoint], ProxFunction]
    p_prox: Callable[[SamplePoint], ProxFunction]
    L_op: Callable[[SamplePoint], np.ndarray]
    f_value: Callable[[SamplePoint, np.ndarray], float] | None = None
    distribution: FiniteDistribution | None = None
    spec: dict = field(default_factory=dict)

    def describe(self) -> list[dict]:
        """Per-atom plain-data payload of every oracle except ``f_subgrad``."""
        if self.distribution is None:
            return []
        out = []
        for m in range(len(self.distribution)):
            s = self.distribution.point(m)
            out.append(
                {
                    "prob": float(self.distribution.probs[m]),
                    "g": self.g_prox(s).to_dict(),
                    "p": self.p_prox(s).to_dict(),
                    "L": np.asarray(self.L_op(s)).tolist(),
                }
            )
        return out


@dataclass(frozen=True, eq=False)
class DeterministicSaddleProblem:
    """Exact expected problem: ``grad F``, ``G``, ``H*`` and ``L_bar = E L``."""

    grad_F: Callable[[np.ndarray], np.ndarray]
    G_prox: ProxFunction
    Hstar_prox: ProxFunction
    L_bar: np.ndarray
    F: Callable[[np.ndarray], float] | None = None

    @property
    def d(self) -> int:
        return self.L_bar.shape[1]

    @property
    def k(self) -> int:
        return self.L_bar.shape[0]

    def as_stochastic(self) -> StochasticSaddleProblem:
        """Single-atom (zero-noise) stochastic problem with the exact oracles."""
        dist = FiniteDistribution([None], [1.0])
        F = self.F
        return StochasticSaddleProblem(
            d=self.d,
            k=self.k,
            f_subgrad=lambda s, x: self.grad_F(x),
            g_prox=lambda s: self.G_prox,
            p_prox=lambda s: self.Hstar_prox,
            L_op=lambda s: self.L_bar,
            f_value=None if F is None else (lambda s, x: F(x)),
            distribution=dist,
        )


def _expected_gradient(atom_grads, probs):
    pairs = list(zip(probs.tolist(), atom_grads))

    def grad_F(x):
        total = 0.0
        for p, g in pairs:
            total = total + p * g(x)
        return total

    return grad_F


def _expected_value(atom_values, probs):
    pairs = list(zip(probs.tolist(), atom_values))

    def F(x):
        return float(sum(p * f(x) for p, f in pairs))

    return F


def _weighted_sum(arrays, probs):
    total = 0.0
    for p, a in zip(probs.tolist(), arrays):
        total = total + p * a
    return np.asarray(total, dtype=float)


def markowitz_problem(atoms, probs, c: float):
    """Online Markowitz portfolio instance.

    ``f(s, x) = <x, xi_s>^2``, ``g = indicator of the simplex``,
    ``p(s, lam) = lam * c`` and ``L(s) = xi_s^T``, so the expected problem is
    ``min E<x, xi>^2`` over the simplex subject to ``E[xi]^T x = c``.

    Returns ``(stochastic, deterministic)``. Raises :class:`ProblemError` when
    ``c`` is not in the relative interior of the image of the simplex.
    """
    xis = [np.array(a, dtype=float).reshape(-1) for a in atoms]
    d = xis[0].size if xis else 0
    if any(xi.size != d for xi in xis):
        raise DimensionError("all return vectors must have the same dimension")
    dist = FiniteDistribution(xis, probs)
    probs = dist.probs
    c = float(c)

    Ls = [xi.reshape(1, d) for xi in xis]
    for L in Ls:
        L.setflags(write=False)
    L_bar = _weighted_sum(Ls, probs)
    # L_bar * simplex is the interval spanned by the images of the vertices
    lo, hi = float(L_bar.min()), float(L_bar.max())
    if hi - lo <= QUALIFICATION_TOL:
        ok = abs(c - lo) <= QUALIFICATION_TOL
    else:
        ok = lo + QUALIFICATION_TOL < c < hi - QUALIFICATION_TOL
    if not ok:
        raise ProblemError(f"c not in relint L*simplex: c={c} outside ({lo}, {hi})")

    simplex = IndicatorSimplex(d)
    rhs = Linear([c])

    def f_subgrad(s, x):
        xi = xis[s.atom_index]
        return 2.0 * (x @ xi) * xi

    def f_value(s, x):
        return float(x @ xis[s.atom_index]) ** 2

    stoch = StochasticSaddleProblem(
        d=d,
        k=1,
        f_subgrad=f_subgrad,
        g_prox=lambda s: simplex,
        p_prox=lambda s: rhs,
        L_op=lambda s: Ls[s.atom_index],
        f_value=f_value,
        distribution=dist,
        spec={
            "generator": "markowitz",
            "atoms": [xi.tolist() for xi in xis],
            "probs": probs.tolist(),
            "c": c,
        },
    )
    grads = [lambda x, xi=xi: 2.0 * (x @ xi) * xi for xi in xis]
    values = [lambda x, xi=xi: float(x @ xi) ** 2 for xi in xis]
    L_bar.setflags(write=False)
    det = DeterministicSaddleProblem(
        grad_F=_expected_gradient(grads, probs),
        G_prox=simplex,
        Hstar_prox=Linear([c]),
        L_bar=L_bar,
        F=_expected_value(values, probs),
    )
    return stoch, det


def _is_psd(Q: np.ndarray) -> bool:
    return bool(np.linalg.eigvalsh(Q).min() >= -1e-10 * max(1.0, np.abs(Q).max()))


def constrained_qp_problem(Q_atoms, b_atoms, L_atoms, c_atoms, probs, primal_set: ProxFunction):
    """Quadratic objective with stochastic linear equality constraints.

    Per atom ``f(s, x) = x'Q_s x / 2 + <b_s, x>``, ``g(s, .) = primal_set``,
    ``p(s, lam) = <lam, c_s>`` and ``L(s) = L_s``; the expected problem is
    ``min F(x) + primal_set(x)`` subject to ``E[L] x = E[c]``.
    """
    M = len(Q_atoms)
    if not (len(b_atoms) == len(L_atoms) == len(c_atoms) == M):
        raise DimensionError("Q, b, L and c atom lists must have the same length")
    Qs = [np.atleast_2d(np.array(Q, dtype=float)) for Q in Q_atoms]
    bs = [np.array(b, dtype=float).reshape(-1) for b in b_atoms]
    d = bs[0].size
    Ls = [np.array(L, dtype=float) for L in L_atoms]
    Ls = [L.reshape(1, -1) if L.ndim == 1 else L for L in Ls]
    k = Ls[0].shape[0]
    cs = [np.array(c, dtype=float).reshape(-1) for c in c_atoms]
    for m in range(M):
        if Qs[m].shape != (d, d) or bs[m].size != d:
            raise DimensionError(f"atom {m}: Q/b dimensions do not match d={d}")
        if Ls[m].shape != (k, d) or cs[m].size != k:
            raise DimensionError(f"atom {m}: L/c dimensions do not match ({k}, {d})")
        if not np.allclose(Qs[m], Qs[m].T, rtol=0, atol=1e-12):
            raise ProblemError(f"atom {m}: Q is not symmetric")
        if not _is_psd(Qs[m]):
            raise ProblemError(f"atom {m}: Q is not positive semidefinite")
    if primal_set.dim is not None and primal_set.dim != d:
        raise DimensionError(f"primal set has dimension {primal_set.dim}, expected {d}")
    for arr in (*Qs, *bs, *Ls, *cs):
        arr.setflags(write=False)

    payloads = [{"Q": Qs[m], "b": bs[m], "L": Ls[m], "c": cs[m]} for m in range(M)]
    dist = FiniteDistribution(payloads, probs)
    probs = dist.probs
    duals = [Linear(c) for c in cs]

    def f_subgrad(s, x):
        m = s.atom_index
        return Qs[m] @ x + bs[m]

    def f_value(s, x):
        m = s.atom_index
        return float(0.5 * x @ Qs[m] @ x + bs[m] @ x)

    stoch = StochasticSaddleProblem(
        d=d,
        k=k,
        f_subgrad=f_subgrad,
        g_prox=lambda s: primal_set,
        p_prox=lambda s: duals[s.atom_index],
        L_op=lambda s: Ls[s.atom_index],
        f_value=f_value,
        distribution=dist,
        spec={
            "generator": "constrained_qp",
            "Q": [Q.tolist() for Q in Qs],
            "b": [b.tolist() for b in bs],
            "L": [L.tolist() for L in Ls],
            "c": [c.tolist() for c in cs],
            "probs": probs.tolist(),
            "primal_set": primal_set.to_dict(),
        },
    )
    grads = [lambda x, Q=Q, b=b: Q @ x + b for Q, b in zip(Qs, bs)]
    values = [lambda x, Q=Q, b=b: float(0.5 * x @ Q @ x + b @ x) for Q, b in zip(Qs, bs)]
    L_bar = _weighted_sum(Ls, probs)
    L_bar.setflags(write=False)
    det = DeterministicSaddleProblem(
        grad_F=_expected_gradient(grads, probs),
        G_prox=primal_set,
        Hstar_prox=Linear(_weighted_sum(cs, probs)),
        L_bar=L_bar,
        F=_expected_value(values, probs),
    )
    return stoch, det


def problem_from_spec(spec: dict):
    """Build ``(stochastic, deterministic)`` from a generator spec dictionary."""
    name = spec.get("generator")
    if name == "markowitz":
        return markowitz_problem(spec["atoms"], spec["probs"], spec["c"])
    if name == "constrained_qp":
        primal = spec["primal_set"]
        if not isinstance(primal, ProxFunction):
            primal = from_dict(primal)
        return constrained_qp_problem(spec["Q"], spec["b"], spec["L"], spec["c"], spec["probs"], primal)
    raise ProblemError(f"unknown generator {name!r}")


@dataclass(frozen=True)
class GrowthReport:
    """Estimated ``beta(s) = max_x |grad f(s, x)| / (1 + |x|)`` per atom."""

    beta: dict[int, float]

    @property
    def max_beta(self) -> float:
        return max(self.beta.values()) if self.beta else 0.0


def growth_diagnostic(problem: StochasticSaddleProblem, dist: FiniteDistribution,
                      n_samples: int, radius: float, seed: int = 0) -> GrowthReport:
    """Empirical check of the linear growth bound on the subgradient oracle.

    For every atom, ``n_samples`` points uniform in the ball of the given radius
    (plus the origin) are evaluated. Advisory only: a sampled maximum is a
    lower estimate of the true constant.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    d = problem.d
    beta = {}
    for m in range(len(dist)):
        s = dist.point(m)
        directions = rng.standard_normal((n_samples, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = radius * rng.random(n_samples) ** (1.0 / d)
        xs = np.vstack([np.zeros(d), directions * radii[:, None]])
        ratios = [np.linalg.norm(problem.f_subgrad(s, x)) / (1.0 + np.linalg.norm(x)) for x in xs]
        beta[m] = float(max(ratios))
    return GrowthReport(beta)
