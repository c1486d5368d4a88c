"""Stochastic primal-dual forward-backward iteration and the averaged run loop.

One iteration draws a single sample ``s`` and updates

    x'   = prox_{gamma g(s, .)}(x - gamma (grad f(s, x) + L(s)^T lam))
    lam' = prox_{gamma p(s, .)}(lam + gamma L(s) x)

where the dual step uses the primal iterate from *before* the update.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    DimensionError,
    PrimalDualPoint,
    StepSchedule,
    _Accumulator,
    validate_schedule,
)
from .problem import FiniteDistribution, SamplePoint, StochasticSaddleProblem, sample
from .prox import Zero

logger = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e9
# uniforms drawn per block in the run loop
_BLOCK = 8192


class EngineAbort(RuntimeError):
    """Raised when an iterate becomes non-finite or exceeds the divergence bound."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")
        self.iteration = iteration


def _step_arrays(problem, x, lam, s, gamma):
    L = problem.L_op(s)
    drift = problem.f_subgrad(s, x) + L.T @ lam
    x_new = problem.g_prox(s).prox(gamma, x - gamma * drift)
    lam_new = problem.p_prox(s).prox(gamma, lam + gamma * (L @ x))
    return x_new, lam_new


def _check_state(problem, state):
    if state.d != problem.d or state.k != problem.k:
        raise DimensionError(
            f"state dimensions ({state.d}, {state.k}) do not match problem ({problem.d}, {problem.k})"
        )


def fb_step(problem: StochasticSaddleProblem, state: PrimalDualPoint, s: SamplePoint,
            gamma: float) -> PrimalDualPoint:
    """One forward-backward step driven by the sample ``s``."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    _check_state(problem, state)
    x_new, lam_new = _step_arrays(problem, state.x, state.lam, s, gamma)
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(lam_new))):
        raise EngineAbort("non-finite iterate")
    return PrimalDualPoint(x_new, lam_new)


def fb_step_resolvent(problem: StochasticSaddleProblem, state: PrimalDualPoint, s: SamplePoint,
                      gamma: float) -> PrimalDualPoint:
    """The same step written on the product space.

    With ``z = (x, lam)``, the single-valued part is
    ``b(s, z) = (grad f(s, x) + L^T lam, -L x)`` and the set-valued part
    ``A(s) = (dg(s, .), dp(s, .))`` is block diagonal, so its resolvent acts
    blockwise as the two proximal maps.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    _check_state(problem, state)
    d, k = problem.d, problem.k
    L = np.asarray(problem.L_op(s))
    skew = np.block([[np.zeros((d, d)), L.T], [-L, np.zeros((k, k))]])
    z = state.stacked()
    b = skew @ z
    b[:d] += problem.f_subgrad(s, state.x)
    w = z - gamma * b
    resolved = np.concatenate([problem.g_prox(s).prox(gamma, w[:d]), problem.p_prox(s).prox(gamma, w[d:])])
    if not np.all(np.isfinite(resolved)):
        raise EngineAbort("non-finite iterate")
    return PrimalDualPoint(resolved[:d], resolved[d:])


def default_initial_point(problem: StochasticSaddleProblem, dist: FiniteDistribution) -> PrimalDualPoint:
    """Feasible start: ``x0`` is the projection of 0 onto dom g(atom 0), ``lam0 = 0``."""
    g0 = problem.g_prox(dist.point(0))
    return PrimalDualPoint(g0.project(np.zeros(problem.d)), np.zeros(problem.k))


@dataclass(frozen=True)
class RunConfig:
    n_iters: int
    seed: int = 0
    record_every: int = 1000
    initial_point: PrimalDualPoint | None = None
    schedule: StepSchedule = field(default_factory=StepSchedule)

    def __post_init__(self):
        if self.n_iters < 0:
            raise ValueError("n_iters must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.n_iters > 0 and self.record_every > self.n_iters:
            raise ValueError("record_every must not exceed n_iters")


@dataclass(frozen=True)
class Checkpoint:
    n: int
    raw: PrimalDualPoint
    average: PrimalDualPoint
    metrics: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    checkpoints: list[Checkpoint]
    final_average: PrimalDualPoint

    def at(self, n: int) -> Checkpoint:
        for cp in self.checkpoints:
            if cp.n == n:
                return cp
        raise KeyError(n)


MetricsFn = Callable[[PrimalDualPoint, PrimalDualPoint], dict]
StepHook = Callable[[int, np.ndarray, np.ndarray, np.ndarray, np.ndarray], None]


def run(problem: StochasticSaddleProblem, dist: FiniteDistribution, config: RunConfig,
        metrics: MetricsFn | None = None, on_step: StepHook | None = None) -> RunRecord:
    """Iterate :func:`fb_step` ``config.n_iters`` times with weighted averaging.

    Iteration ``n`` uses step ``gamma_n`` and one fresh sample; the pair
    ``(gamma_n, (x_n, lam_n))`` is folded into the running average. A
    checkpoint is recorded at ``n = 0`` (where the average is defined as the
    initial point), at every multiple of ``record_every`` and at the last
    iteration. ``metrics(raw, average)`` is evaluated at checkpoints only.
    ``on_step(n, x_n, lam_n, xbar_n, lambar_n)`` is called after every
    iteration; the arrays must not be modified.
    """
    violation = validate_schedule(config.schedule)
    if violation:
        raise ValueError(f"invalid step schedule: {violation}")
    start = config.initial_point or default_initial_point(problem, dist)
    _check_state(problem, start)
    if not start.is_finite():
        raise ValueError("initial point must be finite")

    points = [dist.point(m) for m in range(len(dist))]
    rng = np.random.default_rng(config.seed)
    x, lam = start.x.copy(), start.lam.copy()
    acc = _Accumulator(np.zeros(problem.d), np.zeros(problem.k))

    def checkpoint(n, raw, avg):
        extra = metrics(raw, avg) if metrics is not None else {}
        return Checkpoint(n, raw, avg, extra)

    checkpoints = [checkpoint(0, start, start)]
    n = 0
    sched = config.schedule
    while n < config.n_iters:
        size = min(_BLOCK, config.n_iters - n)
        indices = dist.indices(rng, size)
        steps = np.arange(n + 1, n + size + 1, dtype=float) + sched.offset
        gammas = (sched.gamma0 * steps ** (-sched.exponent)).tolist()
        for m, gamma in zip(indices, gammas):
            n += 1
            x, lam = _step_arrays(problem, x, lam, points[m], gamma)
            sq = x @ x + lam @ lam
            if not sq <= DIVERGENCE_BOUND**2:
                reason = "non-finite iterate" if not np.isfinite(sq) else "iterate norm exceeds 1e9"
                logger.error("run aborted at iteration %d: %s", n, reason)
                raise EngineAbort(reason, n)
            acc.add(gamma, x, lam)
            if on_step is not None:
                on_step(n, x, lam, acc.x, acc.lam)
            if n % config.record_every == 0 or n == config.n_iters:
                raw = PrimalDualPoint(x, lam)
                avg = PrimalDualPoint(acc.x.copy(), acc.lam.copy())
                checkpoints.append(checkpoint(n, raw, avg))
    return RunRecord(checkpoints, checkpoints[-1].average)


def _is_trivial_coupling(problem: StochasticSaddleProblem, dist: FiniteDistribution) -> bool:
    for m in range(len(dist)):
        s = dist.point(m)
        if not isinstance(problem.g_prox(s), Zero) or not isinstance(problem.p_prox(s), Zero):
            return False
        if np.any(np.asarray(problem.L_op(s)) != 0):
            return False
    return True


def reduce_to_sgd_check(problem: StochasticSaddleProblem, dist: FiniteDistribution, config: RunConfig,
                        tol: float = 1e-12) -> bool:
    """Compare the primal trajectory with plain SGD ``x <- x - gamma grad f(s, x)``.

    Only applicable when every ``g(s, .)`` and ``p(s, .)`` is zero and every
    ``L(s)`` vanishes; raises ``ValueError`` otherwise.
    """
    if not _is_trivial_coupling(problem, dist):
        raise ValueError("SGD reduction requires g = 0, p = 0 and L = 0 for every atom")
    trajectory = []
    run(problem, dist, config, on_step=lambda n, x, lam, xb, lb: trajectory.append(x.copy()))

    rng = np.random.default_rng(config.seed)
    start = config.initial_point or default_initial_point(problem, dist)
    x = np.array(start.x, dtype=float)
    for n in range(1, config.n_iters + 1):
        s = sample(dist, rng)
        x = x - config.schedule(n) * problem.f_subgrad(s, x)
        if np.max(np.abs(x - trajectory[n - 1])) > tol:
            return False
    return True
