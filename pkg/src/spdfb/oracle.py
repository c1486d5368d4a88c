"""Verification tools built on the exact expected problem.

A pair ``(x, lam)`` is a saddle point iff it is a fixed point of the
deterministic forward-backward map

    x   = prox_{gamma G}(x - gamma (grad F(x) + L^T lam))
    lam = prox_{gamma H*}(lam + gamma L x)

for any ``gamma > 0``; :func:`fixed_point_residual` measures the distance to
being one. :func:`brute_force_saddle` minimizes that residual by grid search
and :func:`deterministic_fb_reference` runs the noise-free recursion.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import PrimalDualPoint, StepSchedule
from .engine import RunConfig, RunRecord, run
from .problem import DeterministicSaddleProblem
from .prox import IndicatorBox, IndicatorPoint, IndicatorSimplex, Linear


class OracleScaleError(ValueError):
    """Raised when an instance is too large for the grid-search oracle."""


@dataclass(frozen=True)
class ResidualReport:
    primal_residual: float
    dual_residual: float
    constraint_gap: float
    lagrangian_value: float

    @property
    def total(self) -> float:
        """Euclidean norm of the stacked primal and dual residuals."""
        return float(np.hypot(self.primal_residual, self.dual_residual))


def _residual_vectors(det: DeterministicSaddleProblem, x, lam, gamma):
    L = det.L_bar
    x_fb = det.G_prox.prox(gamma, x - gamma * (det.grad_F(x) + L.T @ lam))
    lam_fb = det.Hstar_prox.prox(gamma, lam + gamma * (L @ x))
    return x - x_fb, lam - lam_fb


def fixed_point_residual(det: DeterministicSaddleProblem, point: PrimalDualPoint,
                         gamma_ref: float = 1.0) -> ResidualReport:
    """Prox fixed-point residuals of ``point`` for the expected problem.

    ``constraint_gap`` is ``|L x - c|`` when ``H*`` is linear (``H`` the
    indicator of ``{c}``) and 0 otherwise. ``lagrangian_value`` is
    ``F(x) + G(x) - H*(lam) + <L x, lam>``, or ``nan`` when ``F`` is unknown.
    """
    if not gamma_ref > 0:
        raise ValueError("gamma_ref must be positive")
    x, lam = point.x, point.lam
    rx, rl = _residual_vectors(det, x, lam, gamma_ref)
    Lx = det.L_bar @ x
    if isinstance(det.Hstar_prox, Linear):
        gap = float(np.linalg.norm(Lx - det.Hstar_prox.c))
    else:
        gap = 0.0
    if det.F is None:
        lagrangian = float("nan")
    else:
        lagrangian = det.F(x) + det.G_prox.value(x) - det.Hstar_prox.value(lam) + float(Lx @ lam)
    return ResidualReport(float(np.linalg.norm(rx)), float(np.linalg.norm(rl)), gap, float(lagrangian))


def _primal_chart(G, d, primal_box):
    """Bounds of the free primal coordinates and the map from them to ``x``."""
    if isinstance(G, IndicatorSimplex):
        # the first d-1 coordinates are free, the last one closes the sum
        def to_x(u):
            last = 1.0 - u.sum()
            return np.append(u, last) if last >= -1e-15 else None
        return np.zeros(d - 1), np.ones(d - 1), to_x
    if isinstance(G, IndicatorPoint):
        c = G.c.copy()
        return np.zeros(0), np.zeros(0), lambda u: c
    lo = np.full(d, float(primal_box[0]))
    hi = np.full(d, float(primal_box[1]))
    if isinstance(G, IndicatorBox):
        lo = np.where(np.isfinite(G.lo), G.lo, lo)
        hi = np.where(np.isfinite(G.hi), G.hi, hi)
    return lo, hi, lambda u: u


def _axis_values(center, half, lo, hi, n_points):
    if hi - lo <= 0:
        return np.array([lo])
    vals = center + half * np.linspace(-1.0, 1.0, n_points)
    return np.unique(np.clip(vals, lo, hi))


def brute_force_saddle(det: DeterministicSaddleProblem, grid_resolution: float = 1e-3, *,
                       dual_box=(-10.0, 10.0), primal_box=(-10.0, 10.0), coarse_points: int = 9,
                       refine_points: int = 5, n_starts: int = 3, gamma_ref: float = 1.0) -> PrimalDualPoint:
    """Grid search for the minimizer of the stacked fixed-point residual.

    The primal domain is gridded in its own coordinates (the simplex through
    its first ``d - 1`` barycentric coordinates, a box directly, ``primal_box``
    for full-domain ``G``) together with the dual box. The ``n_starts`` best
    coarse points are refined by halving the spacing around the incumbent until
    it is at most ``grid_resolution``. Limited to ``d <= 3`` and ``k <= 2``.
    """
    d, k = det.d, det.k
    if d > 3 or k > 2:
        raise OracleScaleError(f"oracle scale exceeded: d={d}, k={k} (limits d<=3, k<=2)")
    if not grid_resolution > 0:
        raise ValueError("grid_resolution must be positive")

    p_lo, p_hi, to_x = _primal_chart(det.G_prox, d, primal_box)
    n_free = p_lo.size
    lo = np.concatenate([p_lo, np.full(k, float(dual_box[0]))])
    hi = np.concatenate([p_hi, np.full(k, float(dual_box[1]))])

    def score(z):
        x = to_x(z[:n_free])
        if x is None:
            return np.inf
        rx, rl = _residual_vectors(det, x, z[n_free:], gamma_ref)
        return float(rx @ rx + rl @ rl)

    def scored_grid(axes):
        return [(score(z), z) for z in map(np.array, itertools.product(*axes))]

    def refine(z, val, spacing):
        while spacing.max() > grid_resolution:
            spacing = spacing / 2
            span = spacing * (refine_points - 1) / 2
            axes = [_axis_values(z[i], span[i], lo[i], hi[i], refine_points) for i in range(lo.size)]
            cand_val, cand = min(scored_grid(axes), key=lambda t: t[0])
            if cand_val < val:
                z, val = cand, cand_val
        return val, z

    center = (lo + hi) / 2
    half = (hi - lo) / 2
    axes = [_axis_values(center[i], half[i], lo[i], hi[i], coarse_points) for i in range(lo.size)]
    coarse = sorted(scored_grid(axes), key=lambda t: t[0])[:n_starts]
    spacing = np.maximum(hi - lo, 0.0) / (coarse_points - 1)
    _, z = min((refine(z, val, spacing) for val, z in coarse), key=lambda t: t[0])
    return PrimalDualPoint(to_x(z[:n_free]), z[n_free:])


def _reference_config(det, schedule, n_iters, initial_point, record_every):
    if initial_point is None:
        initial_point = PrimalDualPoint(det.G_prox.project(np.zeros(det.d)), np.zeros(det.k))
    return RunConfig(
        n_iters=n_iters,
        seed=0,
        record_every=record_every or max(n_iters, 1),
        initial_point=initial_point,
        schedule=schedule,
    )


def deterministic_fb_run(det: DeterministicSaddleProblem, schedule: StepSchedule, n_iters: int,
                         initial_point: PrimalDualPoint | None = None,
                         record_every: int | None = None, metrics=None) -> RunRecord:
    """Run the averaged recursion with the exact expected oracles."""
    stoch = det.as_stochastic()
    config = _reference_config(det, schedule, n_iters, initial_point, record_every)
    return run(stoch, stoch.distribution, config, metrics=metrics)


def deterministic_fb_reference(det: DeterministicSaddleProblem, schedule: StepSchedule, n_iters: int,
                               initial_point: PrimalDualPoint | None = None) -> PrimalDualPoint:
    """Weighted average after ``n_iters`` noise-free forward-backward steps."""
    return deterministic_fb_run(det, schedule, n_iters, initial_point).final_average
