"""Independent brute-force references shared by the unit and acceptance tests."""

import itertools

import numpy as np

from spdfb.prox import (
    L1,
    IndicatorBox,
    IndicatorPoint,
    IndicatorSimplex,
    Linear,
    Quadratic,
    Zero,
)


def descriptor_zoo(d=3, seed=7):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, d))
    return {
        "zero": Zero(d),
        "linear": Linear(rng.uniform(-2, 2, d)),
        "quadratic": Quadratic(A @ A.T / d, rng.uniform(-1, 1, d)),
        "simplex": IndicatorSimplex(d),
        "box": IndicatorBox(-np.ones(d), np.array([0.5, 1.0, 2.0])[:d]),
        "point": IndicatorPoint(rng.uniform(-1, 1, d)),
        "l1": L1(0.7, d),
    }


def sample_domain(h, rng, n, d, center=None):
    """``n`` random points of ``dom h``; half of them clustered around ``center``."""
    if isinstance(h, IndicatorSimplex):
        return rng.dirichlet(np.ones(d), n)
    if isinstance(h, IndicatorBox):
        return rng.uniform(h.lo, h.hi, (n, d))
    if isinstance(h, IndicatorPoint):
        return np.tile(h.c, (n, 1))
    pts = rng.uniform(-5, 5, (n, d))
    if center is not None:
        half = n // 2
        pts[:half] = center + rng.normal(scale=0.1, size=(half, d))
    return pts


def prox_objective(h, gamma, v, y):
    return h.value(y) + float((y - v) @ (y - v)) / (2 * gamma)


def simplex_grid_projection(v, step):
    """Nearest grid point of the simplex to ``v`` (2-D and 3-D)."""
    v = np.asarray(v, dtype=float)
    d = v.size
    ticks = np.arange(0.0, 1.0 + step / 2, step)
    if d == 2:
        cand = np.stack([ticks, 1.0 - ticks], axis=1)
    elif d == 3:
        a, b = np.meshgrid(ticks, ticks, indexing="ij")
        a, b = a.ravel(), b.ravel()
        keep = a + b <= 1.0 + 1e-12
        cand = np.stack([a[keep], b[keep], np.clip(1.0 - a[keep] - b[keep], 0, None)], axis=1)
    else:
        raise ValueError("grid projection implemented for d in (2, 3)")
    dist = ((cand - v) ** 2).sum(1)
    return cand[int(np.argmin(dist))]


def sgd_reference(grad, x0, gammas, atom_indices, atoms):
    """Plain stochastic gradient recursion on a pre-drawn sample path."""
    x = np.array(x0, dtype=float)
    path = []
    for gamma, m in zip(gammas, atom_indices):
        x = x - gamma * grad(atoms[m], x)
        path.append(x.copy())
    return path


def lattice(lo, hi, n):
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    return np.array(list(itertools.product(*axes)))
