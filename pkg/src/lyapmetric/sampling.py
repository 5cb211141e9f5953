"""Deterministic low-discrepancy sampling helpers.

All sample sets are functions of (shape, count, seed) only, so repeated runs
of an estimate or certificate see byte-identical inputs.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm, qmc


def halton_unit(dim, count, seed):
    sampler = qmc.Halton(d=dim, scramble=True, seed=int(seed))
    return sampler.random(count)


def sphere_points(dim, radius, count, seed):
    """Deterministic points on the sphere |e| = radius."""
    if dim == 1:
        signs = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(count)])
        return (radius * signs)[:, None]
    u = halton_unit(dim, count, seed)
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return radius * g


def ball_points(dim, radius, count, seed):
    """Deterministic points in the closed ball |e| <= radius (origin excluded)."""
    if dim == 1:
        # symmetric radii ladder
        mags = radius * (np.arange(1, count + 1) / count)
        signs = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(count)])
        return (mags * signs)[:, None]
    u = halton_unit(dim + 1, count, seed)
    g = norm.ppf(np.clip(u[:, :dim], 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * np.maximum(u[:, dim], 1.0 / (4 * count)) ** (1.0 / dim)
    return g * r[:, None]


def box_points(lo, hi, count, seed):
    """Deterministic points in an axis-aligned box."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    u = halton_unit(lo.size, count, seed)
    return lo + u * (hi - lo)
