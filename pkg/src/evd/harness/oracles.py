"""Reference values for the experiments: closed forms where they exist and
deterministic quadrature over the parameter otherwise."""

from __future__ import annotations

import numpy as np
from scipy.integrate import simpson


def _simpson_log(log_f, *axes):
    # log of the iterated Simpson integral of exp(log_f) over the given grids
    shift = np.max(log_f)
    vals = np.exp(log_f - shift)
    for ax in reversed(axes):
        vals = simpson(vals, x=ax, axis=-1)
    return float(np.log(vals) + shift)


def quadrature_log_evidence(log_joint, low, high, n_grid=2001, coarse=41, threshold=40.0, rounds=3):
    """``log int exp(log_joint(theta)) dtheta`` over a box, for 1 or 2 parameters.

    ``log_joint`` maps a ``(N, dim)`` array to ``(N,)`` values and must include
    the log prior.  In two dimensions the box is first shrunk to the region
    within ``threshold`` nats of the maximum, refined over ``rounds`` grids of
    ``coarse`` points per side, and then integrated on an ``n_grid``-per-side
    grid (``n_grid`` is capped at 301 in 2-d).
    """
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    if low.size == 1:
        grid = np.linspace(low[0], high[0], n_grid)
        return _simpson_log(log_joint(grid[:, None]), grid)
    if low.size != 2:
        raise ValueError("quadrature oracle supports one or two parameters")
    lo, hi = low.copy(), high.copy()
    for _ in range(rounds):
        a, b = np.linspace(lo[0], hi[0], coarse), np.linspace(lo[1], hi[1], coarse)
        A, B = np.meshgrid(a, b, indexing="ij")
        vals = log_joint(np.column_stack([A.ravel(), B.ravel()])).reshape(A.shape)
        keep = np.argwhere(vals > vals.max() - threshold)
        step = np.array([a[1] - a[0], b[1] - b[0]])
        new_lo = np.maximum(np.array([a[keep[:, 0].min()], b[keep[:, 1].min()]]) - step, low)
        new_hi = np.minimum(np.array([a[keep[:, 0].max()], b[keep[:, 1].max()]]) + step, high)
        if np.allclose(new_lo, lo) and np.allclose(new_hi, hi):
            break
        lo, hi = new_lo, new_hi
    m = min(n_grid, 301)
    a, b = np.linspace(lo[0], hi[0], m), np.linspace(lo[1], hi[1], m)
    A, B = np.meshgrid(a, b, indexing="ij")
    vals = log_joint(np.column_stack([A.ravel(), B.ravel()])).reshape(A.shape)
    return _simpson_log(vals, a, b)


def ising_log_evidence(model, y, n_grid=2001):
    """Evidence of lattice data under the model's uniform box prior."""
    s = model.stats(y)

    def log_joint(theta):
        out = np.empty(len(theta))
        for k in range(0, len(theta), 512):
            th = theta[k : k + 512]
            out[k : k + 512] = model.log_prior(th) + model.natural(th) @ s - model.exact_log_z(th)
        return out

    lo = np.full(model.dim, model.prior_low)
    hi = np.full(model.dim, model.prior_high)
    return quadrature_log_evidence(log_joint, lo, hi, n_grid=n_grid)


def ergm_log_evidence(model, y, n_grid=2001, width=5.0):
    """Evidence of a graph under the Gaussian prior, integrating over ``+-width`` prior sds."""
    s = model.stats(y)

    def log_joint(theta):
        return model.log_prior(theta) + model.natural(theta) @ s - model.exact_log_z(theta)

    half = width * np.sqrt(model.prior_var)
    return quadrature_log_evidence(log_joint, np.full(model.dim, -half), np.full(model.dim, half), n_grid=n_grid)

