"""Pure-NumPy implementations of the hot kernels.

Same contracts as the compiled module `_core`: mollified deposition onto the
grid, periodic cubic B-spline gathers, and the O(n*m) pairwise interaction
sum.  Accumulation orders match the compiled loops closely enough that the
two backends agree to a few ulps.
"""

import numpy as np

PI = np.pi
TWO_PI = 2.0 * np.pi

BACKEND_NAME = "python"


def _spline_weights(f):
    """Cubic B-spline weights for offsets (-1, 0, 1, 2) at fraction f."""
    omf = 1.0 - f
    w0 = omf**3 / 6.0
    w1 = 2.0 / 3.0 - f * f + 0.5 * f**3
    w2 = 2.0 / 3.0 - omf * omf + 0.5 * omf**3
    w3 = f**3 / 6.0
    return np.stack([w0, w1, w2, w3], axis=-1)


def spline_gather(coeffs, points):
    """Evaluate prefiltered spline planes at points in [-pi, pi).

    coeffs: (m, G, G) float64; points: (n, 2).  Returns (m, n).
    """
    coeffs = np.asarray(coeffs)
    g = coeffs.shape[-1]
    h = TWO_PI / g
    t = (points + PI) / h
    base = np.floor(t).astype(np.int64)
    frac = t - base
    wx = _spline_weights(frac[:, 0])  # (n, 4)
    wy = _spline_weights(frac[:, 1])
    offs = np.arange(-1, 3)
    ix = (base[:, 0:1] + offs[None, :]) % g  # (n, 4)
    iy = (base[:, 1:2] + offs[None, :]) % g
    sub = coeffs[:, ix[:, :, None], iy[:, None, :]]  # (m, n, 4, 4)
    return np.einsum("mnab,na,nb->mn", sub, wx, wy)


def deposit(positions, weight, scale, amplitude, radius, grid_size, out):
    """Accumulate renormalised mollifier stamps onto `out` (G, G).

    Each particle contributes weight * V(x_j - X_i) / q_i, where q_i is the
    discrete mass of its own stamp, so the total deposited mass is exactly
    n_particles * weight regardless of grid resolution.
    """
    g = grid_size
    h = TWO_PI / g
    sw = int(np.ceil(radius / h)) + 1
    offs = np.arange(-sw, sw + 1)
    cell_area = h * h
    rad_sq = radius * radius
    for xp, yp in positions:
        bx = int(np.floor((xp + PI) / h))
        by = int(np.floor((yp + PI) / h))
        dx = -PI + (bx + offs) * h - xp
        dy = -PI + (by + offs) * h - yp
        rsq = dx[:, None] ** 2 + dy[None, :] ** 2
        inside = rsq < rad_sq
        vals = np.zeros_like(rsq)
        t = PI * PI - 4.0 * scale * scale * rsq[inside]
        vals[inside] = amplitude * np.exp(-1.0 / t)
        q = vals.sum() * cell_area
        if q <= 0.0:
            raise ValueError("mollifier stamp has zero mass on this grid")
        out[np.ix_((bx + offs) % g, (by + offs) % g)] += vals * (weight / q)


def pairwise_sum(targets, sources, table_coeffs, weight, exclude_diagonal):
    """Sum of the tabulated interaction over sources for every target.

    out[i] = weight * sum_j T(wrap(targets[i] - sources[j])), with j = i
    skipped when exclude_diagonal (targets and sources are then the same
    array).  table_coeffs: (2, G, G) prefiltered spline planes.
    """
    n = len(targets)
    m = len(sources)
    out = np.zeros((n, 2))
    block = max(1, 2_000_000 // max(m, 1))
    for start in range(0, n, block):
        stop = min(n, start + block)
        disp = targets[start:stop, None, :] - sources[None, :, :]
        disp = (disp + PI) % TWO_PI - PI
        vals = spline_gather(table_coeffs, disp.reshape(-1, 2)).reshape(2, stop - start, m)
        if exclude_diagonal:
            idx = np.arange(start, stop)
            vals[:, np.arange(stop - start), idx] = 0.0
        out[start:stop, 0] = weight * vals[0].sum(axis=1)
        out[start:stop, 1] = weight * vals[1].sum(axis=1)
    return out
