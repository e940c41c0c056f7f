"""Velocity reconstruction from vorticity on the torus.

The velocity field is u = K * omega, realised spectrally through the
multiplier

    uhat(k) = i * (k2, -k1) / |k|^2 * omegahat(k),      uhat(0) = 0.

The perp direction (k2, -k1) is fixed by the defining identities
curl(u) = d1 u2 - d2 u1 = omega and div(u) = 0, both of which hold exactly in
coefficients.  The lattice Green function G (u = grad_perp of the Poisson
solution) is exposed only for property tests; the solver path never touches
the conditionally convergent series.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import TWO_PI, GridResolutionError, GridSpec, SpectralField, VectorField
from .interp import spline_prefilter
from .mollifier import Mollifier

ZERO_MEAN_RTOL = 1e-10


def velocity_multiplier(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise Fourier multipliers of the Biot-Savart operator."""
    k1, k2 = grid.wavenumbers
    ksq = grid.ksq
    safe = np.where(ksq == 0.0, 1.0, ksq)
    keep = ~grid._nyquist_mask
    m1 = 1j * k2 / safe * keep
    m2 = -1j * k1 / safe * keep
    m1[0, 0] = 0.0
    m2[0, 0] = 0.0
    return m1, m2


def velocity_from_vorticity(omega: SpectralField) -> VectorField:
    """Divergence-free velocity with curl(u) = omega; requires zero mean."""
    coeffs = omega.coeffs
    peak = np.abs(coeffs).max()
    if peak > 0 and abs(coeffs[0, 0]) > ZERO_MEAN_RTOL * peak:
        raise ValueError(
            f"vorticity must have zero mean (|mean coeff| = {abs(coeffs[0, 0]):.3e}, "
            f"max coeff {peak:.3e})"
        )
    m1, m2 = velocity_multiplier(omega.grid)
    return VectorField(
        SpectralField(omega.grid, coeffs=m1 * coeffs),
        SpectralField(omega.grid, coeffs=m2 * coeffs),
        divergence_free=True,
    )


def kernel_field(grid: GridSpec) -> VectorField:
    """Grid samples of the kernel K itself (coefficients u_mult / (2 pi)^2)."""
    m1, m2 = velocity_multiplier(grid)
    return VectorField(
        SpectralField(grid, coeffs=m1 / TWO_PI**2),
        SpectralField(grid, coeffs=m2 / TWO_PI**2),
        divergence_free=True,
    )


def kernel_l1_estimate(grid_size: int = 512) -> float:
    """Grid estimate of the L^1 norm of K (used to size the drift cap)."""
    grid = GridSpec(grid_size)
    kf = kernel_field(grid)
    return float(kf.magnitude().sum() * grid.spacing**2)


def green_function_eval(point, mode_cutoff: int, chunk: int = 256) -> float:
    """Fejer-smoothed symmetric partial sum of the lattice Green function.

    (1/2 pi) * sum over 0 < max(|k1|, |k2|) <= n of w_n(k) cos(k.x) / |k|^2
    with w_n(k) = 1 - max(|k1|, |k2|)/(n + 1).  The smoothing tames the
    conditional convergence of the raw series.
    """
    if mode_cutoff < 8:
        raise ValueError(f"mode_cutoff must be >= 8, got {mode_cutoff}")
    x = np.asarray(point, dtype=np.float64)
    wrapped = (x + np.pi) % TWO_PI - np.pi
    if np.hypot(*wrapped) < 1e-8:
        raise ValueError("green function is singular at the lattice origin")
    n = mode_cutoff
    ks = np.arange(-n, n + 1)
    total = 0.0
    for start in range(-n, n + 1, chunk):
        k1 = ks[(ks >= start) & (ks < start + chunk)]
        kk1, kk2 = np.meshgrid(k1, ks, indexing="ij")
        sup = np.maximum(np.abs(kk1), np.abs(kk2))
        inside = sup > 0
        ksq = np.where(inside, kk1**2 + kk2**2, 1)
        w = np.where(inside, 1.0 - sup / (n + 1.0), 0.0)
        total += float(np.sum(w / ksq * np.cos(kk1 * wrapped[0] + kk2 * wrapped[1])))
    return total / TWO_PI


@dataclass
class KernelTable:
    """Tabulated mollified interaction kernel T = V_N * K with spline lookup.

    Coefficients are That(k) = Vhat_N(k) * u_mult(k), so T applied to an
    empirical measure equals the Biot-Savart velocity of the deposited field.
    T is odd with T(0) = 0, which makes self-interaction terms vanish.
    """

    grid: GridSpec
    mollifier: Mollifier
    values: np.ndarray  # (2, G, G) samples of T
    spline_coeffs: np.ndarray = field(repr=False, default=None)

    MIN_CELLS_PER_RADIUS = 4.0

    def __post_init__(self):
        if self.spline_coeffs is None:
            self.spline_coeffs = spline_prefilter(self.values)

    @classmethod
    def build(cls, grid: GridSpec, mollifier: Mollifier) -> "KernelTable":
        cells = mollifier.support_radius / grid.spacing
        if cells <= cls.MIN_CELLS_PER_RADIUS:
            raise GridResolutionError(
                f"mollifier support radius {mollifier.support_radius:.4f} spans only "
                f"{cells:.2f} grid cells (need > {cls.MIN_CELLS_PER_RADIUS}); refine the "
                f"table grid or widen the mollifier"
            )
        vhat = mollifier.fourier_coeffs(grid)
        m1, m2 = velocity_multiplier(grid)
        t1 = grid.inverse(vhat * m1)
        t2 = grid.inverse(vhat * m2)
        return cls(grid=grid, mollifier=mollifier, values=np.stack([t1, t2]))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Spline-interpolated T at displacement vectors (n, 2)."""
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        out = _kernels.spline_gather(self.spline_coeffs, pts)
        return np.ascontiguousarray(out.T)

    def save(self, path_prefix: str) -> None:
        """Cache the two sample planes as binary field snapshots."""
        from .grid import write_snapshot

        for idx, suffix in ((0, "_u1.vxf"), (1, "_u2.vxf")):
            write_snapshot(SpectralField(self.grid, values=self.values[idx]),
                           f"{path_prefix}{suffix}")
