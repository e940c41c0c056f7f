"""Periodic scalar/vector fields on the square torus [-pi, pi)^2.

Fields live on a uniform G x G grid with nodes x_j = -pi + 2*pi*j/G and are
mirrored by Fourier coefficients over integer wavenumbers k in
{-G/2, ..., G/2 - 1}^2.  The transform pair is normalised so that

    fhat(k) = (2*pi)^-2 * integral f(x) exp(-i k.x) dx
            = mean_j f(x_j) exp(-i k.x_j),
    f(x)    = sum_k fhat(k) exp(i k.x).

With this choice the discrete Parseval identity is exact:
mean_j |f(x_j)|^2 = sum_k |fhat(k)|^2, so the L^2 norm over the torus equals
(2*pi) * sqrt(sum |fhat|^2).  That single (2*pi) factor is the only place the
domain area enters any norm below.

Derivative operators use the exact multipliers i*k1, i*k2.  Modes on the
Nyquist row/column (k = -G/2) carry an ambiguous sign on an even grid and
would break conjugate symmetry under odd multipliers, so every derivative
operator annihilates them.  All solver states are dealiased well below the
Nyquist frequency, so this convention costs nothing there.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

TWO_PI = 2.0 * np.pi

SNAPSHOT_MAGIC = b"VXF1"
_SNAPSHOT_HEADER = struct.Struct("<4sIddI")
_FLAG_ZERO_MEAN = 1


class GridResolutionError(ValueError):
    """Raised when a grid is too coarse for the requested operation."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform discretisation of [-pi, pi)^2 with an even number of modes."""

    modes_per_axis: int
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        g = self.modes_per_axis
        if g < 4 or g % 2 != 0:
            raise ValueError(f"modes_per_axis must be even and >= 4, got {g}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError(f"dealias_fraction must be in (0, 1], got {self.dealias_fraction}")

    @property
    def size(self) -> int:
        return self.modes_per_axis

    @property
    def spacing(self) -> float:
        return TWO_PI / self.modes_per_axis

    @cached_property
    def points(self) -> np.ndarray:
        x = -np.pi + self.spacing * np.arange(self.modes_per_axis)
        x.setflags(write=False)
        return x

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x1, x2 = np.meshgrid(self.points, self.points, indexing="ij")
        x1.setflags(write=False)
        x2.setflags(write=False)
        return x1, x2

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        k = np.fft.fftfreq(self.modes_per_axis, d=1.0 / self.modes_per_axis).astype(np.int64)
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        k1.setflags(write=False)
        k2.setflags(write=False)
        return k1, k2

    @cached_property
    def ksq(self) -> np.ndarray:
        k1, k2 = self.wavenumbers
        out = (k1 * k1 + k2 * k2).astype(np.float64)
        out.setflags(write=False)
        return out

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(-i k . (-pi, -pi)) = (-1)^(k1 + k2); shifts the FFT origin to -pi
        k1, k2 = self.wavenumbers
        p = 1.0 - 2.0 * ((k1 + k2) & 1)
        p.setflags(write=False)
        return p

    @cached_property
    def _nyquist_mask(self) -> np.ndarray:
        k1, k2 = self.wavenumbers
        nyq = self.modes_per_axis // 2
        m = (k1 == -nyq) | (k2 == -nyq)
        m.setflags(write=False)
        return m

    @cached_property
    def deriv_multipliers(self) -> tuple[np.ndarray, np.ndarray]:
        """(i*k1, i*k2) with the Nyquist row/column removed."""
        k1, k2 = self.wavenumbers
        keep = ~self._nyquist_mask
        d1 = 1j * k1 * keep
        d2 = 1j * k2 * keep
        d1.setflags(write=False)
        d2.setflags(write=False)
        return d1, d2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        k1, k2 = self.wavenumbers
        cutoff = self.dealias_fraction * self.modes_per_axis / 2.0
        m = np.maximum(np.abs(k1), np.abs(k2)) <= cutoff
        m.setflags(write=False)
        return m

    def forward(self, values: np.ndarray) -> np.ndarray:
        return self._phase * np.fft.fft2(values) / self.modes_per_axis**2

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifft2(coeffs * self._phase)) * self.modes_per_axis**2


class SpectralField:
    """Real scalar field with lazily synchronised grid values and coefficients.

    Instances are immutable after construction; every operation returns a new
    field.  ``zero_mean`` marks fields constrained to vanishing integral, in
    which case the k = 0 coefficient is pinned to exactly zero.
    """

    __slots__ = ("grid", "zero_mean", "_values", "_coeffs")

    def __init__(self, grid: GridSpec, values=None, coeffs=None, zero_mean: bool = False):
        if values is None and coeffs is None:
            raise ValueError("provide values or coeffs")
        self.grid = grid
        self.zero_mean = zero_mean
        g = grid.modes_per_axis
        if values is not None:
            values = np.ascontiguousarray(values, dtype=np.float64)
            if values.shape != (g, g):
                raise ValueError(f"values shape {values.shape} != grid {(g, g)}")
            values.setflags(write=False)
        if coeffs is not None:
            coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
            if coeffs.shape != (g, g):
                raise ValueError(f"coeffs shape {coeffs.shape} != grid {(g, g)}")
            if zero_mean:
                coeffs = coeffs.copy()
                coeffs[0, 0] = 0.0
            coeffs.setflags(write=False)
        self._values = values
        self._coeffs = coeffs

    @classmethod
    def from_values(cls, grid: GridSpec, values, zero_mean: bool = False) -> "SpectralField":
        return cls(grid, values=values, zero_mean=zero_mean)

    @classmethod
    def from_coeffs(cls, grid: GridSpec, coeffs, zero_mean: bool = False) -> "SpectralField":
        return cls(grid, coeffs=coeffs, zero_mean=zero_mean)

    @classmethod
    def from_function(cls, grid: GridSpec, func: Callable, zero_mean: bool = False) -> "SpectralField":
        x1, x2 = grid.mesh
        return cls(grid, values=np.asarray(func(x1, x2), dtype=np.float64), zero_mean=zero_mean)

    @classmethod
    def zeros(cls, grid: GridSpec, zero_mean: bool = False) -> "SpectralField":
        g = grid.modes_per_axis
        return cls(grid, values=np.zeros((g, g)), zero_mean=zero_mean)

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            v = self.grid.inverse(self._coeffs)
            v.setflags(write=False)
            self._values = v
        return self._values

    @property
    def coeffs(self) -> np.ndarray:
        if self._coeffs is None:
            c = self.grid.forward(self._values)
            if self.zero_mean:
                c[0, 0] = 0.0
            c.setflags(write=False)
            self._coeffs = c
        return self._coeffs

    def project_zero_mean(self) -> "SpectralField":
        c = self.coeffs.copy()
        c[0, 0] = 0.0
        return SpectralField(self.grid, coeffs=c, zero_mean=True)

    def mean(self) -> float:
        return float(np.real(self.coeffs[0, 0]))

    def integral(self) -> float:
        return TWO_PI**2 * self.mean()

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, values=self.values + other.values,
                             zero_mean=self.zero_mean and other.zero_mean)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, values=self.values - other.values,
                             zero_mean=self.zero_mean and other.zero_mean)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, values=self.values * scalar, zero_mean=self.zero_mean)

    __rmul__ = __mul__


@dataclass(frozen=True)
class VectorField:
    """Pair of scalar components (u1, u2) on a common grid."""

    u1: SpectralField
    u2: SpectralField
    divergence_free: bool = False

    @property
    def grid(self) -> GridSpec:
        return self.u1.grid

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u1.values, self.u2.values)

    def max_norm(self) -> float:
        return float(self.magnitude().max())


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def forward_transform(field: SpectralField) -> np.ndarray:
    """Coefficient table of the field (also cached on the field itself)."""
    return field.coeffs


def fractional_bessel(field: SpectralField, s: float) -> SpectralField:
    """Apply (I - Laplace)^(s/2), i.e. the multiplier (1 + |k|^2)^(s/2)."""
    mult = (1.0 + field.grid.ksq) ** (s / 2.0)
    coeffs = field.coeffs * mult
    return SpectralField(field.grid, coeffs=coeffs, zero_mean=field.zero_mean)


def sobolev_norm(field: SpectralField, s: float, p: float) -> float:
    """Bessel-potential norm: L^p quadrature norm of (I - Laplace)^(s/2) f.

    For p = 2 the value is computed from the exact spectral sum
    (2*pi) * sqrt(sum (1+|k|^2)^s |fhat(k)|^2), which the grid quadrature
    reproduces to rounding by Parseval.
    """
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    if p == 2.0:
        mult = (1.0 + field.grid.ksq) ** s
        return TWO_PI * float(np.sqrt(np.sum(mult * np.abs(field.coeffs) ** 2)))
    g = fractional_bessel(field, s)
    return float((TWO_PI**2 * np.mean(np.abs(g.values) ** p)) ** (1.0 / p))


def vector_sobolev_norm(vf: VectorField, s: float, p: float) -> float:
    """Norm of a vector field: pointwise Euclidean magnitude in L^p."""
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    if p == 2.0:
        return float(np.hypot(sobolev_norm(vf.u1, s, 2.0), sobolev_norm(vf.u2, s, 2.0)))
    g1 = fractional_bessel(vf.u1, s).values
    g2 = fractional_bessel(vf.u2, s).values
    mag = np.hypot(g1, g2)
    return float((TWO_PI**2 * np.mean(mag**p)) ** (1.0 / p))


def sup_norm(field: SpectralField) -> float:
    return float(np.abs(field.values).max())


def gradient(field: SpectralField) -> VectorField:
    d1, d2 = field.grid.deriv_multipliers
    c = field.coeffs
    return VectorField(
        SpectralField(field.grid, coeffs=d1 * c),
        SpectralField(field.grid, coeffs=d2 * c),
    )


def divergence(vf: VectorField) -> SpectralField:
    d1, d2 = vf.grid.deriv_multipliers
    return SpectralField(vf.grid, coeffs=d1 * vf.u1.coeffs + d2 * vf.u2.coeffs, zero_mean=True)


def curl(vf: VectorField) -> SpectralField:
    """Scalar curl d1 u2 - d2 u1."""
    d1, d2 = vf.grid.deriv_multipliers
    return SpectralField(vf.grid, coeffs=d1 * vf.u2.coeffs - d2 * vf.u1.coeffs, zero_mean=True)


def laplacian(field: SpectralField) -> SpectralField:
    d1, d2 = field.grid.deriv_multipliers
    # d1*d1 + d2*d2 = -(k1^2 + k2^2) on the retained modes
    mult = np.real(d1 * d1 + d2 * d2)
    return SpectralField(field.grid, coeffs=mult * field.coeffs, zero_mean=field.zero_mean)


def dealias(field: SpectralField) -> SpectralField:
    coeffs = field.coeffs * field.grid.dealias_mask
    return SpectralField(field.grid, coeffs=coeffs, zero_mean=field.zero_mean)


# ---------------------------------------------------------------------------
# snapshot I/O
# ---------------------------------------------------------------------------

def write_snapshot(field: SpectralField, path) -> None:
    """Binary snapshot: magic 'VXF1', G, domain bounds, flags, row-major f64."""
    g = field.grid.modes_per_axis
    flags = _FLAG_ZERO_MEAN if field.zero_mean else 0
    header = _SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, g, -np.pi, np.pi, flags)
    data = np.ascontiguousarray(field.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_snapshot(path, dealias_fraction: float = 2.0 / 3.0) -> SpectralField:
    with open(path, "rb") as fh:
        header = fh.read(_SNAPSHOT_HEADER.size)
        magic, g, xmin, xmax, flags = _SNAPSHOT_HEADER.unpack(header)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a field snapshot (magic {magic!r})")
        if not (np.isclose(xmin, -np.pi) and np.isclose(xmax, np.pi)):
            raise ValueError(f"{path}: unsupported domain [{xmin}, {xmax}]")
        raw = fh.read(8 * g * g)
        if len(raw) != 8 * g * g:
            raise ValueError(f"{path}: truncated snapshot")
    values = np.frombuffer(raw, dtype="<f8").reshape(g, g)
    grid = GridSpec(g, dealias_fraction=dealias_fraction)
    return SpectralField(grid, values=values.copy(), zero_mean=bool(flags & _FLAG_ZERO_MEAN))


def export_coefficient_magnitudes(field: SpectralField, path) -> None:
    """Debug CSV of |fhat(k)| sorted by wavenumber."""
    k1, k2 = field.grid.wavenumbers
    mags = np.abs(field.coeffs)
    rows = sorted(zip(k1.ravel(), k2.ravel(), mags.ravel()))
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k1", "k2", "magnitude"])
        for a, b, m in rows:
            writer.writerow([int(a), int(b), f"{m:.16e}"])
