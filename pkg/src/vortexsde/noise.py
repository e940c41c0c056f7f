"""Divergence-free transport-noise fields and Wiener increment generation.

Each noise field sigma_k is a short trigonometric sum

    sigma_k(x) = sum_t a_t * {cos, sin}(m_t . x),      a_t . m_t = 0,

which keeps div(sigma_k) = 0 termwise.  Fields are evaluated analytically at
particle positions and sampled on the grid for the solver, so both sides of a
coupled run see literally the same noise geometry.

For single-mode fields the self-advection sigma.grad(sigma) vanishes
identically (the amplitude is orthogonal to the wavevector); the "composite"
preset overlays two modes to exercise a genuinely nonzero correction.

Increments are produced by a counter-based Philox generator keyed on
(master_seed, path_index, stream), so any path can be regenerated bitwise
identically regardless of execution order across paths.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, SpectralField, VectorField, divergence

logger = logging.getLogger(__name__)

_STREAM_COMMON = 0
_STREAM_BROWNIAN_PLUS = 1
_STREAM_BROWNIAN_MINUS = 2

DIV_FREE_RTOL = 1e-12


@dataclass(frozen=True)
class SigmaTerm:
    amplitude: tuple[float, float]
    mode: tuple[int, int]
    phase: str  # "cos" or "sin"

    def __post_init__(self):
        if self.phase not in ("cos", "sin"):
            raise ValueError(f"phase must be cos or sin, got {self.phase!r}")
        a = np.asarray(self.amplitude, dtype=float)
        m = np.asarray(self.mode, dtype=float)
        if abs(float(a @ m)) > 1e-12 * max(1.0, float(np.abs(a).max())):
            raise ValueError(f"amplitude {tuple(a)} not orthogonal to mode {tuple(m)}")


@dataclass(frozen=True)
class SigmaField:
    """One noise field: a divergence-free trigonometric polynomial."""

    terms: tuple[SigmaTerm, ...]

    def eval(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        out = np.zeros((len(pts), 2))
        for t in self.terms:
            arg = pts[:, 0] * t.mode[0] + pts[:, 1] * t.mode[1]
            osc = np.cos(arg) if t.phase == "cos" else np.sin(arg)
            out[:, 0] += t.amplitude[0] * osc
            out[:, 1] += t.amplitude[1] * osc
        return out

    def eval_jacobian(self, points: np.ndarray) -> np.ndarray:
        """Jacobian J[i, j] = d sigma_i / d x_j at each point; (n, 2, 2)."""
        pts = np.atleast_2d(points)
        out = np.zeros((len(pts), 2, 2))
        for t in self.terms:
            arg = pts[:, 0] * t.mode[0] + pts[:, 1] * t.mode[1]
            dosc = -np.sin(arg) if t.phase == "cos" else np.cos(arg)
            for i in range(2):
                for j in range(2):
                    out[:, i, j] += t.amplitude[i] * t.mode[j] * dosc
        return out

    def self_advection(self, points: np.ndarray) -> np.ndarray:
        """(sigma . grad) sigma at each point; (n, 2)."""
        sig = self.eval(points)
        jac = self.eval_jacobian(points)
        return np.einsum("nij,nj->ni", jac, sig)


def sigma_from_mode(mode, amplitude: float, phase: str = "cos") -> SigmaField:
    """Standard unit-mode field a * (m_perp / |m|) * {cos, sin}(m . x)."""
    m1, m2 = int(mode[0]), int(mode[1])
    if m1 == 0 and m2 == 0:
        raise ValueError("mode must be nonzero; use the 'constant' preset for uniform noise")
    norm = float(np.hypot(m1, m2))
    amp = (-amplitude * m2 / norm, amplitude * m1 / norm)
    return SigmaField(terms=(SigmaTerm(amplitude=amp, mode=(m1, m2), phase=phase),))


def noise_fields_from_spec(spec: dict) -> tuple[SigmaField, ...]:
    """Build the sigma family from a config mapping (see presets below)."""
    preset = spec.get("preset", "off")
    amp = float(spec.get("amplitude", 0.1))
    if preset == "off":
        return ()
    if preset == "single":
        mode = tuple(spec.get("mode", (1, 0)))
        return (sigma_from_mode(mode, amp, spec.get("phase", "cos")),)
    if preset == "constant":
        vec = spec.get("vector", (amp, 0.0))
        return (SigmaField(terms=(SigmaTerm(amplitude=(float(vec[0]), float(vec[1])),
                                            mode=(0, 0), phase="cos"),)),)
    if preset == "sheared":
        # a * (sin x2, 0): zero self-advection but nonzero Hessian contraction
        return (SigmaField(terms=(SigmaTerm(amplitude=(amp, 0.0), mode=(0, 1), phase="sin"),)),)
    if preset == "composite":
        # two overlapping modes in one field; sigma.grad(sigma) != 0
        return (SigmaField(terms=(
            SigmaTerm(amplitude=(0.0, amp), mode=(1, 0), phase="cos"),
            SigmaTerm(amplitude=(-amp, 0.0), mode=(0, 1), phase="sin"),
        )),)
    if preset == "isotropic-shell":
        radius_sq = int(round(float(spec.get("radius", 1)) ** 2))
        fields = []
        r = int(np.ceil(np.sqrt(radius_sq)))
        for m1 in range(-r, r + 1):
            for m2 in range(-r, r + 1):
                if m1 * m1 + m2 * m2 != radius_sq:
                    continue
                if m1 < 0 or (m1 == 0 and m2 <= 0):
                    continue  # half lattice: -m duplicates +m up to sign
                for phase in ("cos", "sin"):
                    fields.append(sigma_from_mode((m1, m2), amp, phase))
        if not fields:
            raise ValueError(f"no lattice modes with |m|^2 = {radius_sq}")
        return tuple(fields)
    if preset == "modes":
        entries = spec.get("modes", [])
        return tuple(sigma_from_mode(tuple(e["m"]), float(e["amplitude"]),
                                     e.get("phase", "cos")) for e in entries)
    raise ValueError(f"unknown noise preset {preset!r}")


@dataclass
class NoiseModel:
    """Finite noise family with precomputed grid samples and corrections."""

    grid: GridSpec
    fields: tuple[SigmaField, ...]
    sigma_grid: np.ndarray = field(repr=False, default=None)      # (K, 2, G, G)
    correction_grid: np.ndarray = field(repr=False, default=None)  # (2, G, G), sum_k
    tensor_grid: np.ndarray = field(repr=False, default=None)      # (2, 2, G, G), sum_k
    sum_sigma_sq: float = 0.0

    @property
    def n_modes(self) -> int:
        return len(self.fields)

    def sigma_at(self, points: np.ndarray) -> np.ndarray:
        """(K, n, 2) noise fields at the given points."""
        pts = np.atleast_2d(points)
        if not self.fields:
            return np.zeros((0, len(pts), 2))
        return np.stack([f.eval(pts) for f in self.fields])

    def correction_at(self, points: np.ndarray) -> np.ndarray:
        """sum_k (sigma_k . grad) sigma_k at the given points; (n, 2)."""
        pts = np.atleast_2d(points)
        out = np.zeros((len(pts), 2))
        for f in self.fields:
            out += f.self_advection(pts)
        return out


def build_noise(fields, grid: GridSpec, c_nu: float | None = None) -> NoiseModel:
    """Assemble a NoiseModel, rejecting duplicates and checking div-freeness."""
    fields = tuple(fields)
    singles = [(f.terms[0].mode, f.terms[0].phase) for f in fields if len(f.terms) == 1]
    if len(set(singles)) != len(singles):
        raise ValueError("duplicate (mode, phase) entries in the noise family")

    g = grid.modes_per_axis
    x1, x2 = grid.mesh
    k = len(fields)
    sigma_grid = np.zeros((k, 2, g, g))
    corr = np.zeros((2, g, g))
    tensor = np.zeros((2, 2, g, g))
    pts = np.stack([x1.ravel(), x2.ravel()], axis=1)
    total = 0.0
    for idx, f in enumerate(fields):
        vals = f.eval(pts)  # (G*G, 2)
        sigma_grid[idx, 0] = vals[:, 0].reshape(g, g)
        sigma_grid[idx, 1] = vals[:, 1].reshape(g, g)
        adv = f.self_advection(pts)
        corr[0] += adv[:, 0].reshape(g, g)
        corr[1] += adv[:, 1].reshape(g, g)
        for i in range(2):
            for j in range(2):
                tensor[i, j] += (vals[:, i] * vals[:, j]).reshape(g, g)
        total += float((vals[:, 0] ** 2 + vals[:, 1] ** 2).max())

        vf = VectorField(SpectralField(grid, values=sigma_grid[idx, 0]),
                         SpectralField(grid, values=sigma_grid[idx, 1]))
        div = divergence(vf)
        peak = max(np.abs(vf.u1.coeffs).max(), np.abs(vf.u2.coeffs).max())
        if peak > 0 and np.abs(div.coeffs).max() > DIV_FREE_RTOL * peak:
            raise ValueError(f"noise field {idx} is not divergence-free")

    if c_nu is not None and total > c_nu:
        logger.warning(
            "noise budget exceeded: sum ||sigma sigma^T||_inf = %.4g > C_nu = %.4g; "
            "well-posedness constants are not guaranteed", total, c_nu)
    return NoiseModel(grid=grid, fields=fields, sigma_grid=sigma_grid,
                      correction_grid=corr, tensor_grid=tensor, sum_sigma_sq=total)


def ito_stratonovich_drift(model: NoiseModel) -> tuple[VectorField, np.ndarray]:
    """Raw conversion ingredients: (sum_k sigma_k.grad sigma_k, sum_k sigma_k sigma_k^T).

    Consumers attach their own coefficients; the consistent Ito form of both
    the field equation and the particle system uses 1/2 on each.
    """
    corr = VectorField(
        SpectralField(model.grid, values=model.correction_grid[0]),
        SpectralField(model.grid, values=model.correction_grid[1]),
    )
    return corr, model.tensor_grid


@dataclass
class NoisePath:
    """Wiener increments for one realisation: common and per-particle."""

    dt: float
    n_steps: int
    common: np.ndarray          # (n_steps, K)
    brownian_plus: np.ndarray   # (n_steps, N, 2)
    brownian_minus: np.ndarray  # (n_steps, N, 2)
    master_seed: int
    path_index: int

    def common_slice(self, step: int) -> np.ndarray:
        return self.common[step]


def generate_path(model: NoiseModel, n_particles: int, dt: float, n_steps: int,
                  master_seed: int, path_index: int) -> NoisePath:
    """Normal(0, dt) increments from per-stream Philox counters."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    root = np.sqrt(dt)

    def stream(stream_id: int, shape) -> np.ndarray:
        seq = np.random.SeedSequence(master_seed, spawn_key=(path_index, stream_id))
        rng = np.random.Generator(np.random.Philox(seq))
        return root * rng.standard_normal(size=shape)

    return NoisePath(
        dt=dt,
        n_steps=n_steps,
        common=stream(_STREAM_COMMON, (n_steps, model.n_modes)),
        brownian_plus=stream(_STREAM_BROWNIAN_PLUS, (n_steps, n_particles, 2)),
        brownian_minus=stream(_STREAM_BROWNIAN_MINUS, (n_steps, n_particles, 2)),
        master_seed=master_seed,
        path_index=path_index,
    )
