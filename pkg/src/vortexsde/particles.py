"""Time integration of the signed interacting vortex system.

2N particles in two species carry weights +Gamma_plus/N and -Gamma_minus/N.
Each particle feels the capped mollified interaction

    F( Gamma_plus/N * sum_{j != i} T(X_i - X_j^+)
       - Gamma_minus/N * sum_j T(X_i - X_j^-) ),       T = V_N * K,

an independent Brownian kick sqrt(2 nu) dB_i, and the common transport noise
sum_k sigma_k(X_i) dW^k.  The Euler-Maruyama step integrates the Ito form,
whose drift picks up (1/2) sum_k (sigma_k . grad) sigma_k from the
Stratonovich conversion; the Heun step integrates the Stratonovich form
directly with a midpoint noise evaluation and no correction term.

Two interaction engines are provided.  `direct_pairwise` sums the tabulated
kernel over all pairs (self-terms excluded within a species), O(N^2).
`particle_mesh` deposits both species, applies the Biot-Savart multiplier to
the difference field, and gathers the gridded velocity back at the particle
positions -- algebraically the same convolution, since T * mu = K * (V_N * mu),
with the self-term harmless because T(0) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .biot_savart import KernelTable, velocity_multiplier
from .grid import GridSpec, SpectralField
from .interp import PeriodicSpline2D
from .mollifier import Mollifier, deposit
from .noise import NoiseModel, NoisePath

PI = np.pi
TWO_PI = 2.0 * np.pi


def wrap_torus(x: np.ndarray) -> np.ndarray:
    """Map coordinates into [-pi, pi)."""
    return (x + PI) % TWO_PI - PI


@dataclass(frozen=True)
class TruncationF:
    """Componentwise clamp of drift vectors to [-M, M]^2."""

    cap: float

    def __post_init__(self):
        if self.cap <= 0.0:
            raise ValueError(f"truncation cap must be positive, got {self.cap}")

    def apply(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, -self.cap, self.cap)


@dataclass
class ParticleEnsemble:
    """Positions of both species with uniform per-particle weights."""

    positions_plus: np.ndarray   # (N, 2) in [-pi, pi)
    positions_minus: np.ndarray  # (N, 2)
    gamma_plus: float
    gamma_minus: float
    displacement_plus: np.ndarray = None   # accumulated unwrapped increments
    displacement_minus: np.ndarray = None

    def __post_init__(self):
        self.positions_plus = wrap_torus(np.ascontiguousarray(self.positions_plus, float))
        self.positions_minus = wrap_torus(np.ascontiguousarray(self.positions_minus, float))
        if self.positions_plus.shape != self.positions_minus.shape:
            raise ValueError("species must have equal particle counts")
        if self.displacement_plus is None:
            self.displacement_plus = np.zeros_like(self.positions_plus)
        if self.displacement_minus is None:
            self.displacement_minus = np.zeros_like(self.positions_minus)

    @property
    def n(self) -> int:
        return len(self.positions_plus)


@dataclass(frozen=True)
class StepConfig:
    dt: float
    nu: float
    scheme: str = "euler_maruyama_ito"          # or "heun_stratonovich"
    interaction: str = "particle_mesh"          # or "direct_pairwise"
    truncation: TruncationF = field(default_factory=lambda: TruncationF(cap=1e6))

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.nu < 0.0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        if self.scheme not in ("euler_maruyama_ito", "heun_stratonovich"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.interaction not in ("direct_pairwise", "particle_mesh"):
            raise ValueError(f"unknown interaction mode {self.interaction!r}")


@dataclass
class InteractionEngine:
    """Holds the grid-dependent machinery shared by both interaction modes."""

    grid: GridSpec
    mollifier: Mollifier
    table: KernelTable = None

    def require_table(self) -> KernelTable:
        if self.table is None:
            self.table = KernelTable.build(self.grid, self.mollifier)
        return self.table


def _direct_drift(ensemble: ParticleEnsemble, table: KernelTable) -> tuple[np.ndarray, np.ndarray]:
    from . import _kernels

    n = ensemble.n
    wp = ensemble.gamma_plus / n
    wm = ensemble.gamma_minus / n
    coeffs = table.spline_coeffs
    xp, xm = ensemble.positions_plus, ensemble.positions_minus
    drift_p = (_kernels.pairwise_sum(xp, xp, coeffs, wp, True)
               - _kernels.pairwise_sum(xp, xm, coeffs, wm, False))
    drift_m = (_kernels.pairwise_sum(xm, xp, coeffs, wp, False)
               - _kernels.pairwise_sum(xm, xm, coeffs, wm, True))
    return drift_p, drift_m


def _mesh_drift(ensemble: ParticleEnsemble, engine: InteractionEngine
                ) -> tuple[np.ndarray, np.ndarray, tuple[SpectralField, SpectralField]]:
    grid = engine.grid
    gp, gm = deposit(ensemble, engine.mollifier, grid)
    diff_coeffs = gp.coeffs - gm.coeffs  # species masses cancel at k = 0
    m1, m2 = velocity_multiplier(grid)
    u = np.stack([grid.inverse(m1 * diff_coeffs), grid.inverse(m2 * diff_coeffs)])
    spline = PeriodicSpline2D(u)
    return spline(ensemble.positions_plus), spline(ensemble.positions_minus), (gp, gm)


def interaction_drift(ensemble: ParticleEnsemble, engine: InteractionEngine,
                      truncation: TruncationF, mode: str = "particle_mesh"
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Capped interaction drift for both species."""
    if ensemble.gamma_plus == 0.0 and ensemble.gamma_minus == 0.0:
        z = np.zeros_like(ensemble.positions_plus)
        return z, z.copy()
    if mode == "direct_pairwise":
        dp, dm = _direct_drift(ensemble, engine.require_table())
    elif mode == "particle_mesh":
        dp, dm, _ = _mesh_drift(ensemble, engine)
    else:
        raise ValueError(f"unknown interaction mode {mode!r}")
    return truncation.apply(dp), truncation.apply(dm)


def interaction_consistency(ensemble: ParticleEnsemble, engine: InteractionEngine,
                            truncation: TruncationF) -> float:
    """Median relative disagreement between the two interaction engines.

    Used as a resolution diagnostic; a value above ~1e-3 indicates the mesh
    is too coarse for the current mollifier width.
    """
    dp_direct, dm_direct = interaction_drift(ensemble, engine, truncation, "direct_pairwise")
    dp_mesh, dm_mesh = interaction_drift(ensemble, engine, truncation, "particle_mesh")
    direct = np.concatenate([dp_direct, dm_direct])
    mesh = np.concatenate([dp_mesh, dm_mesh])
    scale = np.median(np.linalg.norm(direct, axis=1))
    if scale == 0.0:
        return 0.0
    return float(np.median(np.linalg.norm(mesh - direct, axis=1)) / scale)


class ParticleBlowupError(RuntimeError):
    pass


def _check_finite(positions: np.ndarray, step_index: int, species: str) -> None:
    if not np.all(np.isfinite(positions)):
        bad = int(np.count_nonzero(~np.isfinite(positions).all(axis=1)))
        raise ParticleBlowupError(
            f"non-finite positions for {bad} particles of species {species} "
            f"at step {step_index}; reduce dt or raise the truncation cap")


def step(ensemble: ParticleEnsemble, drift: tuple[np.ndarray, np.ndarray],
         noise_slice: tuple[np.ndarray, np.ndarray, np.ndarray],
         config: StepConfig, model: NoiseModel, step_index: int = 0) -> ParticleEnsemble:
    """Advance one time step.  `drift` is the already-capped interaction pair;
    `noise_slice` is (dW_common (K,), dB_plus (N,2), dB_minus (N,2))."""
    dw, db_p, db_m = noise_slice
    dt = config.dt
    root2nu = np.sqrt(2.0 * config.nu)
    new_pos = []
    new_disp = []
    for pos, drift_s, db, disp in (
        (ensemble.positions_plus, drift[0], db_p, ensemble.displacement_plus),
        (ensemble.positions_minus, drift[1], db_m, ensemble.displacement_minus),
    ):
        sig = model.sigma_at(pos)  # (K, N, 2)
        common = np.einsum("knj,k->nj", sig, dw) if model.n_modes else 0.0
        if config.scheme == "euler_maruyama_ito":
            # Stratonovich-to-Ito conversion adds (1/2) sum_k sigma_k.grad sigma_k
            corr = 0.5 * model.correction_at(pos) if model.n_modes else 0.0
            incr = (drift_s + corr) * dt + root2nu * db + common
        else:
            predictor = wrap_torus(pos + drift_s * dt + root2nu * db + common)
            sig_mid = model.sigma_at(predictor)
            common_mid = np.einsum("knj,k->nj", sig_mid, dw) if model.n_modes else 0.0
            incr = drift_s * dt + root2nu * db + 0.5 * (common + common_mid)
        moved = wrap_torus(pos + incr)
        _check_finite(moved, step_index, "+" if pos is ensemble.positions_plus else "-")
        new_pos.append(moved)
        new_disp.append(disp + incr)
    return ParticleEnsemble(
        positions_plus=new_pos[0], positions_minus=new_pos[1],
        gamma_plus=ensemble.gamma_plus, gamma_minus=ensemble.gamma_minus,
        displacement_plus=new_disp[0], displacement_minus=new_disp[1],
    )


@dataclass
class ParticleRun:
    """Trajectory output at the observation times."""

    times: np.ndarray
    fields_plus: list        # deposited g^+ at each observation time
    fields_minus: list
    ensembles: list          # ensemble snapshots (positions only)
    masses_plus: np.ndarray
    masses_minus: np.ndarray

    def field_difference(self, index: int) -> SpectralField:
        return self.fields_plus[index] - self.fields_minus[index]


def run(ensemble: ParticleEnsemble, path: NoisePath, config: StepConfig,
        observation_times: np.ndarray, engine: InteractionEngine,
        model: NoiseModel, keep_ensembles: bool = False) -> ParticleRun:
    """Integrate over the path and deposit fields at the observation times."""
    obs = np.asarray(observation_times, dtype=float)
    steps_of_obs = obs / config.dt
    idx = np.rint(steps_of_obs).astype(int)
    if np.abs(steps_of_obs - idx).max() > 1e-9 or idx.max() > path.n_steps:
        raise ValueError("observation times must lie on the step grid")

    interacting = ensemble.gamma_plus != 0.0 or ensemble.gamma_minus != 0.0
    fields_p, fields_m, snaps, mp, mm = [], [], [], [], []

    def observe(ens):
        gp, gm = deposit(ens, engine.mollifier, engine.grid)
        fields_p.append(gp)
        fields_m.append(gm)
        mp.append(gp.integral())
        mm.append(gm.integral())
        if keep_ensembles:
            snaps.append(replace(ens))

    obs_set = {int(i) for i in idx}
    if 0 in obs_set:
        observe(ensemble)
    current = ensemble
    for n in range(int(idx.max())):
        if interacting:
            drift = interaction_drift(current, engine, config.truncation, config.interaction)
        else:
            z = np.zeros_like(current.positions_plus)
            drift = (z, z)
        noise_slice = (path.common[n], path.brownian_plus[n], path.brownian_minus[n])
        current = step(current, drift, noise_slice, config, model, step_index=n)
        if (n + 1) in obs_set:
            observe(current)
    return ParticleRun(times=obs, fields_plus=fields_p, fields_minus=fields_m,
                       ensembles=snaps, masses_plus=np.array(mp), masses_minus=np.array(mm))
