"""Pseudo-spectral solver for the stochastic vorticity equation.

Canonical Ito form advanced here (single-field variant; the coupled variant
runs the same right-hand side for each signed component with the shared
velocity u = K*(omega_plus - omega_minus)):

    d omega = [ nu Lap omega - A(u).grad omega
                + 1/2 sum_k (sigma_k . grad sigma_k) . grad omega
                + 1/2 sum_k sigma_k^T (Hess omega) sigma_k ] dt
              - sum_k sigma_k . grad omega  dW^k,

with A the identity or the componentwise cap F.  The noise sign is fixed so
that the field is advected along +sigma, the same direction the particle
system moves under the shared increments: for constant sigma and nu = 0 the
solution is the rigid translation omega(t, x) = omega_0(x - sigma W_t).

The two correction terms combine, for divergence-free sigma, into the single
divergence-form expression (1/2) div( S grad omega ) with
S = sum_k sigma_k sigma_k^T; that is the default evaluation and the
pointwise Hessian contraction is kept as a cross-check.

Diffusion is integrated exactly by the factor exp(-nu |k|^2 dt) each step, so
only advection and noise limit the step size (advective CFL enforced).
Quadratic terms are formed pointwise on the 2/3-dealiased grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .biot_savart import velocity_from_vorticity
from .grid import (
    TWO_PI,
    GridSpec,
    SpectralField,
    VectorField,
    dealias,
    sobolev_norm,
)
from .noise import NoiseModel
from .particles import TruncationF

PI = np.pi


@dataclass(frozen=True)
class SpdeConfig:
    grid: GridSpec
    noise_model: NoiseModel
    nu: float
    dt: float
    form: str = "ito"                      # "ito" | "stratonovich"
    variant: str = "single"                # single | coupled | truncated_single | truncated_coupled
    truncation: TruncationF | None = None
    hessian_form: str = "divergence"       # "divergence" | "pointwise"
    cfl_limit: float = 0.5

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.nu < 0.0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        if self.form not in ("ito", "stratonovich"):
            raise ValueError(f"unknown form {self.form!r}")
        if self.variant not in ("single", "coupled", "truncated_single", "truncated_coupled"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.hessian_form not in ("divergence", "pointwise"):
            raise ValueError(f"unknown hessian_form {self.hessian_form!r}")
        if self.truncated and self.truncation is None:
            raise ValueError("truncated variants require a truncation cap")

    @property
    def coupled(self) -> bool:
        return self.variant in ("coupled", "truncated_coupled")

    @property
    def truncated(self) -> bool:
        return self.variant in ("truncated_single", "truncated_coupled")

    @cached_property
    def heat_factor(self) -> np.ndarray:
        return np.exp(-self.nu * self.grid.ksq * self.dt)


@dataclass
class SpdeState:
    """Solver state: one zero-mean field, or a signed pair for the coupled
    variants."""

    species: tuple[SpectralField, ...]

    @property
    def coupled(self) -> bool:
        return len(self.species) == 2

    @property
    def omega(self) -> SpectralField:
        if self.coupled:
            return (self.species[0] - self.species[1]).project_zero_mean()
        return self.species[0]

    @property
    def omega_plus(self) -> SpectralField:
        return self.species[0]

    @property
    def omega_minus(self) -> SpectralField:
        return self.species[1]

    @classmethod
    def single(cls, omega: SpectralField) -> "SpdeState":
        return cls(species=(dealias(omega.project_zero_mean()),))

    @classmethod
    def coupled_pair(cls, plus: SpectralField, minus: SpectralField) -> "SpdeState":
        return cls(species=(dealias(plus), dealias(minus)))


class CflError(RuntimeError):
    pass


def _velocity(state: SpdeState, config: SpdeConfig, check_cfl: bool = True) -> VectorField:
    u = velocity_from_vorticity(state.omega)
    if check_cfl:
        umax = u.max_norm()
        cfl = umax * config.dt * config.grid.modes_per_axis / TWO_PI
        if cfl > config.cfl_limit:
            raise CflError(
                f"advective CFL {cfl:.3f} exceeds {config.cfl_limit} "
                f"(max|u| = {umax:.3f}); reduce dt below "
                f"{config.cfl_limit * TWO_PI / (umax * config.grid.modes_per_axis):.3e}")
    return u


def _effective_velocity_values(u: VectorField, config: SpdeConfig) -> np.ndarray:
    vals = np.stack([u.u1.values, u.u2.values])
    if config.truncated:
        vals = config.truncation.apply(vals)
    return vals


def _grad_values(omega: SpectralField) -> np.ndarray:
    d1, d2 = omega.grid.deriv_multipliers
    c = omega.coeffs
    return np.stack([omega.grid.inverse(d1 * c), omega.grid.inverse(d2 * c)])


def _advection_values(omega: SpectralField, u_values: np.ndarray) -> np.ndarray:
    grad = _grad_values(omega)
    return u_values[0] * grad[0] + u_values[1] * grad[1]


def _correction_values(omega: SpectralField, config: SpdeConfig) -> np.ndarray:
    """(1/2) [ (sigma.grad sigma).grad omega + sigma^T H omega sigma ] summed over k."""
    model = config.noise_model
    if model.n_modes == 0:
        return np.zeros_like(omega.values)
    grid = omega.grid
    grad = _grad_values(omega)
    if config.hessian_form == "divergence":
        # 1/2 div(S grad omega); equals both correction terms for div-free sigma
        s = model.tensor_grid
        flux0 = s[0, 0] * grad[0] + s[0, 1] * grad[1]
        flux1 = s[1, 0] * grad[0] + s[1, 1] * grad[1]
        d1, d2 = grid.deriv_multipliers
        div_coeffs = d1 * grid.forward(flux0) + d2 * grid.forward(flux1)
        return 0.5 * grid.inverse(div_coeffs)
    # pointwise: grad contraction + explicit Hessian contraction
    corr = model.correction_grid
    first = corr[0] * grad[0] + corr[1] * grad[1]
    d1, d2 = grid.deriv_multipliers
    c = omega.coeffs
    h11 = grid.inverse(d1 * d1 * c)
    h12 = grid.inverse(d1 * d2 * c)
    h22 = grid.inverse(d2 * d2 * c)
    s = model.tensor_grid
    second = s[0, 0] * h11 + 2.0 * s[0, 1] * h12 + s[1, 1] * h22
    return 0.5 * (first + second)


def _noise_term_values(omega: SpectralField, model: NoiseModel, dw: np.ndarray) -> np.ndarray:
    """- sum_k (sigma_k . grad omega) dW^k as grid values."""
    if model.n_modes == 0:
        return np.zeros_like(omega.values)
    grad = _grad_values(omega)
    w_eff = np.einsum("kigh,k->igh", model.sigma_grid, dw)
    return -(w_eff[0] * grad[0] + w_eff[1] * grad[1])


def _nondiffusive_drift(omega: SpectralField, u_values: np.ndarray,
                        config: SpdeConfig, include_corrections: bool) -> np.ndarray:
    vals = -_advection_values(omega, u_values)
    if include_corrections:
        vals = vals + _correction_values(omega, config)
    return vals


def drift_rhs(state: SpdeState, config: SpdeConfig) -> tuple[SpectralField, ...]:
    """Full Ito drift, diffusion included, per species (for oracle checks)."""
    u_values = _effective_velocity_values(_velocity(state, config), config)
    out = []
    for omega in state.species:
        nondiff = _nondiffusive_drift(omega, u_values, config, include_corrections=True)
        rhs = config.grid.forward(nondiff) - config.nu * config.grid.ksq * omega.coeffs
        out.append(dealias(SpectralField(config.grid, coeffs=rhs,
                                         zero_mean=omega.zero_mean)))
    return tuple(out)


def _assemble(omega: SpectralField, bracket_values: np.ndarray,
              config: SpdeConfig) -> SpectralField:
    grid = config.grid
    coeffs = (omega.coeffs + grid.forward(bracket_values)) * config.heat_factor
    coeffs = coeffs * grid.dealias_mask
    if omega.zero_mean:
        coeffs = coeffs.copy()
        coeffs[0, 0] = 0.0
    if not np.all(np.isfinite(coeffs)):
        raise RuntimeError("non-finite spectral coefficients; the step blew up")
    return SpectralField(grid, coeffs=coeffs, zero_mean=omega.zero_mean)


def step_ito(state: SpdeState, dw: np.ndarray, config: SpdeConfig) -> SpdeState:
    """Euler-Maruyama on the Ito form with exact diffusion factor."""
    u_values = _effective_velocity_values(_velocity(state, config), config)
    model = config.noise_model
    new = []
    for omega in state.species:
        bracket = (config.dt * _nondiffusive_drift(omega, u_values, config, True)
                   + _noise_term_values(omega, model, dw))
        new.append(_assemble(omega, bracket, config))
    return SpdeState(species=tuple(new))


def step_stratonovich(state: SpdeState, dw: np.ndarray, config: SpdeConfig) -> SpdeState:
    """Heun predictor-corrector: midpoint noise, no conversion terms."""
    u_values = _effective_velocity_values(_velocity(state, config), config)
    model = config.noise_model
    new = []
    for omega in state.species:
        drift = config.dt * _nondiffusive_drift(omega, u_values, config, False)
        noise0 = _noise_term_values(omega, model, dw)
        predictor = _assemble(omega, drift + noise0, config)
        noise1 = _noise_term_values(predictor, model, dw)
        new.append(_assemble(omega, drift + 0.5 * (noise0 + noise1), config))
    return SpdeState(species=tuple(new))


def advance(state: SpdeState, dw: np.ndarray, config: SpdeConfig) -> SpdeState:
    if config.form == "ito":
        return step_ito(state, dw, config)
    return step_stratonovich(state, dw, config)


@dataclass
class SpdeTrajectory:
    times: np.ndarray
    states: list                         # SpdeState at observation times
    dense_times: np.ndarray = None       # every step time, when stored
    dense_states: list = None
    diagnostics: list = field(default_factory=list)  # per-step dict rows


def _diagnostic_row(t: float, state: SpdeState, config: SpdeConfig) -> dict:
    omega = state.omega
    u = velocity_from_vorticity(omega)
    row = {
        "t": t,
        "enstrophy": sobolev_norm(omega, 0.0, 2.0) ** 2,
        "energy": 0.5 * (sobolev_norm(u.u1, 0.0, 2.0) ** 2 + sobolev_norm(u.u2, 0.0, 2.0) ** 2),
        "max_u": u.max_norm(),
        "mass_plus": state.species[0].integral() if state.coupled else 0.0,
        "mass_minus": state.species[1].integral() if state.coupled else 0.0,
    }
    return row


def solve(initial, path, config: SpdeConfig, observation_times,
          store_dense: bool = False, collect_diagnostics: bool = False) -> SpdeTrajectory:
    """Advance the state over the noise path, recording observation times.

    `initial` is a zero-mean SpectralField for the single variants, or a
    (plus, minus) pair for the coupled ones.  The path's common increments
    must match config.dt.
    """
    if abs(path.dt - config.dt) > 1e-12 * max(path.dt, config.dt):
        raise ValueError(f"path dt {path.dt} does not match config dt {config.dt}")
    if config.coupled:
        if not isinstance(initial, (tuple, list)) or len(initial) != 2:
            raise ValueError("coupled variants need an (omega_plus, omega_minus) pair")
        state = SpdeState.coupled_pair(*initial)
    else:
        state = SpdeState.single(initial)

    obs = np.asarray(observation_times, dtype=float)
    steps_of_obs = obs / config.dt
    idx = np.rint(steps_of_obs).astype(int)
    if np.abs(steps_of_obs - idx).max() > 1e-9 or idx.max() > path.n_steps:
        raise ValueError("observation times must lie on the step grid")
    obs_set = {int(i) for i in idx}

    states, dense_states, dense_times, diagnostics = [], [], [], []
    if 0 in obs_set:
        states.append(state)
    if store_dense:
        dense_states.append(state)
        dense_times.append(0.0)
    if collect_diagnostics:
        diagnostics.append(_diagnostic_row(0.0, state, config))

    for n in range(int(idx.max())):
        state = advance(state, path.common[n], config)
        t = (n + 1) * config.dt
        if store_dense:
            dense_states.append(state)
            dense_times.append(t)
        if collect_diagnostics:
            diagnostics.append(_diagnostic_row(t, state, config))
        if (n + 1) in obs_set:
            states.append(state)

    return SpdeTrajectory(
        times=obs, states=states,
        dense_times=np.array(dense_times) if store_dense else None,
        dense_states=dense_states if store_dense else None,
        diagnostics=diagnostics,
    )


def weak_form_residual(traj: SpdeTrajectory, path, phi: SpectralField,
                       config: SpdeConfig) -> np.ndarray:
    """|LHS - RHS| of the weak formulation along a densely stored trajectory.

    Time integrals use left-point quadrature and the stochastic integral the
    discrete increments, so the residual measures how closely the discrete
    trajectory satisfies the defining identity

        <w(t), phi> = <w(0), phi> + int [ <w, u.grad phi> + nu <w, Lap phi>
            + 1/2 <w, (sigma_k.grad sigma_k).grad phi>
            + 1/2 <w, sigma_k^T (H phi) sigma_k> ] ds
            + sum_k int <w, sigma_k.grad phi> dW^k.
    """
    if traj.dense_states is None:
        raise ValueError("weak_form_residual requires a densely stored trajectory")
    if config.coupled:
        raise ValueError("residual evaluation is defined for the single variants")
    grid = config.grid
    model = config.noise_model
    cell = TWO_PI**2 / grid.modes_per_axis**2

    def pair(a_values, b_values):
        return cell * float(np.sum(a_values * b_values))

    grad_phi = _grad_values(phi)
    d1, d2 = grid.deriv_multipliers
    lap_phi = grid.inverse(np.real(d1 * d1 + d2 * d2) * phi.coeffs)
    sigma_dot_grad_phi = np.einsum("kigh,igh->kgh", model.sigma_grid, grad_phi) \
        if model.n_modes else np.zeros((0,) + grad_phi.shape[1:])
    corr_pair = None
    if model.n_modes:
        c = phi.coeffs
        h11 = grid.inverse(d1 * d1 * c)
        h12 = grid.inverse(d1 * d2 * c)
        h22 = grid.inverse(d2 * d2 * c)
        s = model.tensor_grid
        hess_term = s[0, 0] * h11 + 2.0 * s[0, 1] * h12 + s[1, 1] * h22
        grad_term = model.correction_grid[0] * grad_phi[0] + model.correction_grid[1] * grad_phi[1]
        corr_pair = 0.5 * (grad_term + hess_term)

    omega0 = traj.dense_states[0].omega
    base = pair(omega0.values, phi.values)
    residuals = np.zeros(len(traj.dense_states))
    accum = 0.0
    for n, state in enumerate(traj.dense_states):
        omega = state.omega
        residuals[n] = abs(pair(omega.values, phi.values) - base - accum)
        if n == len(traj.dense_states) - 1:
            break
        u = _velocity(state, config, check_cfl=False)
        u_values = _effective_velocity_values(u, config)
        adv = u_values[0] * grad_phi[0] + u_values[1] * grad_phi[1]
        increment = pair(omega.values, adv) + config.nu * pair(omega.values, lap_phi)
        if corr_pair is not None:
            increment += pair(omega.values, corr_pair)
        accum += config.dt * increment
        for k in range(model.n_modes):
            accum += path.common[n, k] * pair(omega.values, sigma_dot_grad_phi[k])
    return residuals
