"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The two convergence studies (the deterministic ladder and the shared-noise
ladder) are expensive and feed several criteria, so they run once as module
fixtures.  Run with `pytest -s tests/test_acceptance.py` to see the
per-criterion lines as they complete.
"""

import time

import numpy as np
import pytest

from conftest import random_trig_field
from vortexsde.biot_savart import velocity_from_vorticity
from vortexsde.grid import (
    GridSpec,
    SpectralField,
    curl,
    divergence,
    sobolev_norm,
    sup_norm,
    vector_sobolev_norm,
)
from vortexsde.harness import ExperimentConfig, convergence_study, load_initial_data
from vortexsde.mollifier import Mollifier, SignedInitialData, sample_initial_positions
from vortexsde.noise import NoisePath, build_noise, generate_path, noise_fields_from_spec
from vortexsde.particles import (
    InteractionEngine,
    ParticleEnsemble,
    StepConfig,
    TruncationF,
    interaction_consistency,
    step,
    wrap_torus,
)
from vortexsde.particles import run as run_particles
from vortexsde.spde import SpdeConfig, solve, weak_form_residual

PI = np.pi


def report(number, text, passed):
    print(f"[criterion {number:2d}] {text}: {'PASS' if passed else 'FAIL'}")
    assert passed


def study_config(tmp_path_factory, tag, **overrides):
    base = dict(
        output_dir=str(tmp_path_factory.mktemp(f"study_{tag}")),
        master_seed=2024,
        paths=8,
        grid_size=128,
        t_end=0.25,
        dt=0.25 / 160,
        n_observations=33,
        nu=0.05,
        initial_data={"preset": "cosine-mix"},
        noise={"preset": "off"},
        n_ladder=[256, 1024, 4096],
        beta=0.2,
        interaction="particle_mesh",
        variant="coupled",
        truncation_cap=50.0,
        alpha=0.5,
        p=4.0,
        eta=0.4,
        epsilon=0.75,
        fail_threshold=0.8,
    )
    base.update(overrides)
    return ExperimentConfig.from_dict(base)


@pytest.fixture(scope="module")
def deterministic_study(tmp_path_factory):
    cfg = study_config(tmp_path_factory, "det")
    t0 = time.perf_counter()
    result = convergence_study(cfg)
    return cfg, result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def noisy_study(tmp_path_factory):
    cfg = study_config(tmp_path_factory, "noise", paths=16,
                       noise={"preset": "single", "amplitude": 0.1, "mode": [1, 0]})
    t0 = time.perf_counter()
    result = convergence_study(cfg)
    return cfg, result, time.perf_counter() - t0


def median_sup_over_paths(rows, attr):
    per_path = {}
    for r in rows:
        key = (r.n, r.path)
        per_path[key] = max(per_path.get(key, 0.0), getattr(r, attr))
    out = {}
    for (n, _), v in per_path.items():
        out.setdefault(n, []).append(v)
    return {n: float(np.median(vals)) for n, vals in out.items()}


def test_criterion_01_heat_eigenmode():
    grid = GridSpec(64)
    nu, dt, t_end = 0.1, 1e-3, 0.5
    model = build_noise((), grid)
    cfg = SpdeConfig(grid=grid, noise_model=model, nu=nu, dt=dt)
    omega0 = SpectralField.from_function(grid, lambda a, b: np.cos(a + b),
                                         zero_mean=True)
    path = generate_path(model, 1, dt, int(round(t_end / dt)), 0, 0)
    t0 = time.perf_counter()
    traj = solve(omega0, path, cfg, [0.0, 0.25, t_end], collect_diagnostics=True)
    elapsed = time.perf_counter() - t0
    exact = np.exp(-2.0 * nu * t_end) * omega0.values
    err = np.abs(traj.states[-1].omega.values - exact).max()
    test_criterion_01_heat_eigenmode.sup_history = [
        sup_norm(s.omega) for s in traj.states]
    report(1, f"heat-eigenmode max error {err:.3e} <= 1e-6, runtime {elapsed:.2f}s < 5s",
           err <= 1e-6 and elapsed < 5.0)


def test_criterion_02_biot_savart_identities(rng):
    t0 = time.perf_counter()
    worst_curl = worst_div = 0.0
    for g in (16, 32):
        grid = GridSpec(g)
        for _ in range(50):
            omega = random_trig_field(grid, rng)
            u = velocity_from_vorticity(omega)
            scale = max(1.0, np.abs(omega.coeffs).max())
            worst_curl = max(worst_curl,
                             np.abs(curl(u).coeffs - omega.coeffs).max() / scale)
            worst_div = max(worst_div, np.abs(divergence(u).coeffs).max() / scale)
    elapsed = time.perf_counter() - t0
    report(2, f"curl defect {worst_curl:.2e}, div defect {worst_div:.2e} <= 1e-12, "
              f"runtime {elapsed:.2f}s < 5s",
           worst_curl <= 1e-12 and worst_div <= 1e-12 and elapsed < 5.0)


def test_criterion_03_norm_fidelity(rng):
    grid = GridSpec(32)
    # Parseval
    worst_parseval = 0.0
    for _ in range(20):
        f = random_trig_field(grid, rng, zero_mean=False)
        spectral = 2 * PI * np.sqrt(np.sum(np.abs(f.coeffs) ** 2))
        worst_parseval = max(worst_parseval,
                             abs(sobolev_norm(f, 0.0, 2.0) - spectral)
                             / max(1.0, spectral))
    # refined-grid quadrature oracle for the fractional L^p norm
    from vortexsde.grid import fractional_bessel
    worst_lp = 0.0
    for _ in range(5):
        f = random_trig_field(grid, rng, kmax=7)
        g = fractional_bessel(f, 0.7)
        fine = GridSpec(64)
        padded = np.zeros((64, 64), dtype=complex)
        k = np.fft.fftfreq(32, d=1.0 / 32).astype(int)
        for a in range(32):
            for b in range(32):
                padded[k[a], k[b]] = g.coeffs[a, b]
        oracle = ((2 * PI) ** 2 * np.mean(
            np.abs(SpectralField(fine, coeffs=padded).values) ** 4)) ** 0.25
        worst_lp = max(worst_lp, abs(sobolev_norm(f, 0.7, 4.0) - oracle) / oracle)
    # velocity-operator norm bound with constant sqrt(2)
    bound_ok = True
    count = 0
    for a in (0.0, 0.3, 1.0):
        for _ in range(34):
            v = random_trig_field(grid, rng)
            u = velocity_from_vorticity(v)
            lhs = vector_sobolev_norm(u, 1.0 - a, 2.0)
            rhs = np.sqrt(2.0) * sobolev_norm(v, -a, 2.0)
            bound_ok &= lhs <= rhs * (1 + 1e-12)
            count += 1
    report(3, f"Parseval defect {worst_parseval:.2e} <= 1e-12; fractional-norm vs "
              f"refined-grid {worst_lp:.2e} <= 1e-6; sqrt(2) operator bound on "
              f"{count} fields {'holds' if bound_ok else 'violated'}",
           worst_parseval <= 1e-12 and worst_lp <= 1e-6 and bound_ok)


def test_criterion_04_ito_stratonovich_consistency():
    grid = GridSpec(64)
    t_end, nu = 0.25, 0.05
    model = build_noise(noise_fields_from_spec(
        {"preset": "single", "amplitude": 0.5}), grid)
    omega0 = SpectralField.from_function(
        grid, lambda a, b: np.cos(a) + np.cos(2 * b), zero_mean=True)
    dt_fine = t_end / 800
    n_fine = 800
    t0 = time.perf_counter()
    rms, dts = [], []
    for stride in (8, 4, 2):
        dt = dt_fine * stride
        dts.append(dt)
        diffs = []
        for pidx in range(32):
            fine = generate_path(model, 1, dt_fine, n_fine, 77, pidx)
            common = fine.common.reshape(n_fine // stride, stride, -1).sum(axis=1)
            path = NoisePath(dt=dt, n_steps=n_fine // stride, common=common,
                             brownian_plus=np.zeros((n_fine // stride, 1, 2)),
                             brownian_minus=np.zeros((n_fine // stride, 1, 2)),
                             master_seed=77, path_index=pidx)
            end_i = solve(omega0, path,
                          SpdeConfig(grid=grid, noise_model=model, nu=nu, dt=dt),
                          [t_end]).states[-1].omega
            end_s = solve(omega0, path,
                          SpdeConfig(grid=grid, noise_model=model, nu=nu, dt=dt,
                                     form="stratonovich"),
                          [t_end]).states[-1].omega
            diffs.append(sobolev_norm(end_i - end_s, 0.0, 2.0))
        rms.append(float(np.sqrt(np.mean(np.square(diffs)))))
    elapsed = time.perf_counter() - t0
    slope = float(np.polyfit(np.log(dts), np.log(rms), 1)[0])
    decreasing = rms[0] > rms[1] > rms[2]
    report(4, f"Ito-vs-Heun RMS {['%.3e' % r for r in rms]} over shared paths, "
              f"slope {slope:.3f} >= 0.5, runtime {elapsed:.1f}s < 120s",
           decreasing and slope >= 0.5 and elapsed < 120.0)


def test_criterion_05_rigid_transport():
    grid = GridSpec(64)
    t_end, sigma = 0.25, (0.05, 0.08)
    spec = {"preset": "constant", "vector": list(sigma)}
    model = build_noise(noise_fields_from_spec(spec), grid)
    omega0 = SpectralField.from_function(grid, lambda a, b: np.cos(a), zero_mean=True)
    errs = {}
    sup_hist = []
    for form, dt in (("ito", 2.5e-4), ("stratonovich", 1e-3)):
        cfg = SpdeConfig(grid=grid, noise_model=model, nu=0.0, dt=dt, form=form)
        path = generate_path(model, 1, dt, int(round(t_end / dt)), 12, 0)
        traj = solve(omega0, path, cfg, [0.0, t_end])
        w_total = path.common.sum()
        exact = np.cos(grid.mesh[0] - sigma[0] * w_total)
        errs[form] = np.abs(traj.states[-1].omega.values - exact).max()
        sup_hist.extend(sup_norm(s.omega) for s in traj.states)
    test_criterion_05_rigid_transport.sup_history = sup_hist

    # particle side: common constant noise preserves pairwise distances
    n, dt_p, steps = 64, 1e-2, 100
    rng = np.random.default_rng(6)
    ens = ParticleEnsemble(positions_plus=rng.uniform(-PI, PI, (n, 2)),
                           positions_minus=rng.uniform(-PI, PI, (n, 2)),
                           gamma_plus=0.0, gamma_minus=0.0)
    pcfg = StepConfig(dt=dt_p, nu=0.0)
    path = generate_path(model, n, dt_p, steps, 6, 0)

    def pairwise(e):
        d = e.positions_plus[:, None, :] - e.positions_plus[None, :, :]
        return np.hypot(*np.moveaxis(wrap_torus(d), -1, 0))

    d0 = pairwise(ens)
    cur = ens
    zero = (np.zeros((n, 2)), np.zeros((n, 2)))
    for i in range(steps):
        cur = step(cur, zero, (path.common[i], 0.0 * path.brownian_plus[i],
                               0.0 * path.brownian_minus[i]), pcfg, model, i)
    dist_drift = np.abs(pairwise(cur) - d0).max()
    report(5, f"rigid transport error ito {errs['ito']:.2e} / heun "
              f"{errs['stratonovich']:.2e} <= 1e-4; pairwise distances drift "
              f"{dist_drift:.2e} (exact up to rounding)",
           errs["ito"] <= 1e-4 and errs["stratonovich"] <= 1e-4
           and dist_drift <= 1e-12)


def test_criterion_06_particle_diffusion_law():
    grid = GridSpec(16)
    model = build_noise((), grid)
    nu, dt, t_end, n = 0.5, 1e-3, 0.5, 10_000
    rng = np.random.default_rng(3)
    ens = ParticleEnsemble(positions_plus=rng.uniform(-PI, PI, (n, 2)),
                           positions_minus=rng.uniform(-PI, PI, (n, 2)),
                           gamma_plus=0.0, gamma_minus=0.0)
    cfg = StepConfig(dt=dt, nu=nu)
    path = generate_path(model, n, dt, int(round(t_end / dt)), 5, 0)
    eng = InteractionEngine(grid=grid, mollifier=Mollifier(beta=0.2, n_particles=n))
    out = run_particles(ens, path, cfg, [0.0, 0.25, t_end], eng, model,
                        keep_ensembles=True)
    rels = []
    for i, t in ((1, 0.25), (2, t_end)):
        disp = out.ensembles[i].displacement_plus
        msd = np.mean(np.sum(disp**2, axis=1))
        rels.append(abs(msd - 4 * nu * t) / (4 * nu * t))
    report(6, f"mean-squared displacement off by {max(rels):.4f} "
              f"relative (<= 0.02) at two times", max(rels) <= 0.02)


def test_criterion_07_deposition_conservation(deterministic_study, noisy_study):
    checked = 0
    worst = 0.0
    for cfg, result, _ in (deterministic_study, noisy_study):
        data = load_initial_data(cfg, cfg.grid())
        for row in result.rows:
            worst = max(worst,
                        abs(row.mass_plus - data.gamma_plus) / data.gamma_plus,
                        abs(row.mass_minus - data.gamma_minus) / data.gamma_minus)
            checked += 1
    report(7, f"mass conservation over {checked} observation rows: worst relative "
              f"deviation {worst:.2e} <= 1e-6", worst <= 1e-6 and checked > 0)


def test_criterion_08_mesh_direct_equivalence():
    grid = GridSpec(256)
    data = SignedInitialData.from_preset("cosine", grid)
    rels = []
    for seed in (3, 99, 2024):
        ens = sample_initial_positions(data, 64, seed)
        eng = InteractionEngine(grid=grid, mollifier=Mollifier(beta=0.2, n_particles=64))
        rels.append(interaction_consistency(ens, eng, TruncationF(1e6)))
    report(8, f"median mesh/direct drift disagreement {max(rels):.2e} <= 1e-3 "
              f"on 3 random 64-particle states", max(rels) <= 1e-3)


def test_criterion_09_main_theorem_trend_deterministic(deterministic_study):
    cfg, result, elapsed = deterministic_study
    medians = median_sup_over_paths(result.rows, "err_sup")
    ladder = [int(n) for n in cfg.n_ladder]
    vals = [medians[n] for n in ladder]
    decreasing = all(a > b for a, b in zip(vals, vals[1:]))
    report(9, f"sup-error medians over N {ladder}: "
              f"{['%.4f' % v for v in vals]} strictly decreasing, "
              f"runtime {elapsed:.0f}s < 600s",
           decreasing and result.passed and elapsed < 600.0)


def test_criterion_10_main_theorem_trend_with_noise(noisy_study):
    cfg, result, elapsed = noisy_study
    ladder = [int(n) for n in cfg.n_ladder]
    sups = median_sup_over_paths(result.rows, "err_sup")
    etas = median_sup_over_paths(result.rows, "err_eta_p")
    sup_vals = [sups[n] for n in ladder]
    eta_vals = [etas[n] for n in ladder]
    dec_sup = all(a > b for a, b in zip(sup_vals, sup_vals[1:]))
    dec_eta = all(a > b for a, b in zip(eta_vals, eta_vals[1:]))
    report(10, f"shared-noise medians sup {['%.4f' % v for v in sup_vals]} and "
               f"smoothness-norm {['%.4f' % v for v in eta_vals]} strictly "
               f"decreasing, runtime {elapsed:.0f}s < 1800s",
           dec_sup and dec_eta and elapsed < 1800.0)


def test_criterion_11_weak_form_residual():
    # deterministic exact oracle
    grid = GridSpec(32)
    nu, dt, t_end = 0.02, 1e-4, 0.25
    model0 = build_noise((), grid)
    cfg = SpdeConfig(grid=grid, noise_model=model0, nu=nu, dt=dt)
    omega0 = SpectralField.from_function(grid, lambda a, b: np.cos(a + b),
                                         zero_mean=True)
    path = generate_path(model0, 1, dt, int(round(t_end / dt)), 0, 0)
    traj = solve(omega0, path, cfg, [0.0, t_end], store_dense=True)
    phi = SpectralField.from_function(grid, lambda a, b: np.cos(a + b) + 0.3 * np.cos(a))
    res_exact = weak_form_residual(traj, path, phi, cfg).max()

    # stochastic decay
    model = build_noise(noise_fields_from_spec(
        {"preset": "single", "amplitude": 0.3}), grid)
    omega1 = SpectralField.from_function(
        grid, lambda a, b: np.cos(a) + np.cos(2 * b), zero_mean=True)
    rms = []
    dts = (2e-3, 1e-3, 5e-4)
    for dt_s in dts:
        vals = []
        for pidx in range(32):
            p = generate_path(model, 1, dt_s, int(round(0.2 / dt_s)), 5, pidx)
            c = SpdeConfig(grid=grid, noise_model=model, nu=0.05, dt=dt_s)
            t = solve(omega1, p, c, [0.2], store_dense=True)
            vals.append(weak_form_residual(t, p, phi, c)[-1])
        rms.append(float(np.sqrt(np.mean(np.square(vals)))))
    slope = float(np.polyfit(np.log(dts), np.log(rms), 1)[0])
    decreasing = rms[0] > rms[1] > rms[2]
    report(11, f"exact-oracle residual {res_exact:.2e} <= 1e-6; stochastic RMS "
               f"decay slope {slope:.2f} >= 0.5 (at least the square-root rate)",
           res_exact <= 1e-6 and decreasing and slope >= 0.5)


def test_criterion_12_maximum_principle(deterministic_study, noisy_study):
    # rerun one representative field-solver path per study configuration and
    # track the sup norm densely; include the single-mode runs from the
    # criterion 1 and 5 setups via their recorded histories
    worst_ratio = 0.0
    for cfg, _, _ in (deterministic_study, noisy_study):
        grid = cfg.grid()
        data = load_initial_data(cfg, grid)
        model = build_noise(noise_fields_from_spec(cfg.noise), grid)
        scfg = SpdeConfig(grid=grid, noise_model=model, nu=cfg.nu, dt=cfg.dt,
                          variant="coupled")
        path = generate_path(model, 1, cfg.dt, cfg.n_steps(), cfg.master_seed, 0)
        initial = (SpectralField(grid, values=data.omega0_plus),
                   SpectralField(grid, values=data.omega0_minus))
        traj = solve(initial, path, scfg, cfg.observation_times())
        sup0 = sup_norm(traj.states[0].omega)
        for state in traj.states:
            worst_ratio = max(worst_ratio, sup_norm(state.omega) / sup0)
    for history_owner in (test_criterion_01_heat_eigenmode,
                          test_criterion_05_rigid_transport):
        hist = getattr(history_owner, "sup_history", None)
        if hist:
            worst_ratio = max(worst_ratio, max(hist) / hist[0])
    report(12, f"max-norm never exceeds {worst_ratio:.4f} x initial (<= 1.05) "
               f"across acceptance field runs", worst_ratio <= 1.05)


def test_criterion_13_reproducibility(deterministic_study):
    cfg, result, _ = deterministic_study
    first = open(result.csv_path, "rb").read()
    rerun = convergence_study(cfg)  # same config, same seed, same output path
    second = open(rerun.csv_path, "rb").read()
    report(13, f"rerun of the deterministic study with the same master seed "
               f"produced byte-identical CSV ({len(first)} bytes)",
           first == second and len(first) > 0)
