"""Command-line entry point.

Subcommands: validate, simulate-particles, solve-spde, converge, oracle.
Exit codes: 0 success/PASS, 2 numerical FAIL, 1 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .grid import GridSpec, SpectralField, sup_norm, write_snapshot
from .harness import (
    ConfigError,
    ExperimentConfig,
    beta_upper_bound,
    convergence_study,
    load_initial_data,
    resolve_truncation,
    validate_config,
)
from .mollifier import Mollifier, sample_initial_positions
from .noise import build_noise, generate_path, noise_fields_from_spec
from .particles import InteractionEngine, StepConfig
from .particles import run as run_particles
from .spde import SpdeConfig, solve

logger = logging.getLogger("vortexsde")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# analytic oracle suites
# ---------------------------------------------------------------------------

def _oracle_heat_decay():
    """Nonlinearity-null eigenmode must follow the exact heat decay."""
    grid = GridSpec(64)
    nu, dt, t_end = 0.1, 1e-3, 0.5
    model = build_noise((), grid)
    cfg = SpdeConfig(grid=grid, noise_model=model, nu=nu, dt=dt, variant="single")
    omega0 = SpectralField.from_function(grid, lambda x1, x2: np.cos(x1 + x2),
                                         zero_mean=True)
    path = generate_path(model, 1, dt, int(round(t_end / dt)), 0, 0)
    traj = solve(omega0, path, cfg, [0.0, t_end])
    exact = np.exp(-2.0 * nu * t_end) * omega0.values
    err = float(np.abs(traj.states[-1].omega.values - exact).max())
    ok = err <= 1e-6
    return ok, [f"max |omega(T) - exp(-2 nu T) omega0| = {err:.3e} (tol 1e-6)"]


def _oracle_biot_savart():
    from .biot_savart import velocity_from_vorticity
    from .grid import curl, divergence

    rng = np.random.default_rng(7)
    worst_curl, worst_div = 0.0, 0.0
    for g in (16, 32):
        grid = GridSpec(g)
        for _ in range(50):
            coeffs = np.zeros((g, g), dtype=complex)
            kmax = g // 4
            for _ in range(12):
                k1, k2 = rng.integers(-kmax, kmax + 1, size=2)
                if k1 == 0 and k2 == 0:
                    continue
                c = rng.standard_normal() + 1j * rng.standard_normal()
                coeffs[k1, k2] += c
                coeffs[-k1, -k2] += np.conj(c)
            omega = SpectralField(grid, coeffs=coeffs, zero_mean=True)
            u = velocity_from_vorticity(omega)
            worst_curl = max(worst_curl, float(np.abs(
                curl(u).coeffs - omega.coeffs).max()))
            worst_div = max(worst_div, float(np.abs(divergence(u).coeffs).max()))
    ok = worst_curl <= 1e-12 and worst_div <= 1e-12
    return ok, [f"max curl defect {worst_curl:.3e}, max divergence {worst_div:.3e} (tol 1e-12)"]


def _oracle_parseval():
    from .grid import sobolev_norm

    grid = GridSpec(32)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        vals = rng.standard_normal((32, 32))
        f = SpectralField(grid, values=vals)
        spectral = 2 * np.pi * np.sqrt(np.sum(np.abs(f.coeffs) ** 2))
        quad = np.sqrt((2 * np.pi) ** 2 * np.mean(vals**2))
        worst = max(worst, abs(sobolev_norm(f, 0.0, 2.0) - spectral),
                    abs(spectral - quad))
    ok = worst <= 1e-10
    return ok, [f"max Parseval defect {worst:.3e} (tol 1e-10)"]


def _oracle_transport():
    """Constant noise must translate the field rigidly."""
    grid = GridSpec(64)
    dt, t_end = 2.5e-4, 0.25
    sigma = (0.05, 0.08)
    model = build_noise(noise_fields_from_spec(
        {"preset": "constant", "vector": sigma}), grid)
    cfg = SpdeConfig(grid=grid, noise_model=model, nu=0.0, dt=dt,
                     form="stratonovich", variant="single")
    omega0 = SpectralField.from_function(grid, lambda x1, x2: np.cos(x1), zero_mean=True)
    n_steps = int(round(t_end / dt))
    path = generate_path(model, 1, dt, n_steps, 12, 0)
    traj = solve(omega0, path, cfg, [0.0, t_end])
    w_total = path.common.sum()
    x1, x2 = grid.mesh
    exact = np.cos(x1 - sigma[0] * w_total)
    err = float(np.abs(traj.states[-1].omega.values - exact).max())
    ok = err <= 1e-4
    return ok, [f"max rigid-transport error {err:.3e} at t={t_end} (tol 1e-4)"]


def _oracle_diffusion_msd():
    """Free particles: mean-squared displacement 4 nu t within 2 percent."""
    from .particles import ParticleEnsemble, TruncationF

    grid = GridSpec(32)
    nu, dt, t_end, n = 0.5, 1e-3, 0.5, 10_000
    model = build_noise((), grid)
    rng = np.random.default_rng(3)
    ens = ParticleEnsemble(
        positions_plus=rng.uniform(-np.pi, np.pi, (n, 2)),
        positions_minus=rng.uniform(-np.pi, np.pi, (n, 2)),
        gamma_plus=0.0, gamma_minus=0.0)
    pcfg = StepConfig(dt=dt, nu=nu, truncation=TruncationF(1.0))
    path = generate_path(model, n, dt, int(round(t_end / dt)), 5, 0)
    moll = Mollifier(beta=0.2, n_particles=n)
    out = run_particles(ens, path, pcfg, [0.0, t_end],
                        InteractionEngine(grid=grid, mollifier=moll), model,
                        keep_ensembles=True)
    disp = out.ensembles[-1].displacement_plus
    msd = float(np.mean(np.sum(disp**2, axis=1)))
    expected = 4.0 * nu * t_end
    rel = abs(msd - expected) / expected
    ok = rel <= 0.02
    return ok, [f"MSD = {msd:.5f} vs 4 nu t = {expected:.5f} (rel err {rel:.4f}, tol 0.02)"]


def _oracle_mesh_direct():
    from .mollifier import SignedInitialData
    from .particles import TruncationF, interaction_consistency

    grid = GridSpec(256)
    data = SignedInitialData.from_preset("cosine", grid)
    ens = sample_initial_positions(data, 64, 99)
    moll = Mollifier(beta=0.2, n_particles=64)
    engine = InteractionEngine(grid=grid, mollifier=moll)
    rel = interaction_consistency(ens, engine, TruncationF(1e6))
    ok = rel <= 1e-3
    return ok, [f"median mesh/direct drift disagreement {rel:.3e} (tol 1e-3)"]


ORACLES = {
    "heat-decay": _oracle_heat_decay,
    "biot-savart": _oracle_biot_savart,
    "parseval": _oracle_parseval,
    "transport": _oracle_transport,
    "diffusion-msd": _oracle_diffusion_msd,
    "mesh-direct": _oracle_mesh_direct,
}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _load_config(path, args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_yaml(path)
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    if getattr(args, "paths", None) is not None:
        cfg.paths = args.paths
    if getattr(args, "out", None) is not None:
        cfg.output_dir = args.out
    return cfg


def _cmd_validate(args) -> int:
    cfg = _load_config(args.config, args)
    notes = validate_config(cfg)
    print(f"config {args.config}: OK (hash {cfg.config_hash()})")
    print(f"beta bound 1/(4 + 2 alpha - 4/p) = {beta_upper_bound(cfg.alpha, cfg.p):.6f}, "
          f"beta = {cfg.beta}")
    for note in notes:
        print(note)
    return EXIT_OK


def _cmd_simulate_particles(args) -> int:
    cfg = _load_config(args.config, args)
    validate_config(cfg)
    grid = cfg.grid()
    data = load_initial_data(cfg, grid)
    model = build_noise(noise_fields_from_spec(cfg.noise), grid,
                        c_nu=cfg.noise.get("c_nu"))
    n = int(cfg.n_ladder[-1])
    from .harness import _per_n_seed
    seed = _per_n_seed(cfg.master_seed, n)
    path = generate_path(model, n, cfg.dt, cfg.n_steps(), seed, 0)
    ens = sample_initial_positions(data, n, np.random.SeedSequence(seed, spawn_key=(0, 9)))
    moll = Mollifier(beta=cfg.beta, n_particles=n)
    engine = InteractionEngine(grid=grid, mollifier=moll)
    pcfg = StepConfig(dt=cfg.dt, nu=cfg.nu, scheme=cfg.particle_scheme,
                      interaction=cfg.interaction,
                      truncation=resolve_truncation(cfg, data))
    obs = cfg.observation_times()
    out = run_particles(ens, path, pcfg, obs, engine, model,
                        keep_ensembles=args.positions_csv)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, t in enumerate(obs):
        write_snapshot(out.fields_plus[i], outdir / f"g_plus_{i:03d}.vxf")
        write_snapshot(out.fields_minus[i], outdir / f"g_minus_{i:03d}.vxf")
        write_snapshot(out.field_difference(i), outdir / f"g_{i:03d}.vxf")
    if args.positions_csv:
        with open(outdir / "particles.csv", "w", newline="\n") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "species", "i", "x1", "x2"])
            for i, t in enumerate(obs):
                snap = out.ensembles[i]
                for sp, pos in (("+", snap.positions_plus), ("-", snap.positions_minus)):
                    for j, (a, b) in enumerate(pos):
                        writer.writerow([f"{t:.12g}", sp, j, f"{a:.12g}", f"{b:.12g}"])
    print(f"particle run complete: N={n}, {len(obs)} snapshots in {outdir}")
    print(f"final masses: +{out.masses_plus[-1]:.6f} / -{out.masses_minus[-1]:.6f}")
    return EXIT_OK


def _cmd_solve_spde(args) -> int:
    cfg = _load_config(args.config, args)
    validate_config(cfg)
    grid = cfg.grid()
    data = load_initial_data(cfg, grid)
    model = build_noise(noise_fields_from_spec(cfg.noise), grid,
                        c_nu=cfg.noise.get("c_nu"))
    scfg = SpdeConfig(grid=grid, noise_model=model, nu=cfg.nu, dt=cfg.dt,
                      form=cfg.form, variant=cfg.variant,
                      truncation=resolve_truncation(cfg, data),
                      hessian_form=cfg.hessian_form)
    initial = (SpectralField(grid, values=data.omega0_plus),
               SpectralField(grid, values=data.omega0_minus)) if scfg.coupled \
        else data.omega0
    path = generate_path(model, 1, cfg.dt, cfg.n_steps(), cfg.master_seed, 0)
    obs = cfg.observation_times()
    traj = solve(initial, path, scfg, obs, collect_diagnostics=True)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i in range(len(obs)):
        write_snapshot(traj.states[i].omega, outdir / f"omega_{i:03d}.vxf")
    with open(outdir / "diagnostics.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "enstrophy", "energy", "max_u", "mass_plus", "mass_minus"])
        for row in traj.diagnostics:
            writer.writerow([f"{row['t']:.12g}", f"{row['enstrophy']:.12g}",
                             f"{row['energy']:.12g}", f"{row['max_u']:.12g}",
                             f"{row['mass_plus']:.12g}", f"{row['mass_minus']:.12g}"])
    final = traj.states[-1]
    print(f"field solve complete: {len(obs)} snapshots in {outdir}")
    print(f"final sup norm {sup_norm(final.omega):.6f}")
    return EXIT_OK


def _cmd_converge(args) -> int:
    cfg = _load_config(args.config, args)
    result = convergence_study(cfg)
    print(f"convergence study: {'PASS' if result.passed else 'FAIL'}")
    for n, stats in result.per_n.items():
        print(f"  N={n}: median sup error {stats['sup']['median']:.6g} "
              f"[{stats['sup']['q25']:.6g}, {stats['sup']['q75']:.6g}]")
    print(f"  slopes: {result.slopes}")
    print(f"  wrote {result.csv_path} and {result.json_path}")
    return EXIT_OK if result.passed else EXIT_NUMERICAL


def _cmd_oracle(args) -> int:
    try:
        suite = ORACLES[args.name]
    except KeyError:
        sys.stderr.write(f"unknown oracle {args.name!r}; "
                         f"choose from {sorted(ORACLES)}\n")
        return EXIT_USAGE
    ok, lines = suite()
    for line in lines:
        print(f"  {line}")
    print(f"oracle {args.name}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vortexsde",
                     description="stochastic vortex dynamics and field-solver harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config against all constraints")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("simulate-particles", help="run the particle system only")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--positions-csv", action="store_true")
    p.set_defaults(func=_cmd_simulate_particles)

    p = sub.add_parser("solve-spde", help="run the field solver only")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_solve_spde)

    p = sub.add_parser("converge", help="full convergence study over the ladder")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser("oracle", help="run a named analytic-oracle check suite")
    p.add_argument("name")
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    level = logging.WARNING
    if args.verbose:
        level = logging.INFO
    if args.quiet:
        level = logging.ERROR
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logger.info("kernel backend: %s", _kernels.BACKEND)
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            sys.stderr.write(f"config error: {problem}\n")
        return EXIT_USAGE
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
