import numpy as np
import pytest

from vortexsde.grid import GridSpec, divergence
from vortexsde.noise import (
    build_noise,
    generate_path,
    ito_stratonovich_drift,
    noise_fields_from_spec,
    sigma_from_mode,
)

PI = np.pi


def finite_difference_self_advection(field, points, h=1e-6):
    """(sigma . grad) sigma via central differences, the conversion oracle."""
    out = np.zeros((len(points), 2))
    sig = field.eval(points)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        diff = (field.eval(points + e) - field.eval(points - e)) / (2 * h)
        out += sig[:, j:j + 1] * diff
    return out


class TestBuild:
    def test_single_mode_field(self):
        grid = GridSpec(64)
        model = build_noise(noise_fields_from_spec(
            {"preset": "single", "amplitude": 0.1, "mode": [1, 0]}), grid)
        x1, _ = grid.mesh
        assert np.abs(model.sigma_grid[0, 0]).max() < 1e-14
        assert np.abs(model.sigma_grid[0, 1] - 0.1 * np.cos(x1)).max() < 1e-14

    def test_divergence_free_every_preset(self):
        grid = GridSpec(64)
        specs = [
            {"preset": "single", "amplitude": 0.3, "mode": [2, 1]},
            {"preset": "constant", "vector": [0.2, -0.1]},
            {"preset": "sheared", "amplitude": 0.4},
            {"preset": "composite", "amplitude": 0.5},
            {"preset": "isotropic-shell", "radius": 1, "amplitude": 0.1},
        ]
        for spec in specs:
            model = build_noise(noise_fields_from_spec(spec), grid)
            for k in range(model.n_modes):
                from vortexsde.grid import SpectralField, VectorField
                vf = VectorField(SpectralField(grid, values=model.sigma_grid[k, 0]),
                                 SpectralField(grid, values=model.sigma_grid[k, 1]))
                assert np.abs(divergence(vf).coeffs).max() < 1e-12

    def test_rejects_duplicates_and_zero_mode(self):
        grid = GridSpec(16)
        fields = (sigma_from_mode((1, 0), 0.1), sigma_from_mode((1, 0), 0.2))
        with pytest.raises(ValueError, match="duplicate"):
            build_noise(fields, grid)
        with pytest.raises(ValueError, match="nonzero"):
            sigma_from_mode((0, 0), 0.1)

    def test_shell_preset_modes(self):
        fields = noise_fields_from_spec({"preset": "isotropic-shell",
                                         "radius": 1, "amplitude": 0.1})
        assert len(fields) == 4  # two half-lattice modes x two phases
        with pytest.raises(ValueError, match="lattice"):
            noise_fields_from_spec({"preset": "isotropic-shell", "radius": 1.8,
                                    "amplitude": 0.1})

    def test_budget_warning(self, caplog):
        grid = GridSpec(16)
        fields = noise_fields_from_spec({"preset": "single", "amplitude": 2.0})
        with caplog.at_level("WARNING"):
            build_noise(fields, grid, c_nu=1.0)
        assert any("noise budget" in rec.message for rec in caplog.records)


class TestCorrections:
    def test_single_mode_self_advection_vanishes(self, rng):
        field = sigma_from_mode((1, 1), 1.0)
        pts = rng.uniform(-PI, PI, (30, 2))
        assert np.abs(field.self_advection(pts)).max() < 1e-13
        fd = finite_difference_self_advection(field, pts)
        assert np.abs(fd).max() < 1e-6

    def test_constant_field_correction_zero(self, rng):
        (field,) = noise_fields_from_spec({"preset": "constant", "vector": [0.3, 0.4]})
        pts = rng.uniform(-PI, PI, (10, 2))
        assert np.abs(field.self_advection(pts)).max() == 0.0

    @pytest.mark.parametrize("spec", [
        {"preset": "single", "amplitude": 1.0, "mode": [1, 1]},
        {"preset": "sheared", "amplitude": 0.7},
        {"preset": "composite", "amplitude": 0.6},
    ])
    def test_against_finite_difference_oracle(self, spec, rng):
        (field,) = noise_fields_from_spec(spec)
        pts = rng.uniform(-PI, PI, (50, 2))
        exact = field.self_advection(pts)
        fd = finite_difference_self_advection(field, pts)
        assert np.abs(exact - fd).max() < 1e-6

    def test_composite_correction_nonzero(self, rng):
        (field,) = noise_fields_from_spec({"preset": "composite", "amplitude": 0.5})
        pts = rng.uniform(-PI, PI, (50, 2))
        corr = field.self_advection(pts)
        assert np.abs(corr).max() > 0.01
        # analytic: sigma = a(-sin x2, cos x1); sigma.grad sigma =
        # a^2 (-cos x1 cos x2, sin x1 sin x2)
        a = 0.5
        expected = np.stack([-a**2 * np.cos(pts[:, 0]) * np.cos(pts[:, 1]),
                             a**2 * np.sin(pts[:, 0]) * np.sin(pts[:, 1])], axis=1)
        assert np.abs(corr - expected).max() < 1e-12

    def test_spectral_grid_matches_finite_difference(self, rng):
        # grid-sampled correction against central differences on a 64^2 grid
        grid = GridSpec(64)
        model = build_noise(noise_fields_from_spec(
            {"preset": "composite", "amplitude": 1.0}), grid)
        h = grid.spacing
        s = model.sigma_grid[0]
        fd = np.zeros_like(s)
        for comp in range(2):
            d1 = (np.roll(s[comp], -1, axis=0) - np.roll(s[comp], 1, axis=0)) / (2 * h)
            d2 = (np.roll(s[comp], -1, axis=1) - np.roll(s[comp], 1, axis=1)) / (2 * h)
            fd[comp] = s[0] * d1 + s[1] * d2
        assert np.abs(model.correction_grid - fd).max() < 1e-2  # O(h^2) FD error
        assert np.abs(model.correction_grid - fd).max() < 5 * h * h

    def test_antiparallel_pair_doubles(self, rng):
        grid = GridSpec(32)
        base = noise_fields_from_spec({"preset": "composite", "amplitude": 0.5})
        flipped = type(base[0])(terms=tuple(
            type(t)(amplitude=(-t.amplitude[0], -t.amplitude[1]),
                    mode=t.mode, phase=t.phase) for t in base[0].terms))
        single = build_noise(base, grid)
        pair = build_noise((base[0], flipped), grid)
        assert np.abs(pair.correction_grid - 2.0 * single.correction_grid).max() < 1e-14

    def test_tensor_single_mode(self):
        grid = GridSpec(32)
        model = build_noise(noise_fields_from_spec(
            {"preset": "single", "amplitude": 1.0, "mode": [1, 0]}), grid)
        corr, tensor = ito_stratonovich_drift(model)
        x1, _ = grid.mesh
        assert np.abs(tensor[0, 0]).max() < 1e-14
        assert np.abs(tensor[0, 1]).max() < 1e-14
        assert np.abs(tensor[1, 1] - np.cos(x1) ** 2).max() < 1e-14
        assert tensor[1, 1].max() == pytest.approx(1.0, abs=1e-12)
        assert np.abs(corr.u1.values).max() < 1e-14

    def test_sum_sigma_sq_scaling(self):
        grid = GridSpec(32)
        one = build_noise(noise_fields_from_spec(
            {"preset": "single", "amplitude": 0.2}), grid)
        shell = build_noise(noise_fields_from_spec(
            {"preset": "isotropic-shell", "radius": 1, "amplitude": 0.2}), grid)
        scaled = build_noise(noise_fields_from_spec(
            {"preset": "single", "amplitude": 0.6}), grid)
        assert shell.sum_sigma_sq == pytest.approx(4 * one.sum_sigma_sq, rel=1e-12)
        assert scaled.sum_sigma_sq == pytest.approx(9 * one.sum_sigma_sq, rel=1e-12)


class TestPathGeneration:
    def _model(self, k=2):
        grid = GridSpec(16)
        fields = noise_fields_from_spec(
            {"preset": "isotropic-shell", "radius": 1, "amplitude": 0.1})[:k]
        return build_noise(fields, grid)

    def test_deterministic(self):
        model = self._model()
        a = generate_path(model, 10, 0.01, 50, 123, 4)
        b = generate_path(model, 10, 0.01, 50, 123, 4)
        assert np.array_equal(a.common, b.common)
        assert np.array_equal(a.brownian_plus, b.brownian_plus)
        c = generate_path(model, 10, 0.01, 50, 123, 5)
        assert not np.array_equal(a.common, c.common)

    def test_increment_variance(self):
        model = self._model(k=1)
        dt = 0.02
        path = generate_path(model, 2, dt, 500_000, 9, 0)
        var = path.common.var()
        assert abs(var - dt) < 0.01 * dt

    def test_cross_path_decorrelation(self):
        model = self._model(k=1)
        n = 1_000_000
        a = generate_path(model, 1, 1.0, n, 31, 0).common[:, 0]
        b = generate_path(model, 1, 1.0, n, 31, 1).common[:, 0]
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr) <= 3.0 / np.sqrt(n)

    def test_shapes_and_validation(self):
        model = self._model(k=3)
        path = generate_path(model, 7, 0.1, 11, 0, 0)
        assert path.common.shape == (11, 3)
        assert path.brownian_plus.shape == (11, 7, 2)
        assert path.brownian_minus.shape == (11, 7, 2)
        with pytest.raises(ValueError):
            generate_path(model, 7, -0.1, 11, 0, 0)


class TestParticleEvaluation:
    def test_sigma_at_matches_grid(self, rng):
        grid = GridSpec(64)
        model = build_noise(noise_fields_from_spec(
            {"preset": "composite", "amplitude": 0.3}), grid)
        x1, x2 = grid.mesh
        pts = np.stack([x1.ravel(), x2.ravel()], axis=1)
        vals = model.sigma_at(pts)
        assert np.abs(vals[0, :, 0].reshape(64, 64) - model.sigma_grid[0, 0]).max() < 1e-14
        corr = model.correction_at(pts)
        assert np.abs(corr[:, 1].reshape(64, 64) - model.correction_grid[1]).max() < 1e-14
