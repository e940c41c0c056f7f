import numpy as np
import pytest

from conftest import random_trig_field
from vortexsde.biot_savart import (
    KernelTable,
    green_function_eval,
    kernel_field,
    kernel_l1_estimate,
    velocity_from_vorticity,
    velocity_multiplier,
)
from vortexsde.grid import (
    GridResolutionError,
    GridSpec,
    SpectralField,
    curl,
    divergence,
    sobolev_norm,
    vector_sobolev_norm,
)
from vortexsde.mollifier import Mollifier

TWO_PI = 2.0 * np.pi


class TestVelocityMultiplier:
    def test_conjugate_symmetry_and_incompressibility(self):
        grid = GridSpec(16)
        m1, m2 = velocity_multiplier(grid)
        k1, k2 = grid.wavenumbers
        idx = (-np.arange(16)) % 16
        assert np.abs(m1 - np.conj(m1[idx][:, idx])).max() < 1e-15
        assert np.abs(k1 * m1 + k2 * m2).max() < 1e-15
        assert m1[0, 0] == 0.0 and m2[0, 0] == 0.0


class TestVelocityFromVorticity:
    def test_single_mode(self):
        grid = GridSpec(16)
        omega = SpectralField.from_function(grid, lambda x1, x2: np.cos(x1),
                                            zero_mean=True)
        u = velocity_from_vorticity(omega)
        assert np.abs(u.u1.values).max() < 1e-13
        assert np.abs(u.u2.values - np.sin(grid.mesh[0])).max() < 1e-13
        assert np.abs(curl(u).values - omega.values).max() < 1e-12

    def test_diagonal_mode_multiplier_assembly(self):
        # assemble ucoeffs for cos(x1+x2) through the multiplier and verify
        # the defining curl identity numerically
        grid = GridSpec(16)
        omega = SpectralField.from_function(grid, lambda x1, x2: np.cos(x1 + x2),
                                            zero_mean=True)
        u = velocity_from_vorticity(omega)
        m1, m2 = velocity_multiplier(grid)
        assert abs(u.u1.coeffs[1, 1] - m1[1, 1] * 0.5) < 1e-14
        assert abs(u.u2.coeffs[1, 1] - m2[1, 1] * 0.5) < 1e-14
        assert np.abs(curl(u).coeffs - omega.coeffs).max() < 1e-13

    def test_zero_field(self):
        grid = GridSpec(16)
        u = velocity_from_vorticity(SpectralField.zeros(grid, zero_mean=True))
        assert u.max_norm() == 0.0

    def test_rejects_nonzero_mean(self):
        grid = GridSpec(16)
        f = SpectralField.from_function(grid, lambda x1, x2: 1.0 + np.cos(x1))
        with pytest.raises(ValueError, match="zero mean"):
            velocity_from_vorticity(f)

    @pytest.mark.parametrize("g", [16, 32])
    def test_curl_and_divergence_identities(self, g, rng):
        grid = GridSpec(g)
        for _ in range(100):
            omega = random_trig_field(grid, rng)
            u = velocity_from_vorticity(omega)
            scale = max(1.0, np.abs(omega.coeffs).max())
            assert np.abs(curl(u).coeffs - omega.coeffs).max() < 1e-12 * scale
            assert np.abs(divergence(u).coeffs).max() < 1e-12 * scale

    def test_operator_norm_bound(self, rng):
        # |K * v| in the (1 - a, 2) norm is at most sqrt(2) |v| in (-a, 2)
        grid = GridSpec(32)
        for a in (0.0, 0.3, 1.0):
            for _ in range(34):
                v = random_trig_field(grid, rng)
                u = velocity_from_vorticity(v)
                lhs = vector_sobolev_norm(u, 1.0 - a, 2.0)
                rhs = np.sqrt(2.0) * sobolev_norm(v, -a, 2.0)
                assert lhs <= rhs * (1.0 + 1e-12)


class TestGreenFunction:
    def test_even(self):
        p = np.array([0.3, -1.1])
        assert green_function_eval(p, 64) == pytest.approx(
            green_function_eval(-p, 64), abs=1e-12)

    def test_rejects_origin_and_small_cutoff(self):
        with pytest.raises(ValueError, match="singular"):
            green_function_eval((1e-9, 0.0), 64)
        with pytest.raises(ValueError, match="cutoff"):
            green_function_eval((0.5, 0.5), 4)

    def test_log_bound_shape(self):
        # fit C on mid-range radii, then check |G| <= C(-log|x| + 1) on the
        # full sampled range after confirming cutoff-stability
        radii = np.array([3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0])
        pts = np.stack([radii * np.cos(0.7), radii * np.sin(0.7)], axis=1)
        coarse = np.array([green_function_eval(p, 512) for p in pts])
        fine = np.array([green_function_eval(p, 1024) for p in pts])
        bound = -np.log(radii) + 1.0
        stable = np.abs(fine - coarse) < 0.05 * bound
        assert stable[2:].all()
        c_fit = np.max(np.abs(fine[2:]) / bound[2:])
        assert np.all(np.abs(fine) <= 1.5 * c_fit * bound)

    def test_kernel_inverse_distance_bound(self):
        # |K(x)| |x| stays bounded toward the singularity along a ray
        grid = GridSpec(512)
        kf = kernel_field(grid)
        mag = kf.magnitude()
        x1, x2 = grid.mesh
        r = np.hypot(x1, x2)
        ray = (np.abs(np.arctan2(x2, x1) - 0.4) < 0.05) & (r > 4 * grid.spacing) & (r < 1.0)
        products = (mag * r)[ray]
        radii = r[ray]
        order = np.argsort(radii)
        inner = products[order][: max(4, len(order) // 8)]
        assert inner.max() <= 3.0 * np.median(products)

    def test_l1_estimate_magnitude(self):
        est = kernel_l1_estimate(grid_size=256)
        assert 1.0 < est < 4.0


class TestKernelTable:
    def build(self, g=256, n=64, beta=0.2):
        grid = GridSpec(g)
        return KernelTable.build(grid, Mollifier(beta=beta, n_particles=n)), grid

    def test_zero_at_origin(self):
        table, _ = self.build()
        val = table.evaluate(np.zeros((1, 2)))
        assert np.abs(val).max() < 1e-10

    def test_odd(self, rng):
        table, _ = self.build()
        pts = rng.uniform(-np.pi, np.pi, size=(40, 2))
        fwd = table.evaluate(pts)
        bwd = table.evaluate(-pts)
        assert np.abs(fwd + bwd).max() < 1e-10

    def test_interpolation_matches_direct_fourier_sum(self, rng):
        # the bump's edge layer limits local-polynomial accuracy, so the
        # 1e-6 target needs a wide, well-resolved kernel (~100 cells/radius)
        table, grid = self.build(g=512, n=4)
        pts = rng.uniform(-np.pi, np.pi, size=(50, 2))
        vhat = table.mollifier.fourier_coeffs(grid)
        m1, m2 = velocity_multiplier(grid)
        k1, k2 = grid.wavenumbers
        phases = np.exp(1j * (pts[:, 0][:, None, None] * k1[None]
                              + pts[:, 1][:, None, None] * k2[None]))
        exact1 = np.real(np.sum(vhat * m1 * phases, axis=(1, 2)))
        exact2 = np.real(np.sum(vhat * m2 * phases, axis=(1, 2)))
        approx = table.evaluate(pts)
        scale = np.abs(table.values).max()
        err = max(np.abs(approx[:, 0] - exact1).max(),
                  np.abs(approx[:, 1] - exact2).max())
        assert err <= 1e-6 * scale

    def test_refuses_coarse_grid(self):
        grid = GridSpec(64)
        # N = 4096, beta = 0.2: support radius 0.2976 ~ 3 cells at G = 64
        with pytest.raises(GridResolutionError):
            KernelTable.build(grid, Mollifier(beta=0.2, n_particles=4096))

    def test_snapshot_cache(self, tmp_path):
        table, _ = self.build(g=128, n=4)
        table.save(str(tmp_path / "table"))
        from vortexsde.grid import read_snapshot
        back = read_snapshot(tmp_path / "table_u1.vxf")
        assert np.abs(back.values - table.values[0]).max() == 0.0
