import numpy as np
import pytest

from vortexsde.grid import GridSpec, SpectralField


def random_trig_field(grid: GridSpec, rng, kmax=None, n_modes=12,
                      zero_mean=True) -> SpectralField:
    """Random band-limited trig polynomial with Hermitian coefficients.

    Modes stay within |k|_inf <= kmax (default G/4) so products and
    derivatives remain alias- and Nyquist-free in the tests.
    """
    g = grid.modes_per_axis
    if kmax is None:
        kmax = g // 4
    coeffs = np.zeros((g, g), dtype=complex)
    for _ in range(n_modes):
        k1, k2 = rng.integers(-kmax, kmax + 1, size=2)
        if zero_mean and k1 == 0 and k2 == 0:
            continue
        c = rng.standard_normal() + 1j * rng.standard_normal()
        coeffs[k1, k2] += c
        coeffs[-k1, -k2] += np.conj(c)
    return SpectralField(grid, coeffs=coeffs, zero_mean=zero_mean)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
