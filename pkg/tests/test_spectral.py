import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracfp.errors import NonHermitianSpectrum, SingularInverse
from fracfp.spectral import (
    Field,
    Grid,
    Spectrum,
    apply_bessel_power,
    apply_fractional_laplacian,
    apply_multiplier,
    bessel_resolvent_phi,
    divergence,
    forward_transform,
    gradient,
    inverse_transform,
    lowpass_23,
    norms,
    parseval_sum,
)


@pytest.mark.parametrize("dim,n", [(1, 128), (2, 64)])
def test_gaussian_transform_matches_continuous_transform(dim, n):
    # exp(-|x|^2/2) is its own transform under the symmetric convention
    g = Grid(dim, n, 12.0)
    f = Field.from_function(g, lambda *x: np.exp(-0.5 * sum(xi**2 for xi in x)))
    F = forward_transform(f).coefficients
    assert np.max(np.abs(F - np.exp(-0.5 * g.xi_sq))) < 1e-12


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_roundtrip(dim):
    g = Grid(dim, 16, 2.0)
    rng = np.random.default_rng(dim)
    f = Field(g, rng.standard_normal(g.shape))
    back = inverse_transform(forward_transform(f))
    assert np.max(np.abs(back.values - f.values)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]), st.floats(0.5, 10.0))
def test_parseval(seed, dim, L):
    g = Grid(dim, 16, L)
    f = Field(g, np.random.default_rng(seed).standard_normal(g.shape))
    lhs = (f.values**2).sum() * g.cell_volume
    assert parseval_sum(f) == pytest.approx(lhs, rel=1e-12)


def test_non_hermitian_spectrum_rejected():
    g = Grid(1, 16, 1.0)
    c = np.zeros(g.shape, dtype=complex)
    c[3] = 1j
    with pytest.raises(NonHermitianSpectrum):
        inverse_transform(Spectrum(g, c))


@pytest.mark.parametrize("s", [0.5, 0.75, 1.0])
@pytest.mark.parametrize("m", [1, 5])
def test_fractional_laplacian_on_modes(s, m):
    g = Grid(1, 64, 3.0)
    k = m * math.pi / g.L
    f = Field.from_function(g, lambda x: np.cos(k * x))
    out = apply_fractional_laplacian(f, s)
    assert np.max(np.abs(out.values - k ** (2 * s) * f.values)) < 1e-12 * max(1, k ** (2 * s))


def test_fractional_laplacian_2d_mode():
    g = Grid(2, 32, 2.0)
    k1, k2 = math.pi / g.L, 3 * math.pi / g.L
    f = Field.from_function(g, lambda x, y: np.sin(k1 * x) * np.cos(k2 * y))
    out = apply_fractional_laplacian(f, 0.6)
    assert np.max(np.abs(out.values - (k1**2 + k2**2) ** 0.6 * f.values)) < 1e-12


def test_lattice_symbol_is_second_difference():
    g = Grid(1, 32, 2.0)
    f = Field.from_function(g, lambda x: np.exp(np.sin(np.pi * x / 2)))
    lap = apply_fractional_laplacian(f, 1.0, symbol="lattice")
    fd = (2 * f.values - np.roll(f.values, 1) - np.roll(f.values, -1)) / g.dx**2
    assert np.max(np.abs(lap.values - fd)) < 1e-10


def test_bessel_power_inverse_pair():
    g = Grid(1, 64, 4.0)
    f = Field.from_function(g, lambda x: np.exp(-x**2))
    back = apply_bessel_power(apply_bessel_power(f, 0.3, 0.4), 0.3, -0.4)
    assert np.max(np.abs(back.values - f.values)) < 1e-13


def test_bessel_negative_power_needs_zero_mass():
    g = Grid(1, 32, 2.0)
    with pytest.raises(SingularInverse):
        apply_bessel_power(Field.constant(g, 1.0), 0.0, -0.5)
    zero_mean = Field.from_function(g, lambda x: np.cos(np.pi * x / 2))
    out = apply_bessel_power(zero_mean, 0.0, -0.5)
    assert np.max(np.abs(out.values - zero_mean.values / (np.pi / 2))) < 1e-12


def test_resolvent_phi_on_mode_and_constant():
    g = Grid(1, 32, 2.0)
    k = 2 * math.pi / g.L
    f = Field.from_function(g, lambda x: np.cos(k * x) + 2.0)
    out = bessel_resolvent_phi(f, 0.2, 0.75)
    expected = np.cos(k * g.axis) / (0.2 + k**1.5) + 2.0 / 0.2
    assert np.max(np.abs(out.values - expected)) < 1e-12
    with pytest.raises(ValueError):
        bessel_resolvent_phi(f, 0.0, 0.75)


def test_gradient_and_divergence():
    g = Grid(2, 32, math.pi)
    f = Field.from_function(g, lambda x, y: np.sin(x) * np.cos(2 * y))
    V = gradient(f)
    assert np.max(np.abs(V.components[0] - np.cos(g.mesh[0]) * np.cos(2 * g.mesh[1]))) < 1e-12
    assert np.max(np.abs(V.components[1] + 2 * np.sin(g.mesh[0]) * np.sin(2 * g.mesh[1]))) < 1e-12
    lap = divergence(V)
    assert np.max(np.abs(lap.values + 5 * f.values)) < 1e-11


def test_multiplier_batches_and_lowpass():
    g = Grid(1, 32, 1.0)
    rng = np.random.default_rng(0)
    batch = rng.standard_normal((3, 32))
    m = 1.0 / (1.0 + g.xi_sq)
    out = apply_multiplier(batch, m, 1)
    for i in range(3):
        assert np.allclose(out[i], apply_multiplier(batch[i], m, 1), atol=1e-14)
    high = Field.from_function(g, lambda x: np.cos(15 * np.pi * x))
    assert np.max(np.abs(lowpass_23(high.values, g))) < 1e-14


def test_norms():
    g = Grid(1, 64, math.pi)
    f = Field.from_function(g, lambda x: np.cos(2 * x))
    nr = norms(f, s=0.5)
    assert nr["l2"] == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    assert nr["linf"] == pytest.approx(1.0)
    assert nr["hs_semi"] == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)
    assert nr["h_minus_s"] == pytest.approx(math.sqrt(math.pi / 2), rel=1e-12)
    with pytest.raises(SingularInverse):
        norms(Field.constant(g, 1.0), s=0.5)
    assert norms(Field.constant(g, 1.0), s=0.5, eps=1.0)["h_minus_s"] > 0


@pytest.mark.parametrize("args", [(4, 16, 1.0), (1, 15, 1.0), (1, 4, 1.0), (1, 16, 0.0)])
def test_grid_validation(args):
    with pytest.raises(ValueError):
        Grid(*args)


def test_field_rejects_nonfinite_and_wrong_shape():
    g = Grid(1, 16, 1.0)
    with pytest.raises(ValueError):
        Field(g, np.full(16, np.nan))
    with pytest.raises(ValueError):
        Field(g, np.zeros(15))
