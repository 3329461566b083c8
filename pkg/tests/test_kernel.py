import math

import numpy as np
import pytest
from scipy import integrate, stats

from fracfp.errors import DomainError
from fracfp.kernel import (
    KernelQuery,
    StableDensity,
    eta_density,
    eta_laplace,
    fractional_heat_kernel,
    fractional_heat_mass,
    heat_kernel,
    phi_epsilon_offgrid,
    resolvent_kernel_fourier,
    resolvent_kernel_mass,
    resolvent_kernel_subordination,
    resolvent_kernel_table,
    riesz_constant,
)
from fracfp.spectral import Field, Grid, bessel_resolvent_phi


def test_half_stable_density_closed_form():
    r = np.array([0.05, 0.3, 1.0, 3.0, 20.0])
    exact = eta_density(0.5, r, "closed_form")
    assert np.max(np.abs(eta_density(0.5, r) / exact - 1)) < 1e-12


@pytest.mark.parametrize("s", [0.3, 0.6, 0.9])
def test_density_agrees_with_scipy_levy_stable(s):
    # totally skewed stable law with Laplace transform exp(-lambda^s)
    scale = math.cos(math.pi * s / 2) ** (1 / s)
    r = np.array([0.5, 1.0, 2.0, 4.0])
    ref = stats.levy_stable.pdf(r, s, 1.0, loc=0.0, scale=scale)
    assert np.max(np.abs(eta_density(s, r) / ref - 1)) < 1e-4


@pytest.mark.parametrize("s", [0.55, 0.75, 0.95])
def test_integral_and_series_overlap(s):
    r = np.array([2.0, 3.0, 5.0])
    a = eta_density(s, r, "integral")
    b = eta_density(s, r, "series")
    assert np.max(np.abs(a / b - 1)) < 1e-12


@pytest.mark.parametrize("s", [0.55, 0.6, 0.75, 0.9, 0.95])
def test_mass_and_laplace_transform(s):
    sd = StableDensity(s)
    assert sd.mass() == pytest.approx(1.0, abs=1e-12)
    for lam in (0.5, 1.0, 2.0):
        assert eta_laplace(s, lam) == pytest.approx(math.exp(-(lam**s)), abs=1e-12)


def test_density_domain_errors():
    with pytest.raises(DomainError):
        eta_density(1.0, 1.0)
    with pytest.raises(DomainError):
        eta_density(0.5, 0.0)
    with pytest.raises(DomainError):
        eta_density(0.6, 1.0, "closed_form")


def test_heat_kernel_normalized():
    val = integrate.quad(lambda x: heat_kernel(0.7, x, 1), -np.inf, np.inf)[0]
    assert val == pytest.approx(1.0, rel=1e-12)
    assert heat_kernel(0.5, np.array([1.0, 0.0])) == pytest.approx(heat_kernel(0.5, 1.0, 2))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_cauchy_kernel(d):
    x = np.linspace(0.0, 6.0, 13)
    t = 0.8
    exact = math.gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2) * t / (t**2 + x**2) ** ((d + 1) / 2)
    assert np.max(np.abs(fractional_heat_kernel(0.5, t, x, d) / exact - 1)) < 1e-10


@pytest.mark.parametrize("s,t,d", [(0.75, 0.5, 1), (0.6, 1.0, 2), (0.9, 0.3, 3)])
def test_fractional_heat_mass(s, t, d):
    assert fractional_heat_mass(s, t, d) == pytest.approx(1.0, abs=1e-9)


def test_fractional_heat_kernel_matches_fourier_inversion():
    s, t, x = 0.75, 0.6, 1.3
    ref = integrate.quad(lambda k: math.cos(k * x) * math.exp(-t * k ** (2 * s)) / math.pi, 0, np.inf,
                         limit=400, epsabs=1e-14)[0]
    assert fractional_heat_kernel(s, t, x) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_resolvent_mass_identity(d):
    for s, eps in ((0.6, 0.5), (0.8, 2.0)):
        assert eps * resolvent_kernel_mass(s, eps, d) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_resolvent_scaling(d):
    s, eps = 0.7, 0.3
    r = np.array([0.3, 1.0, 2.5])
    lhs = resolvent_kernel_table(s, eps, d, r)
    rhs = eps ** ((d - 2 * s) / (2 * s)) * resolvent_kernel_table(s, 1.0, d, eps ** (1 / (2 * s)) * r)
    assert np.max(np.abs(lhs / rhs - 1)) < 1e-12


@pytest.mark.slow
@pytest.mark.parametrize("s,eps,d", [(0.6, 0.5, 1), (0.75, 1.0, 2), (0.9, 2.0, 2), (0.8, 1.0, 3)])
def test_two_routes_agree(s, eps, d):
    for r in (0.4, 1.5):
        q = KernelQuery(s, eps, d, r)
        assert resolvent_kernel_subordination(q) == pytest.approx(resolvent_kernel_fourier(q), rel=1e-8)


def test_one_dimensional_exponential_kernel_limit():
    # as s -> 1 the kernel tends to exp(-sqrt(eps)|x|)/(2 sqrt(eps)); at s = 0.99 within a few percent
    eps, r = 1.0, 1.0
    val = resolvent_kernel_table(0.99, eps, 1, [r])[0]
    assert val == pytest.approx(math.exp(-r) / 2, rel=0.03)


def test_riesz_constant_d3_half():
    # s = 1/2, d = 3: kernel of |xi|^-1 is 1/(2 pi^2 |x|^2)
    assert riesz_constant(0.5, 3) == pytest.approx(1 / (2 * math.pi**2), rel=1e-14)
    with pytest.raises(DomainError):
        riesz_constant(0.75, 1)


def test_query_validation():
    with pytest.raises(DomainError):
        KernelQuery(0.5, 0.0, 1, 1.0)
    with pytest.raises(DomainError):
        KernelQuery(0.5, 1.0, 4, 1.0)


def test_offgrid_phi_agrees_with_spectral_in_1d():
    g = Grid(1, 256, 8.0)
    f = Field.from_function(g, lambda x: np.exp(-(x**2)))
    a = phi_epsilon_offgrid(f, 0.5, 0.75)
    b = bessel_resolvent_phi(f, 0.5, 0.75)
    assert np.max(np.abs(a.values - b.values)) / np.max(np.abs(b.values)) < 1e-3
    assert a.mass() == pytest.approx(f.mass() / 0.5, rel=1e-12)


def test_near_one_approaches_yukawa_kernel():
    # at s = 0.95 the r^(2s-3) singularity still differs from 1/r, so only mid-range radii are within 5%
    r = np.array([0.5, 1.0])
    g = resolvent_kernel_table(0.95, 1.0, 3, r)
    assert np.all(np.abs(g / (np.exp(-r) / (4 * np.pi * r)) - 1) < 0.05)
    far = [resolvent_kernel_table(s, 1.0, 3, np.array([2.0]))[0] for s in (0.95, 0.99)]
    yuk = math.exp(-2.0) / (8 * math.pi)
    assert abs(far[1] / yuk - 1) < abs(far[0] / yuk - 1) / 3


@pytest.mark.parametrize("d,s", [(2, 0.6), (2, 0.75), (3, 0.6), (3, 0.75)])
def test_small_r_growth(d, s):
    r = np.array([0.1, 0.05, 0.025])
    v = resolvent_kernel_table(s, 1.0, d, r) * r ** (d - 2 * s)
    assert np.all(v > 0) and np.all(np.diff(v) > 0)
    assert v[2] - v[1] < v[1] - v[0]
