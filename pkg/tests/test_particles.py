import math

import numpy as np
import pytest
from scipy import stats

from fracfp import coefficients as C
from fracfp.errors import NonfiniteState
from fracfp.evolution import EvolutionConfig, evolve
from fracfp.particles import (
    CHUNK,
    LevyConfig,
    ParticleEnsemble,
    characteristic_function,
    compare_reports,
    estimate_density,
    euler_step,
    interpolate_periodic,
    sample_initial,
    sample_isotropic_stable,
    sample_subordinator,
    simulate,
    stream,
    superposition_check,
)
from fracfp.spectral import Field, Grid

from conftest import gaussian


@pytest.mark.parametrize("s,dt,lam", [(0.3, 0.1, 1.0), (0.5, 1.0, 2.0), (0.75, 0.01, 50.0), (0.9, 0.5, 0.7)])
def test_subordinator_laplace_transform(s, dt, lam):
    S = sample_subordinator(s, dt, stream(7, 0, 0), 200_000)
    e = np.exp(-lam * S)
    se = e.std() / math.sqrt(e.size)
    assert abs(e.mean() - math.exp(-dt * lam**s)) < 4 * se + 1e-12


def test_subordinator_half_is_levy_distribution():
    # s = 1/2: the hitting-time law with density dt t^(-3/2) exp(-dt^2/(4t)) / (2 sqrt(pi))
    dt = 0.3
    S = sample_subordinator(0.5, dt, stream(3, 0, 0), 50_000)
    assert stats.kstest(S, stats.levy(scale=dt**2 / 2).cdf).pvalue > 1e-3


def test_subordinator_scaling():
    s, dt = 0.7, 0.02
    a = sample_subordinator(s, dt, stream(1, 0, 0), 40_000) / dt ** (1 / s)
    b = sample_subordinator(s, 1.0, stream(2, 0, 0), 40_000)
    assert stats.ks_2samp(a, b).pvalue > 1e-3


@pytest.mark.parametrize("d", [1, 2, 3])
def test_isotropic_characteristic_function(d):
    s, dt = 0.75, 0.2
    X = sample_isotropic_stable(s, dt, d, stream(11, 0, 0), 100_000)
    rng = np.random.default_rng(0)
    for r in (0.5, 1.5, 3.0):
        v = rng.standard_normal(d)
        xi = r * v / np.linalg.norm(v)
        val, se = characteristic_function(X, xi)
        assert abs(val[0] - math.exp(-dt * r ** (2 * s))) < 4 * se[0] + 1e-12


def test_isotropy_of_projections():
    X = sample_isotropic_stable(0.6, 1.0, 2, stream(5, 0, 0), 40_000)
    diag = X @ np.array([1.0, 1.0]) / math.sqrt(2)
    assert stats.ks_2samp(X[:40_000 // 2, 0], diag[40_000 // 2:]).pvalue > 1e-3


def test_one_dimensional_marginal_matches_stable_law():
    s, dt = 0.75, 0.5
    X = sample_isotropic_stable(s, dt, 1, stream(9, 0, 0), 4000)[:, 0]
    law = stats.levy_stable(2 * s, 0.0, scale=dt ** (1 / (2 * s)))
    assert stats.kstest(X, law.cdf).pvalue > 1e-3


def test_stream_is_keyed():
    a = stream(1, 2, 3).random(4)
    assert np.array_equal(a, stream(1, 2, 3).random(4))
    assert not np.array_equal(a, stream(1, 2, 4).random(4))
    assert not np.array_equal(a, stream(1, 3, 3).random(4))


def test_initial_sampling_1d():
    g = Grid(1, 512, 8.0)
    X = sample_initial(gaussian(g, 0.5, 0.7), 20_000, 4)
    assert X.shape == (20_000, 1)
    assert stats.kstest(X[:, 0], stats.norm(0.5, 0.7).cdf).pvalue > 1e-3


def test_initial_sampling_2d_moments():
    g = Grid(2, 128, 6.0)
    X = sample_initial(gaussian(g, 0.0, 0.8), 40_000, 4)
    assert np.all(np.abs(X.mean(axis=0)) < 4 * 0.8 / math.sqrt(40_000))
    assert np.allclose(X.std(axis=0), 0.8, rtol=0.03)
    with pytest.raises(ValueError):
        sample_initial(Field(g, -np.ones(g.shape)), 10, 0)


def test_interpolation_is_exact_for_linear_and_periodic():
    g = Grid(2, 16, 2.0)
    u = Field.from_function(g, lambda x, y: 2 * x - y)
    pts = np.array([[0.1, -0.3], [0.77, 0.4]])
    assert np.allclose(interpolate_periodic(u, pts), 2 * pts[:, 0] - pts[:, 1])
    v = Field.from_function(g, lambda x, y: np.cos(math.pi * x) + 0 * y)
    assert interpolate_periodic(v, np.array([[0.3, 0.0]]))[0] == pytest.approx(
        interpolate_periodic(v, np.array([[4.3, 4.0]]))[0])


def test_kde_mass_and_single_particle():
    g = Grid(2, 32, 3.0)
    est = estimate_density(np.array([[0.2, -0.1]]), g, bandwidth=0.3)
    assert est.values.mass() == pytest.approx(1.0)
    assert np.unravel_index(np.argmax(est.values.values), g.shape) in {(17, 15), (16, 15), (17, 14), (16, 14)}
    with pytest.raises(ValueError):
        estimate_density(np.zeros((3, 2)), g, bandwidth=0.0)


def test_reproducible_across_thread_counts(monkeypatch):
    g = Grid(1, 64, 4.0)
    u = gaussian(g)
    cs = C.CoefficientSet(C.linear_beta(), C.constant_b(0.0), C.zero_D(1), 0.75)
    ens = ParticleEnsemble(sample_initial(u, 3 * CHUNK + 5, 1), seed=1)
    out = []
    for w in ("1", "4"):
        monkeypatch.setenv("FRACFP_THREADS", w)
        out.append(euler_step(ens, u, 0.01, cs).positions)
    assert np.array_equal(out[0], out[1])


def test_zero_density_region_moves_by_drift_only():
    g = Grid(1, 64, 4.0)
    cs = C.CoefficientSet(C.porous_medium(2), C.lorentzian_b(), C.constant_D([0.5]), 0.75)
    X = np.linspace(-1, 1, 11)[:, None]
    new = euler_step(ParticleEnsemble(X), Field.constant(g, 0.0), 0.1, cs)
    assert np.allclose(new.positions, X + 0.05, atol=1e-14)
    assert new.step == 1 and new.time == pytest.approx(0.1)


def test_nonfinite_state():
    with pytest.raises(NonfiniteState):
        ParticleEnsemble(np.array([[np.nan]]))


def test_linear_superposition_matches_pde(linear_cs):
    g = Grid(1, 128, 8.0)
    u0 = gaussian(g, 0.0, 0.7)
    pde = evolve(u0, EvolutionConfig(0.2, 1e-2, linear_cs))
    cfg = LevyConfig(0.75, 1e-2, 40_000, seed=3, T=0.2)
    ens = simulate(u0, cfg, linear_cs, pde_path=pde, snapshot_times=[0.0, 0.1, 0.2])
    assert ens.times == pytest.approx([0.0, 0.1, 0.2])
    rep = superposition_check(ens, pde, tol=0.05, n_boot=5)
    assert rep["passed"]
    for row in rep["snapshots"]:
        assert all(gap < 4 * se + 2e-3 for gap, se in zip(row["cf_gap"], row["cf_se"]))


def test_simulate_rejects_bad_mode(linear_cs):
    g = Grid(1, 32, 4.0)
    with pytest.raises(ValueError):
        simulate(gaussian(g), LevyConfig(0.75, 0.1, 10, T=0.1), linear_cs, mode="other")
    with pytest.raises(ValueError):
        simulate(gaussian(g), LevyConfig(0.75, 0.1, 10, T=0.1), linear_cs)


def test_compare_reports():
    a = {"snapshots": [{"t": 0.0, "l1": 0.010, "l1_se": 0.001}]}
    b = {"snapshots": [{"t": 0.0, "l1": 0.012, "l1_se": 0.001}]}
    assert compare_reports(a, b)["passed"]
    c = {"snapshots": [{"t": 0.0, "l1": 0.020, "l1_se": 0.001}]}
    assert not compare_reports(a, c)["passed"]
