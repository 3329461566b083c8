import numpy as np
import pytest

from fracfp import coefficients as C
from fracfp.evolution import (
    EvolutionConfig,
    SolutionPath,
    catalog_test_functions,
    distributional_residual,
    evolve,
    evolve_linearized,
    exact_fractional_heat,
    exponential_formula,
    linearized_ratio,
    window,
)
from fracfp.kernel import fractional_heat_kernel
from fracfp.resolvent import SolverControls
from fracfp.spectral import Field, Grid

from conftest import gaussian


def _l1(a, b):
    return float(np.abs(a.values - b.values).sum() * a.grid.cell_volume)


def test_exact_flow_matches_subordinated_kernel():
    # narrow Gaussian as a point mass; the periodic box adds heavy-tail images
    g = Grid(1, 4096, 30.0)
    t, s = 0.5, 0.75
    u0 = gaussian(g, 0.0, 0.03)
    u = exact_fractional_heat(u0, t, s)
    x = g.axis
    sel = (np.abs(x) > 1.0) & (np.abs(x) < 5.0)
    ref = sum(fractional_heat_kernel(s, t, np.abs(x[sel] + 60.0 * j)) for j in range(-200, 201))
    assert np.max(np.abs(u.values[sel] / ref - 1)) < 2e-3


def test_linear_evolution_first_order(linear_cs):
    g = Grid(1, 128, 8.0)
    u0 = gaussian(g, 0.0, 0.7)
    ex = exact_fractional_heat(u0, 0.2, 0.75)
    e = [_l1(evolve(u0, EvolutionConfig(0.2, h, linear_cs)).final, ex) for h in (4e-3, 2e-3)]
    assert e[0] < 5e-3
    assert 1.8 < e[0] / e[1] < 2.2


def test_porous_run_conserves_mass_and_sign(grid1, porous_cs):
    u0 = gaussian(grid1)
    p = evolve(u0, EvolutionConfig(0.1, 1e-2, porous_cs, snapshot_stride=5))
    assert p.failed is None
    assert len(p.times) == 3 and p.times[-1] == pytest.approx(0.1)
    assert p.mass_drift() <= 1e-10
    assert p.min_value() >= -1e-10
    assert all(p.trace["sup_ok"])
    assert p.at(0.07) is p.fields[1]
    assert len(p.trace_rows()) == 11


def test_exponential_formula_equals_evolution(grid1, porous_cs):
    u0 = gaussian(grid1)
    p = evolve(u0, EvolutionConfig(0.1, 1e-2, porous_cs))
    e = exponential_formula(u0, 0.1, 10, porous_cs)
    assert np.max(np.abs(e.values - p.final.values)) < 1e-12


def test_exponential_formula_converges(grid1, porous_cs):
    u0 = gaussian(grid1)
    ref = exponential_formula(u0, 0.1, 40, porous_cs)
    d = [_l1(exponential_formula(u0, 0.1, n, porous_cs), ref) for n in (5, 10)]
    assert d[1] < d[0]


def test_l1_contraction_along_paths(grid1, porous_cs):
    a = gaussian(grid1, 0.0, 0.5)
    b = gaussian(grid1, 0.5, 0.4)
    cfg = EvolutionConfig(0.1, 1e-2, porous_cs)
    pa, pb = evolve(a, cfg), evolve(b, cfg)
    gaps = [_l1(x, y) for x, y in zip(pa.fields, pb.fields)]
    assert all(g2 <= g1 + 1e-9 for g1, g2 in zip(gaps, gaps[1:]))


def test_window_and_catalog():
    chi = window(1.0)
    t = np.array([0.0, 0.5, 0.999, 1.0, 2.0])
    v = chi(t)
    assert v[0] == 1.0 and v[3] == 0.0 and v[4] == 0.0 and 0 < v[1] < 1 and v[2] < 1e-100
    g = Grid(2, 16, 1.0)
    tests = catalog_test_functions(g, 1.0)
    assert len(tests) == 5 and len({t.name for t in tests}) == 5
    for phi in tests:
        assert phi.psi(g.mesh).shape == g.shape


def test_residual_is_zero_for_exact_constant_state(linear_cs):
    # a constant density is stationary: every term of the weak form vanishes
    g = Grid(1, 64, 4.0)
    u = Field.constant(g, 0.2)
    p = SolutionPath([0.0, 0.1, 0.2], [u, u, u], h=0.1, cs=linear_cs)
    for phi in catalog_test_functions(g, 0.2):
        assert distributional_residual(p, phi) < 1e-14


def test_residual_detects_wrong_path(linear_cs):
    g = Grid(1, 128, 8.0)
    u0 = gaussian(g, 0.0, 0.7)
    good = evolve(u0, EvolutionConfig(0.2, 2e-3, linear_cs))
    bad = SolutionPath(list(good.times), [u0] * len(good.times), h=good.h, cs=linear_cs)
    phis = catalog_test_functions(g, 0.2)
    assert max(distributional_residual(good, f) for f in phis) * 20 < max(distributional_residual(bad, f) for f in phis)


def test_residual_first_order_with_transport(grid1, porous_cs):
    u0 = gaussian(grid1)
    phis = catalog_test_functions(grid1, 0.1)
    r = [max(distributional_residual(evolve(u0, EvolutionConfig(0.1, h, porous_cs)), f) for f in phis)
         for h in (1e-2, 5e-3)]
    assert 1.5 < r[0] / r[1] < 2.5


def test_linearized_reproduces_nonlinear_path(grid1, porous_cs):
    u0 = gaussian(grid1)
    p = evolve(u0, EvolutionConfig(0.1, 1e-2, porous_cs))
    q = evolve_linearized(p, u0)
    assert max(np.max(np.abs(a.values - b.values)) for a, b in zip(p.fields, q.fields)) < 1e-9
    assert q.mass_drift() < 1e-12
    strided = evolve(u0, EvolutionConfig(0.1, 1e-2, porous_cs, snapshot_stride=2))
    with pytest.raises(ValueError):
        evolve_linearized(strided, u0)


def test_linearized_ratio_convention():
    beta = C.porous_medium(2)
    assert np.array_equal(linearized_ratio(beta, np.array([0.0, 2.0, -1.0])), np.array([0.0, 2.0, 1.0]))


def test_failed_run_returns_partial_path(grid1, porous_cs):
    p = evolve(gaussian(grid1), EvolutionConfig(0.05, 1e-2, porous_cs, controls=SolverControls(max_iter=1)))
    assert p.failed is not None and "NoConvergence" in p.failed
    assert p.times[0] == 0.0


def test_config_validation(linear_cs):
    with pytest.raises(ValueError):
        EvolutionConfig(0.1, 0.2, linear_cs)
    with pytest.raises(ValueError):
        EvolutionConfig(0.1, 0.01, linear_cs, snapshot_stride=0)
    assert EvolutionConfig(0.1, 0.01, linear_cs).n_steps == 10
