import math

import numpy as np
import pytest
from scipy.integrate import quad

from fracfp import coefficients as C
from fracfp.evolution import EvolutionConfig, SolutionPath, evolve
from fracfp.gauge import (
    GaugePair,
    alpha_constants,
    gauge_decomposition,
    gauge_h,
    gauge_h_routes,
    gronwall_audit,
    mollifier_multiplier,
)
from fracfp.spectral import Field, Grid

from conftest import gaussian


def _static(fields, cs, times=(0.0, 0.1)):
    return SolutionPath(list(times), [fields] * len(times), h=times[1] - times[0], cs=cs)


@pytest.mark.parametrize("k_index", [1, 3, 7])
def test_single_mode_closed_form(porous_cs, k_index):
    g = Grid(1, 64, 4.0)
    k = math.pi / g.L * k_index
    one = Field.constant(g, 1.0)
    wave = Field(g, 1.0 + 0.7 * np.cos(k * g.axis))
    pair = GaugePair(_static(wave, porous_cs), _static(one, porous_cs), eps_g=0.3, eps_m=0.0)
    expected = 0.49 * g.volume / (2 * (0.3 + k**1.5))
    inner, spec = gauge_h_routes(pair, 0.0)
    assert spec == pytest.approx(expected, rel=1e-12)
    assert inner == pytest.approx(expected, rel=1e-10)


def test_identical_paths_are_same(grid1, porous_cs):
    p = evolve(gaussian(grid1), EvolutionConfig(0.05, 1e-2, porous_cs))
    rep = gronwall_audit(GaugePair(p, p), tol=1e-12)
    assert rep.verdict == "SAME"
    assert max(rep.h_trace) == 0.0 and rep.C == 0.0


def test_distinct_paths_are_different(grid1, porous_cs):
    cfg = EvolutionConfig(0.05, 1e-2, porous_cs)
    pair = GaugePair(evolve(gaussian(grid1), cfg), evolve(gaussian(grid1, 0.4), cfg))
    rep = gronwall_audit(pair, tol=1e-5)
    assert rep.verdict == "DIFFERENT"
    assert rep.h_trace[0] > 1e-5
    assert len(rep.trace_rows()) == len(pair.times)


def test_routes_and_decomposition_agree(grid1, porous_cs):
    cfg = EvolutionConfig(0.03, 1e-2, porous_cs)
    pair = GaugePair(evolve(gaussian(grid1), cfg), evolve(gaussian(grid1, 0.3, 0.6), cfg), eps_g=0.05)
    for t in pair.times:
        inner, spec = gauge_h_routes(pair, t)
        a, b = gauge_decomposition(pair, t)
        assert inner == pytest.approx(spec, rel=1e-10)
        assert a + b == pytest.approx(spec, rel=1e-10)
        assert gauge_h(pair, t) == spec


def test_gauge_decreases_with_eps(grid1, porous_cs):
    pa = _static(gaussian(grid1), porous_cs)
    pb = _static(gaussian(grid1, 0.5), porous_cs)
    h = [gauge_h(GaugePair(pa, pb, eps_g=e), 0.0) for e in (0.01, 0.1, 1.0)]
    assert h[0] > h[1] > h[2] > 0


def test_mollifier_multiplier_matches_quadrature():
    g = Grid(1, 64, 4.0)
    width = 0.3
    m = mollifier_multiplier(g, width)
    assert m[0] == pytest.approx(1.0, abs=1e-12)
    for j in (1, 5, 20):
        k = abs(g.xi_axis[j])
        ref = quad(lambda x: C.mollifier(np.array(x / width)) * math.cos(k * x) / width, -width, width)[0]
        assert m[j] == pytest.approx(ref, abs=1e-10)
    assert np.array_equal(mollifier_multiplier(g, 0.0), np.ones(g.shape))
    assert np.all(np.abs(mollifier_multiplier(Grid(2, 16, 4.0), 0.5)) <= 1.0 + 1e-12)


def test_alpha_constants_linear():
    cs = C.CoefficientSet(C.linear_beta(), C.constant_b(0.0), C.zero_D(1), 0.75)
    a = alpha_constants(cs, 2.0)
    assert a == {"alpha1": 0.0, "alpha2": 1.0, "alpha3": 1.0}


def test_alpha_constants_porous(porous_cs):
    a = alpha_constants(porous_cs, 1.0)
    assert a["alpha2"] == pytest.approx(0.0, abs=1e-12)
    assert a["alpha3"] == pytest.approx(0.5, rel=1e-6)


def test_pair_validation(grid1, porous_cs):
    p = _static(gaussian(grid1), porous_cs)
    q = _static(gaussian(grid1), porous_cs, times=(0.0, 0.2))
    with pytest.raises(ValueError):
        GaugePair(p, q)
    with pytest.raises(ValueError):
        GaugePair(p, p, eps_g=0.0)
    other = _static(gaussian(Grid(1, 64, 4.0)), porous_cs)
    with pytest.raises(ValueError):
        GaugePair(p, other)


@pytest.mark.parametrize("d", [2, 3])
def test_radial_bump_transform(d):
    from scipy.special import j0

    from fracfp.gauge import _bump_transform

    bump = lambda r: math.exp(-1.0 / (1.0 - r * r)) if r < 1 else 0.0
    ker = (lambda x: j0(x)) if d == 2 else (lambda x: math.sin(x) / x if x else 1.0)
    norm = quad(lambda r: bump(r) * r ** (d - 1), 0, 1)[0]
    for k in (0.5, 3.0, 10.0):
        ref = quad(lambda r: bump(r) * ker(k * r) * r ** (d - 1), 0, 1, limit=200)[0] / norm
        assert _bump_transform(np.array([k]), d)[0] == pytest.approx(ref, abs=1e-10)
