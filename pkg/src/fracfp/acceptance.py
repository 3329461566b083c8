"""Acceptance suite: one pass/fail record with measured values per criterion.

``quick`` runs every criterion at its stated scale with the smallest
sampling matrices; ``full`` widens the kernel matrix and adds the particle
convergence and self-consistent experiments.
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np

from . import coefficients as C
from .evolution import (
    EvolutionConfig,
    SolutionPath,
    catalog_test_functions,
    distributional_residual,
    evolve,
    exact_fractional_heat,
)
from .gauge import GaugePair, gauge_h_routes, gronwall_audit
from .kernel import (
    KernelQuery,
    fractional_heat_kernel,
    resolvent_kernel_fourier,
    resolvent_kernel_mass,
    resolvent_kernel_table,
)
from .particles import (
    LevyConfig,
    characteristic_function,
    compare_reports,
    sample_isotropic_stable,
    sample_subordinator,
    simulate,
    stream,
    superposition_check,
)
from .resolvent import check_resolvent_identity, resolvent_J, sup_bound_factor
from .spectral import Field, Grid

__all__ = ["acceptance_suite", "CRITERIA"]

S_DEFAULT = 0.75


def _l1(a: Field, b: Field) -> float:
    return float(np.abs(a.values - b.values).sum() * a.grid.cell_volume)


def _gaussian(grid: Grid, center=0.0, sigma=0.7) -> Field:
    u = Field.from_function(grid, lambda *x: np.exp(-sum((xi - center) ** 2 for xi in x) / (2 * sigma**2)))
    return u * (1.0 / u.mass())


class _Ctx:
    """Shared state: seed and every evolution path produced by the suite."""

    def __init__(self, level: str, seed: int):
        self.level = level
        self.seed = seed
        self.paths: list[tuple[str, SolutionPath, bool]] = []
        self.cache: dict = {}

    def keep(self, name: str, path: SolutionPath, nonneg: bool = True) -> SolutionPath:
        self.paths.append((name, path, nonneg))
        return path


# ---------------------------------------------------------------- criteria 1 and 2


def _resolvent_fixture():
    g = Grid(1, 256, 4.0)
    cs = C.CoefficientSet(C.truncate(C.porous_medium(2), 2), C.lorentzian_b(), C.sine_D(1, 4.0, 0.5), S_DEFAULT)
    return g, cs, C.lambda0(cs, g.points())


def _random_density(grid: Grid, rng: np.random.Generator) -> Field:
    x = grid.mesh[0]
    v = np.zeros(grid.shape)
    for _ in range(3):
        c, w, a = rng.uniform(-2.0, 2.0), rng.uniform(0.3, 1.0), rng.uniform(0.1, 1.0)
        v += a * np.exp(-((x - c) ** 2) / (2 * w**2))
    return Field(grid, v)


def _fixed_densities(grid: Grid) -> list:
    x = grid.mesh[0]
    return [
        Field(grid, np.exp(-x**2) * (1 + 0.5 * np.sin(3 * x))),
        Field(grid, 0.8 * np.exp(-4 * (x - 1) ** 2) + 0.4 * np.exp(-4 * (x + 1.5) ** 2)),
        Field(grid, np.where(np.abs(x) < 1.5, np.cos(np.pi * x / 3) ** 2, 0.0)),
    ]


def criterion_1(ctx: _Ctx) -> dict:
    t0 = time.perf_counter()
    g, cs, lam0 = _resolvent_fixture()
    lam = 0.5 * lam0
    factor = sup_bound_factor(cs, g)
    rng = np.random.default_rng(ctx.seed + 101)
    mass_rel, min_val, sup_ratio, contraction = 0.0, math.inf, 0.0, -math.inf
    for f in _fixed_densities(g):
        y = resolvent_J(f, lam, cs)
        f1 = float(np.abs(f.values).sum() * g.cell_volume)
        mass_rel = max(mass_rel, abs(y.mass() - f.mass()) / f1)
        min_val = min(min_val, float(y.values.min()))
        sup_ratio = max(sup_ratio, float(np.abs(y.values).max() / (factor * np.abs(f.values).max())))
    for _ in range(20):
        f, h = _random_density(g, rng), _random_density(g, rng)
        R = factor * max(np.abs(f.values).max(), np.abs(h.values).max())
        yf = resolvent_J(f, lam, cs, state_bound=R)
        yh = resolvent_J(h, lam, cs, state_bound=R)
        contraction = max(contraction, _l1(yf, yh) - _l1(f, h))
        for src, y in ((f, yf), (h, yh)):
            f1 = float(np.abs(src.values).sum() * g.cell_volume)
            mass_rel = max(mass_rel, abs(y.mass() - src.mass()) / f1)
            min_val = min(min_val, float(y.values.min()))
            sup_ratio = max(sup_ratio, float(np.abs(y.values).max() / (factor * np.abs(src.values).max())))
    runtime = time.perf_counter() - t0
    ok = mass_rel <= 1e-9 and contraction <= 1e-9 and min_val >= -1e-8 and sup_ratio <= 1.0 and runtime <= 60
    return {
        "passed": ok,
        "measured": {"mass_rel": mass_rel, "contraction_excess": contraction, "min": min_val,
                     "sup_over_bound": sup_ratio, "lambda": lam, "runtime_s": runtime},
        "limits": {"mass_rel": 1e-9, "contraction_excess": 1e-9, "min": -1e-8, "sup_over_bound": 1.0,
                   "runtime_s": 60},
    }


def criterion_2(ctx: _Ctx) -> dict:
    g, cs, lam0 = _resolvent_fixture()
    tol = 1e-10
    defects = [check_resolvent_identity(f, lam0 / 4, lam0 / 2, cs) for f in _fixed_densities(g)]
    worst = max(defects)
    return {"passed": worst <= 10 * tol, "measured": {"defect": worst, "defects": defects},
            "limits": {"defect": 10 * tol}}


# ---------------------------------------------------------------- criteria 3 and 5


def _linear_runs(ctx: _Ctx):
    if "linear" in ctx.cache:
        return ctx.cache["linear"]
    g = Grid(1, 256, 8.0)
    cs = C.CoefficientSet(C.linear_beta(), C.constant_b(0.0), C.zero_D(1), S_DEFAULT)
    u0 = Field.from_function(g, lambda x: np.exp(-x**2) / np.sqrt(np.pi))
    T = 0.5
    runs = {}
    for h in (1e-3, 5e-4):
        t0 = time.perf_counter()
        p = ctx.keep(f"linear h={h}", evolve(u0, EvolutionConfig(T, h, cs)))
        runs[h] = (p, time.perf_counter() - t0)
    ctx.cache["linear"] = (g, cs, u0, T, runs)
    return ctx.cache["linear"]


def criterion_3(ctx: _Ctx) -> dict:
    g, cs, u0, T, runs = _linear_runs(ctx)
    ex = exact_fractional_heat(u0, T, cs.s)
    e1 = _l1(runs[1e-3][0].final, ex)
    e2 = _l1(runs[5e-4][0].final, ex)
    ratio = e2 / e1
    runtime = runs[1e-3][1] + runs[5e-4][1]
    ok = e1 <= 0.01 and 0.4 <= ratio <= 0.6 and runtime <= 120
    return {"passed": ok, "measured": {"l1_h": e1, "l1_h2": e2, "ratio": ratio, "runtime_s": runtime},
            "limits": {"l1_h": 0.01, "ratio": [0.4, 0.6], "runtime_s": 120}}


def criterion_5(ctx: _Ctx) -> dict:
    g, cs, u0, T, runs = _linear_runs(ctx)
    tests = catalog_test_functions(g, T)
    r1 = {phi.name: distributional_residual(runs[1e-3][0], phi, cs) for phi in tests}
    r2 = {phi.name: distributional_residual(runs[5e-4][0], phi, cs) for phi in tests}
    ratios = {k: r1[k] / r2[k] for k in r1}
    worst = max(r1.values())
    ok = worst <= 1e-3 and min(ratios.values()) >= 1.8
    return {"passed": ok, "measured": {"max_residual_h": worst, "min_ratio": min(ratios.values()),
                                       "residual_h": r1, "residual_h2": r2},
            "limits": {"max_residual_h": 1e-3, "min_ratio": 1.8}}


# ---------------------------------------------------------------- criterion 6


def _kernel_matrix(level: str):
    if level == "full":
        return [0.6, 0.75, 0.9], [0.5, 1.0, 2.0], [1, 2, 3], [0.3, 1.0, 2.5]
    return [0.6, 0.75], [0.5, 1.0], [1, 2], [0.5, 1.0, 2.0]


def criterion_6(ctx: _Ctx) -> dict:
    t0 = time.perf_counter()
    S, E, Dd, R = _kernel_matrix(ctx.level)
    R = np.asarray(R)
    mass, scaling, route = 0.0, 0.0, 0.0
    for s in S:
        for eps in E:
            for d in sorted(set(Dd) | {3}):
                mass = max(mass, abs(eps * resolvent_kernel_mass(s, eps, d) - 1.0))
                lhs = resolvent_kernel_table(s, eps, d, R)
                rhs = eps ** ((d - 2 * s) / (2 * s)) * resolvent_kernel_table(s, 1.0, d, eps ** (1 / (2 * s)) * R)
                scaling = max(scaling, float(np.max(np.abs(lhs / rhs - 1))))
                if d in Dd:
                    four = np.array([resolvent_kernel_fourier(KernelQuery(s, eps, d, r)) for r in R])
                    route = max(route, float(np.max(np.abs(lhs / four - 1))))
    cauchy = 0.0
    x = np.linspace(0.0, 6.0, 13)
    for d in (1, 2, 3):
        for t in (0.3, 1.0):
            p = fractional_heat_kernel(0.5, t, x, d)
            exact = math.gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2) * t / (t**2 + x**2) ** ((d + 1) / 2)
            cauchy = max(cauchy, float(np.max(np.abs(p / exact - 1))))
    runtime = time.perf_counter() - t0
    ok = mass <= 1e-6 and scaling <= 1e-6 and route <= 1e-4 and cauchy <= 1e-6 and runtime <= 300
    return {"passed": ok,
            "measured": {"mass_rel": mass, "scaling_rel": scaling, "route_rel": route, "cauchy_rel": cauchy,
                         "runtime_s": runtime},
            "limits": {"mass_rel": 1e-6, "scaling_rel": 1e-6, "route_rel": 1e-4, "cauchy_rel": 1e-6,
                       "runtime_s": 300}}


# ---------------------------------------------------------------- criterion 7


def criterion_7(ctx: _Ctx) -> dict:
    g = Grid(1, 128, 4.0)
    cs = C.CoefficientSet(C.truncate(C.porous_medium(2), 2), C.lorentzian_b(), C.sine_D(1, 4.0, 0.5), S_DEFAULT)
    T = 0.2
    u0 = _gaussian(g, 0.0, 0.5)
    u1 = _gaussian(g, 0.4, 0.5)
    p = ctx.keep("gauge h=1e-2", evolve(u0, EvolutionConfig(T, 1e-2, cs)))
    pf = ctx.keep("gauge h=5e-3", evolve(u0, EvolutionConfig(T, 5e-3, cs)))
    pf = SolutionPath(pf.times[::2], pf.fields[::2], h=p.h, cs=cs)
    q = ctx.keep("gauge shifted", evolve(u1, EvolutionConfig(T, 1e-2, cs)))
    same = gronwall_audit(GaugePair(p, p))
    refine = gronwall_audit(GaugePair(p, pf), tol=1e-5)
    distinct = gronwall_audit(GaugePair(p, q))
    route_gap = 0.0
    for pair in (GaugePair(p, pf), GaugePair(p, q)):
        for t in pair.times:
            a, b = gauge_h_routes(pair, t)
            route_gap = max(route_gap, abs(a - b))
    level = max(refine.h_trace)
    h_min = min(min(r.h_trace) for r in (same, refine, distinct))
    ok = (h_min >= 0 and route_gap <= 1e-10 and max(same.h_trace) == 0.0
          and distinct.h_trace[-1] >= 10 * level and distinct.verdict == "DIFFERENT")
    return {"passed": ok,
            "measured": {"h_min": h_min, "route_gap": route_gap, "same_max": max(same.h_trace),
                         "refinement_level": level, "distinct_hT": distinct.h_trace[-1],
                         "separation": distinct.h_trace[-1] / level if level > 0 else math.inf,
                         "verdicts": {"same": same.verdict, "refinement": refine.verdict,
                                      "distinct": distinct.verdict},
                         "C_distinct": distinct.C},
            "limits": {"h_min": 0.0, "route_gap": 1e-10, "same_max": 0.0, "separation": 10.0}}


# ---------------------------------------------------------------- criterion 8


def criterion_8(ctx: _Ctx) -> dict:
    t0 = time.perf_counter()
    n = 10**6
    dt = 0.3
    S_list = [0.6, 0.75, 0.9] if ctx.level == "full" else [0.75]
    laplace_z = 0.0
    for k, s in enumerate(S_list):
        x = sample_subordinator(s, dt, stream(ctx.seed + 801, 0, k), n)
        for lam in (0.5, 1.0, 2.0):
            v = np.exp(-lam * x)
            z = abs(v.mean() - math.exp(-dt * lam**s)) / (v.std(ddof=1) / math.sqrt(n))
            laplace_z = max(laplace_z, z)
    d, s, dt2 = 2, S_DEFAULT, 0.2
    X = sample_isotropic_stable(s, dt2, d, stream(ctx.seed + 802, 0, 0), n)
    ang = np.linspace(0.0, np.pi, 8, endpoint=False)
    rad = np.array([0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0])
    xi = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    cf, se = characteristic_function(X, xi)
    cf_z = float(np.max(np.abs(cf - np.exp(-dt2 * rad ** (2 * s))) / se))
    runtime = time.perf_counter() - t0
    ok = laplace_z <= 3 and cf_z <= 3 and runtime <= 180
    return {"passed": ok, "measured": {"laplace_max_z": laplace_z, "cf_max_z": cf_z, "runtime_s": runtime},
            "limits": {"laplace_max_z": 3.0, "cf_max_z": 3.0, "runtime_s": 180}}


# ---------------------------------------------------------------- criteria 9 and 10


def _sde_setup(ctx: _Ctx):
    if "sde" in ctx.cache:
        return ctx.cache["sde"]
    g = Grid(1, 128, 8.0)
    T, h = 0.5, 1e-2
    u0 = _gaussian(g, 0.0, 0.7)
    lin = C.CoefficientSet(C.linear_beta(), C.constant_b(0.0), C.zero_D(1), S_DEFAULT)
    bnd = C.CoefficientSet(C.bounded_porous(), C.lorentzian_b(), C.sine_D(1, 8.0, 0.5), S_DEFAULT)
    out = {"grid": g, "T": T, "h": h, "u0": u0, "cs": {"linear": lin, "bounded": bnd}, "pde": {}}
    for name, cs in out["cs"].items():
        out["pde"][name] = ctx.keep(f"sde {name}", evolve(u0, EvolutionConfig(T, h, cs)))
    # 0.637 sigma gives l1 separation 0.5 between equal-width Gaussians
    u_shift = _gaussian(g, 0.637 * 0.7, 0.7)
    out["pde"]["shifted"] = ctx.keep("sde shifted", evolve(u_shift, EvolutionConfig(T, h, lin)))
    out["separation0"] = _l1(u0, u_shift)
    ctx.cache["sde"] = out
    return out


def _superpose(ctx, setup, cs_name, seed, N=100_000, pde_name=None, mode="decoupled"):
    T, h = setup["T"], setup["h"]
    cfg = LevyConfig(S_DEFAULT, h, N, seed=seed, T=T)
    cs = setup["cs"][cs_name]
    path = setup["pde"][cs_name]
    ep = simulate(setup["u0"], cfg, cs, mode, path, snapshot_times=[0.0, T / 2, T])
    ref = setup["pde"][pde_name or cs_name]
    return superposition_check(ep, ref, tol=1.0, n_boot=40)


def criterion_9(ctx: _Ctx) -> dict:
    t0 = time.perf_counter()
    st = _sde_setup(ctx)
    seed = ctx.seed + 1
    lin = _superpose(ctx, st, "linear", seed)
    bnd = _superpose(ctx, st, "bounded", seed)
    neg = _superpose(ctx, st, "linear", seed, pde_name="shifted")
    ctx.cache["reports"] = {"linear": lin, "bounded": bnd}
    l_lin = lin["snapshots"][-1]["l1"]
    l_bnd = bnd["snapshots"][-1]["l1"]
    l_neg = neg["snapshots"][-1]["l1"]
    measured = {"l1_linear": l_lin, "l1_bounded": l_bnd, "l1_negative": l_neg,
                "separation_t0": st["separation0"]}
    limits = {"l1_linear": 0.05, "l1_bounded": 0.08, "l1_negative": 0.2, "runtime_s": 1800}
    ok = l_lin <= 0.05 and l_bnd <= 0.08 and l_neg >= 0.2
    if ctx.level == "full":
        conv = []
        for N in (1_000, 10_000, 100_000):
            conv.append(_superpose(ctx, st, "linear", seed, N=N)["snapshots"][-1]["l1"])
        sc = _superpose(ctx, st, "bounded", seed, mode="self_consistent")["snapshots"][-1]["l1"]
        measured.update({"l1_by_N": conv, "l1_self_consistent": sc})
        ok = ok and conv[0] > conv[1] > conv[2] and sc <= 0.08
    measured["runtime_s"] = time.perf_counter() - t0
    ok = ok and measured["runtime_s"] <= 1800
    return {"passed": ok, "measured": measured, "limits": limits}


def criterion_10(ctx: _Ctx) -> dict:
    st = _sde_setup(ctx)
    reports = ctx.cache.get("reports") or {"linear": _superpose(ctx, st, "linear", ctx.seed + 1)}
    names = ["linear"] + (["bounded"] if ctx.level == "full" else [])
    measured, ok, worst = {}, True, 0.0
    for name in names:
        a = reports.get(name) or _superpose(ctx, st, name, ctx.seed + 1)
        b = _superpose(ctx, st, name, ctx.seed + 2)
        cmp = compare_reports(a, b, factor=2.0)
        ok = ok and cmp["passed"]
        measured[name] = [{"t": r["t"], "gap": r["gap"], "pooled_se": r["pooled_se"]} for r in cmp["snapshots"]]
        worst = max([worst] + [r["gap"] / r["pooled_se"] for r in cmp["snapshots"]])
    measured["max_gap_over_pooled_se"] = worst
    return {"passed": ok, "measured": measured, "limits": {"max_gap_over_pooled_se": 2.0}}


# ---------------------------------------------------------------- criterion 4


def criterion_4(ctx: _Ctx) -> dict:
    worst_drift, worst_min, bad = 0.0, math.inf, []
    for name, p, nonneg in ctx.paths:
        drift = p.mass_drift()
        mn = p.min_value()
        worst_drift = max(worst_drift, drift)
        if nonneg:
            worst_min = min(worst_min, mn)
        if drift > 1e-8 or (nonneg and mn < -1e-8) or p.failed:
            bad.append(name)
    return {"passed": not bad and bool(ctx.paths),
            "measured": {"runs": len(ctx.paths), "max_mass_drift": worst_drift, "min": worst_min, "failing": bad},
            "limits": {"max_mass_drift": 1e-8, "min": -1e-8}}


CRITERIA = {
    1: ("resolvent contract", criterion_1),
    2: ("resolvent identity", criterion_2),
    3: ("linear benchmark", criterion_3),
    4: ("conservation and positivity", criterion_4),
    5: ("distributional residual", criterion_5),
    6: ("kernel identities", criterion_6),
    7: ("gauge diagnostics", criterion_7),
    8: ("stable sampling", criterion_8),
    9: ("superposition", criterion_9),
    10: ("seed stability", criterion_10),
}

# criterion 4 audits the paths produced by the others, so it runs last
_ORDER = (1, 2, 3, 5, 6, 7, 8, 9, 10, 4)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.3g}"
    return str(v)


def format_line(cid: int, rec: dict) -> str:
    flag = "PASS" if rec["passed"] else "FAIL"
    parts = [f"{k}={_fmt(v)}" for k, v in rec["measured"].items() if isinstance(v, (int, float, str))]
    return f"[{flag}] criterion {cid:2d} {rec['name']}: " + " ".join(parts)


def acceptance_suite(level: str = "quick", seed: int = 0, only=None) -> dict:
    """Run the criteria at ``level`` and return a report with one record per criterion."""
    if level not in ("quick", "full"):
        raise ValueError("level must be quick or full")
    ctx = _Ctx(level, seed)
    records = {}
    for cid in _ORDER:
        if only is not None and cid not in only:
            continue
        name, fn = CRITERIA[cid]
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rec = fn(ctx)
        except Exception as exc:  # report carries failures
            rec = {"passed": False, "measured": {"error": f"{type(exc).__name__}: {exc}"}, "limits": {}}
        rec["name"] = name
        rec["id"] = cid
        rec["wall_s"] = time.perf_counter() - t0
        records[cid] = rec
    ordered = [records[c] for c in sorted(records)]
    return {
        "level": level,
        "seed": seed,
        "passed": all(r["passed"] for r in ordered),
        "criteria": ordered,
        "lines": [format_line(r["id"], r) for r in ordered],
    }
