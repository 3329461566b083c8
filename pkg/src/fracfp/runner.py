"""Scenario execution: stage pipeline, output files and the run manifest."""

from __future__ import annotations

import csv
import platform
import time
import traceback
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import lambda0, validate
from .config import RunConfig, deep_merge, initial_field
from .errors import ConfigError, FracFPError
from .evolution import (
    EvolutionConfig,
    SolutionPath,
    catalog_test_functions,
    distributional_residual,
    evolve,
    exact_fractional_heat,
)
from .gauge import GaugePair, gronwall_audit
from .io import atomic_write_json, sha256_file, write_field_csv
from .resolvent import check_resolvent_identity, resolvent_J, sup_bound_factor

__all__ = ["RunManifest", "run_scenario", "MAX_POSITION_ROWS"]

MAX_POSITION_ROWS = 10_000


@dataclass
class RunManifest:
    config: dict
    out: Path
    version: str = __version__
    timings: dict = field(default_factory=dict)
    invariants: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    files: list = field(default_factory=list)
    report: dict = field(default_factory=dict)

    def check(self, name: str, ok: bool, value=None, limit=None):
        self.invariants.append({"name": name, "ok": bool(ok), "value": value, "limit": limit})

    @property
    def ok(self) -> bool:
        return not self.errors and all(i["ok"] for i in self.invariants)

    @property
    def status(self) -> str:
        if self.errors:
            return "error"
        return "ok" if self.ok else "invariant_failure"

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "version": self.version,
            "platform": platform.python_version(),
            "status": self.status,
            "timings": self.timings,
            "invariants": self.invariants,
            "warnings": self.warnings,
            "errors": self.errors,
            "files": self.files,
        }


class _Context:
    def __init__(self, cfg: RunConfig, manifest: RunManifest):
        self.cfg = cfg
        self.m = manifest
        self.u0 = cfg.initial()
        self.path: SolutionPath | None = None

    def file(self, rel: str) -> Path:
        p = self.m.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p


def _capture(m: RunManifest, w: list):
    for item in w:
        msg = str(item.message)
        if msg not in m.warnings:
            m.warnings.append(msg)


def _stage_validate(ctx: _Context):
    cs = ctx.cfg.cs
    pts = ctx.cfg.grid.points()
    out = {}
    for mode in ("existence", "uniqueness"):
        rep = validate(cs, mode, x_points=pts)
        out[mode] = rep.to_dict()
        if not rep.passed:
            ctx.m.warnings.append(f"{mode} hypotheses not met: {rep.to_dict()}")
    out["lambda0"] = lambda0(cs, pts)
    ctx.m.report["validate"] = out


def _stage_resolvent(ctx: _Context):
    cfg, cs, f = ctx.cfg, ctx.cfg.cs, ctx.u0
    block = cfg.raw.get("resolvent", {})
    lam0 = lambda0(cs, cfg.grid.points())
    lam = float(block["lam"]) if "lam" in block else float(block.get("lam_fraction", 0.5)) * lam0
    sol = resolvent_J(f, lam, cs, controls=cfg.controls, return_solution=True)
    y = sol.y
    _capture_notes(ctx.m, sol.warnings)
    bound = sup_bound_factor(cs, cfg.grid) * float(np.abs(f.values).max())
    mass_err = abs(y.mass() - f.mass())
    f1 = float(np.abs(f.values).sum() * cfg.grid.cell_volume)
    ctx.m.check("resolvent.mass", mass_err <= 1e-9 * f1, mass_err, 1e-9 * f1)
    if np.all(f.values >= 0):
        ctx.m.check("resolvent.min", y.values.min() >= -1e-8, float(y.values.min()), -1e-8)
    ctx.m.check("resolvent.sup", np.abs(y.values).max() <= bound, float(np.abs(y.values).max()), bound)
    defect = None
    if lam < lam0:
        defect = check_resolvent_identity(f, 0.5 * lam, lam, cs, controls=cfg.controls)
        lim = 10 * cfg.controls.tol_l1
        ctx.m.check("resolvent.identity", defect <= lim, defect, lim)
    write_field_csv(y, ctx.file("fields/resolvent.csv"))
    ctx.m.report["resolvent"] = {"lam": lam, "lambda0": lam0, "summary": sol.summary(), "identity_defect": defect}


def _capture_notes(m: RunManifest, notes):
    for msg in notes or []:
        if msg not in m.warnings:
            m.warnings.append(msg)


def _evolution_config(cfg: RunConfig, block: dict) -> EvolutionConfig:
    try:
        return EvolutionConfig(T=float(block["T"]), h=float(block["h"]), cs=cfg.cs, controls=cfg.controls)
    except KeyError as exc:
        raise ConfigError(f"evolution block needs {exc}") from exc


def _run_path(ctx: _Context, u0, block) -> SolutionPath:
    ecfg = _evolution_config(ctx.cfg, block)
    lam0 = lambda0(ctx.cfg.cs, ctx.cfg.grid.points())
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        path = evolve(u0, ecfg)
    _capture(ctx.m, w)
    if ecfg.h >= lam0:
        note = f"time step h={ecfg.h:.4g} is not below lambda0={lam0:.4g}"
        if note not in ctx.m.warnings:
            ctx.m.warnings.append(note)
    return path


def _stage_evolve(ctx: _Context):
    cfg = ctx.cfg
    block = cfg.raw.get("evolution", {})
    path = _run_path(ctx, ctx.u0, block)
    ctx.path = path
    stride = int(block.get("snapshot_stride", 1))
    if path.failed:
        ctx.m.errors.append({"stage": "evolve", "error": path.failed})
    drift = path.mass_drift()
    ctx.m.check("evolve.mass_drift", drift <= 1e-8, drift, 1e-8)
    if np.all(ctx.u0.values >= 0):
        ctx.m.check("evolve.min", path.min_value() >= -1e-8, path.min_value(), -1e-8)
    ctx.m.check("evolve.sup_bound", all(path.trace["sup_ok"]), None, None)
    keep = list(range(0, len(path.fields), stride))
    if keep[-1] != len(path.fields) - 1:
        keep.append(len(path.fields) - 1)
    for k in keep:
        write_field_csv(path.fields[k], ctx.file(f"fields/u_{k:05d}.csv"))
    rows = path.trace_rows()
    out = {"steps": len(path.fields) - 1, "h": path.h, "scheme": path.scheme, "mass_drift": drift,
           "min": path.min_value(), "snapshots": [path.times[k] for k in keep]}
    if cfg.cs.is_linear and cfg.cs.transport_free:
        slope = cfg.cs.beta.linear_slope
        errs = []
        for row, u in zip(rows, path.fields):
            ex = exact_fractional_heat(ctx.u0, row["t"], cfg.cs.s, slope)
            e = float(np.abs(u.values - ex.values).sum() * cfg.grid.cell_volume)
            row["exact_l1"] = e
            errs.append(e)
        lim = float(block.get("exact_tol", 0.01))
        ctx.m.check("evolve.exact_l1", errs[-1] <= lim, errs[-1], lim)
        out["exact_l1_final"] = errs[-1]
    T = path.times[-1]
    out["residuals"] = {phi.name: distributional_residual(path, phi, cfg.cs)
                        for phi in catalog_test_functions(cfg.grid, T)}
    _write_csv(ctx.file("traces.csv"), rows)
    ctx.m.report["evolve"] = out


def _write_csv(path: Path, rows: list):
    if not rows:
        return
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})


def _require_path(ctx: _Context, stage: str):
    if ctx.path is None:
        _stage_evolve(ctx)
    if ctx.path is None or ctx.path.failed:
        raise FracFPError(f"{stage} needs a completed evolution")


def _stage_gauge(ctx: _Context):
    cfg = ctx.cfg
    _require_path(ctx, "gauge")
    block = cfg.raw.get("gauge", {})
    other = block.get("other", {})
    ev = deep_merge(cfg.raw.get("evolution", {}), other.get("evolution", {}))
    u_other = initial_field(other["initial"], cfg.grid) if "initial" in other else ctx.u0
    p2 = _run_path(ctx, u_other, ev)
    p1 = ctx.path
    ratio = int(round(p1.h / p2.h))
    if ratio < 1 or abs(ratio * p2.h - p1.h) > 1e-12 * p1.h:
        raise ConfigError("gauge.other.evolution.h must divide evolution.h")
    p2 = SolutionPath(p2.times[::ratio], p2.fields[::ratio], h=p1.h, cs=p2.cs, scheme=p2.scheme)
    pair = GaugePair(p1, p2, eps_g=float(block.get("eps_g", 0.01)), eps_m=block.get("eps_m"))
    rep = gronwall_audit(pair, tol=float(block.get("tol", 1e-10)))
    ctx.m.check("gauge.nonnegative", min(rep.h_trace) >= 0, min(rep.h_trace), 0.0)
    _write_csv(ctx.file("gauge_trace.csv"), rep.trace_rows())
    ctx.m.report["gauge"] = rep.to_dict()


def _stage_sde(ctx: _Context):
    from .particles import LevyConfig, estimate_density, simulate, superposition_check

    cfg = ctx.cfg
    _require_path(ctx, "sde")
    block = cfg.raw.get("sde", {})
    ev = cfg.raw.get("evolution", {})
    dt = float(block.get("dt", ev.get("h")))
    T = float(ev["T"])
    lcfg = LevyConfig(cfg.cs.s, dt, int(block.get("N", 10_000)), seed=cfg.seed, T=T,
                      R_cap=block.get("R_cap"))
    stride = int(ev.get("snapshot_stride", 1))
    snaps = sorted(set(ctx.path.times[::stride]) | {ctx.path.times[-1]})
    ep = simulate(ctx.u0, lcfg, cfg.cs, block.get("mode", "decoupled"), ctx.path, snapshot_times=snaps)
    rep = superposition_check(ep, ctx.path, tol=float(block.get("tol", 0.05)))
    ctx.m.check("sde.superposition", rep["passed"], max(r["l1"] for r in rep["snapshots"]), rep["tol"])
    thin = max(1, -(-lcfg.N // MAX_POSITION_ROWS))
    for k, (t, X) in enumerate(zip(ep.times, ep.positions)):
        sub = X[::thin]
        np.savetxt(ctx.file(f"fields/positions_{k:03d}.csv"), sub, delimiter=",", fmt="%.17g",
                   header=",".join(f"x{a}" for a in range(X.shape[1])) + f"\n# t={t!r} thinning={thin}",
                   comments="")
        write_field_csv(estimate_density(X, cfg.grid).values, ctx.file(f"fields/kde_{k:03d}.csv"))
    rep["thinning"] = thin
    rep["escaped_mass"] = ep.escaped
    ctx.m.report["sde"] = rep


def _stage_kernel(ctx: _Context):
    from .kernel import (
        KernelQuery,
        fractional_heat_kernel,
        resolvent_kernel_fourier,
        resolvent_kernel_mass,
        resolvent_kernel_table,
    )

    block = ctx.cfg.raw.get("kernel", {})
    S = block.get("s", [0.75])
    E = block.get("eps", [1.0])
    Dd = block.get("d", [1])
    R = np.asarray(block.get("r", [0.5, 1.0, 2.0]), dtype=float)
    rows = []
    for s in S:
        for eps in E:
            for d in Dd:
                mass = resolvent_kernel_mass(s, eps, d)
                sub = resolvent_kernel_table(s, eps, d, R)
                unit = eps ** ((d - 2 * s) / (2 * s)) * resolvent_kernel_table(s, 1.0, d, eps ** (1 / (2 * s)) * R)
                four = np.array([resolvent_kernel_fourier(KernelQuery(s, eps, d, r)) for r in R])
                rows.append({"s": s, "eps": eps, "d": d,
                             "mass_rel": abs(eps * mass - 1.0),
                             "scaling_rel": float(np.max(np.abs(sub / unit - 1))),
                             "route_rel": float(np.max(np.abs(sub / four - 1)))})
    x = np.linspace(0.0, 5.0, 11)
    t = 0.7
    p = fractional_heat_kernel(0.5, t, x, 1)
    cauchy = float(np.max(np.abs(p / (t / np.pi / (t**2 + x**2)) - 1)))
    ctx.m.check("kernel.mass", max(r["mass_rel"] for r in rows) <= 1e-6, max(r["mass_rel"] for r in rows), 1e-6)
    ctx.m.check("kernel.scaling", max(r["scaling_rel"] for r in rows) <= 1e-6,
                max(r["scaling_rel"] for r in rows), 1e-6)
    ctx.m.check("kernel.routes", max(r["route_rel"] for r in rows) <= 1e-4, max(r["route_rel"] for r in rows), 1e-4)
    ctx.m.check("kernel.cauchy", cauchy <= 1e-6, cauchy, 1e-6)
    _write_csv(ctx.file("traces.csv"), rows)
    ctx.m.report["kernel"] = {"rows": rows, "cauchy_rel": cauchy}


_STAGE_FN = {
    "validate": _stage_validate,
    "resolvent": _stage_resolvent,
    "evolve": _stage_evolve,
    "gauge": _stage_gauge,
    "sde": _stage_sde,
    "kernel": _stage_kernel,
}


def run_scenario(cfg: RunConfig, out, stages: list | None = None) -> RunManifest:
    """Run the configured pipeline and write outputs plus ``manifest.json`` under ``out``.

    Stage failures are recorded and the remaining stages skipped; files
    already written are kept and inventoried.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    m = RunManifest(config=cfg.to_dict(), out=out)
    ctx = _Context(cfg, m)
    for stage in stages or cfg.pipeline:
        t0 = time.perf_counter()
        try:
            _STAGE_FN[stage](ctx)
        except ConfigError:
            raise
        except (FracFPError, ValueError, FloatingPointError) as exc:
            m.errors.append({"stage": stage, "error": f"{type(exc).__name__}: {exc}",
                             "traceback": traceback.format_exc(limit=4)})
            break
        finally:
            m.timings[stage] = time.perf_counter() - t0
    atomic_write_json(m.report, out / "report.json")
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    m.files = [{"path": str(p.relative_to(out)), "sha256": sha256_file(p), "bytes": p.stat().st_size}
               for p in files]
    atomic_write_json(m.to_dict(), out / "manifest.json")
    return m
