"""Implicit Euler mild solutions, the exponential formula and weak-form residuals.

The path ``u_h`` is piecewise constant in time: ``u_h(t) = u^j`` on
``[jh, (j+1)h)`` with ``u^{j+1} = J_h(u^j)``.  The discrete operator is
frozen for the whole run (one ``state_bound``) so every step applies the
same map.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .coefficients import CoefficientSet
from .errors import FracFPError
from .resolvent import (
    DiscreteOperator,
    SolverControls,
    resolve_scheme,
    resolvent_J,
    sup_bound_factor,
)
from .spectral import Field, Grid, _derivative, apply_multiplier

__all__ = [
    "EvolutionConfig",
    "SolutionPath",
    "TestFunction",
    "step",
    "evolve",
    "exponential_formula",
    "exact_fractional_heat",
    "catalog_test_functions",
    "distributional_residual",
    "evolve_linearized",
    "linearized_ratio",
]


@dataclass
class EvolutionConfig:
    T: float
    h: float
    cs: CoefficientSet
    controls: SolverControls = field(default_factory=SolverControls)
    eps_schedule: tuple | None = None
    snapshot_stride: int = 1
    limit_stage: bool = True

    def __post_init__(self):
        if not (0 < self.h <= self.T):
            raise ValueError("need 0 < h <= T")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.T / self.h + 1e-9))


@dataclass
class SolutionPath:
    """Snapshots of an implicit Euler run plus per-step traces."""

    times: list
    fields: list
    trace: dict = field(default_factory=lambda: {"t": [], "mass": [], "min": [], "linf": [], "sup_ok": []})
    h: float = 0.0
    cs: CoefficientSet | None = None
    scheme: str = "spectral"
    state_bound: float = 1.0
    failed: str | None = None

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    @property
    def final(self) -> Field:
        return self.fields[-1]

    def at(self, t: float) -> Field:
        """Piecewise-constant value at time ``t`` from the stored snapshots."""
        idx = int(np.searchsorted(np.asarray(self.times), t + 1e-12, side="right")) - 1
        return self.fields[max(idx, 0)]

    def mass_drift(self) -> float:
        m = np.asarray(self.trace["mass"])
        return float(np.max(np.abs(m - m[0])) / max(abs(m[0]), np.finfo(float).tiny))

    def min_value(self) -> float:
        return float(np.min(self.trace["min"]))

    def trace_rows(self) -> list:
        keys = ("t", "mass", "min", "linf")
        return [dict(zip(keys, row)) for row in zip(*(self.trace[k] for k in keys))]


def _record(path: SolutionPath, t: float, u: Field, sup_ok: bool = True):
    path.trace["t"].append(t)
    path.trace["mass"].append(u.mass())
    path.trace["min"].append(float(u.values.min()))
    path.trace["linf"].append(float(np.abs(u.values).max()))
    path.trace["sup_ok"].append(bool(sup_ok))


def step(u: Field, h: float, cs: CoefficientSet, **kw) -> Field:
    """One implicit Euler step ``u^{j+1} = J_h(u^j)``."""
    return resolvent_J(u, h, cs, **kw)


def _march(u0: Field, h: float, n: int, cs: CoefficientSet, controls, eps_schedule, limit_stage,
           stride: int = 1):
    """Yield ``(j, u^j, sup_ok)`` for ``j = 1..n`` with a frozen operator."""
    factor = sup_bound_factor(cs, u0.grid)
    R = factor * float(np.abs(u0.values).max())
    cache: dict = {}
    u = u0
    for j in range(1, n + 1):
        new = resolvent_J(u, h, cs, eps_schedule=eps_schedule, controls=controls, state_bound=R,
                          limit_stage=limit_stage, cache=cache)
        ok = np.abs(new.values).max() <= factor * np.abs(u.values).max() * (1 + 1e-12) + 1e-12
        u = new
        yield j, u, bool(ok), R


def evolve(u0: Field, cfg: EvolutionConfig) -> SolutionPath:
    """Implicit Euler path from ``u0`` up to ``floor(T/h)`` steps.

    On a solver failure the partial path is returned with ``failed`` set.
    """
    ctrl = cfg.controls
    scheme = resolve_scheme(cfg.cs, ctrl.scheme)
    R0 = sup_bound_factor(cfg.cs, u0.grid) * float(np.abs(u0.values).max())
    path = SolutionPath([0.0], [u0.copy()], h=cfg.h, cs=cfg.cs, scheme=scheme, state_bound=R0)
    _record(path, 0.0, u0)
    n = cfg.n_steps
    last = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for j, u, ok, _ in _march(u0, cfg.h, n, cfg.cs, ctrl, cfg.eps_schedule, cfg.limit_stage):
                t = j * cfg.h
                _record(path, t, u, ok)
                last = (t, u)
                if j % cfg.snapshot_stride == 0 or j == n:
                    path.times.append(t)
                    path.fields.append(u)
    except FracFPError as exc:
        path.failed = f"{type(exc).__name__}: {exc}"
        if last is not None and path.times[-1] != last[0]:
            path.times.append(last[0])
            path.fields.append(last[1])
    return path


def exponential_formula(u0: Field, t: float, n: int, cs: CoefficientSet, controls=None,
                        eps_schedule=None, limit_stage: bool = True) -> Field:
    """``(I + (t/n) A)^(-n) u0`` through the same stepping code as :func:`evolve`."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u = u0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _, u, _, _ in _march(u0, t / n, n, cs, controls or SolverControls(), eps_schedule, limit_stage):
            pass
    return u


def exact_fractional_heat(u0: Field, t: float, s: float, slope: float = 1.0) -> Field:
    """Spectral flow ``exp(-t slope |xi|^(2s))`` applied to ``u0``."""
    g = u0.grid
    return Field(g, apply_multiplier(u0.values, np.exp(-t * slope * g.xi_sq**s), g.dim))


# ---------------------------------------------------------------- weak form


@dataclass
class TestFunction:
    """Separable ``phi(t, x) = chi(t) psi(x)``; ``psi`` acts on the grid mesh."""

    chi: Callable
    psi: Callable
    name: str = "phi"

    __test__ = False


def window(T: float):
    """Smooth cutoff equal to 1 at ``t = 0`` and vanishing to all orders at ``t = T``."""

    def chi(t):
        tau = np.asarray(t, dtype=float) / T
        out = np.zeros_like(tau)
        inside = np.abs(tau) < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - tau[inside] ** 2))
        return out

    return chi


def catalog_test_functions(grid: Grid, T: float) -> list:
    """Five windowed plane waves ``cos(m k x.1 + m pi/7)``, ``m = 1..5``, ``k = pi/L``.

    The phases keep every mode sensitive to both even and odd data.
    """
    chi = window(T)
    k = np.pi / grid.L
    out = []
    for m in range(1, 6):
        theta = m * np.pi / 7
        out.append(TestFunction(chi, (lambda mesh, m=m, theta=theta: np.cos(m * k * sum(mesh) + theta)), f"wave{m}"))
    return out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _chi_integrals(chi, edges):
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * _GL_X
    return (chi(nodes) @ _GL_W) * half


def distributional_residual(path: SolutionPath, phi: TestFunction, cs: CoefficientSet | None = None) -> float:
    """Absolute weak-form residual of the piecewise-constant path.

    The ``u phi_t`` term is integrated exactly in time; the remaining terms
    use Gauss quadrature of ``chi`` on each step and spectral evaluation of
    ``(-Delta)^s psi`` and ``grad psi``.
    """
    cs = cs or path.cs
    g = path.grid
    psi = phi.psi(g.mesh)
    if np.all(psi == 0):
        return 0.0
    frac = apply_multiplier(psi, g.xi_sq**cs.s, g.dim)
    has_transport = not (cs.D.is_zero or cs.b.is_zero)
    if has_transport:
        Dv = cs.D(g.points())
        Dgrad = sum(Dv[:, a].reshape(g.shape) * _derivative(psi, g, a) for a in range(g.dim))
    times = np.asarray(path.times, dtype=float)
    chi = phi.chi
    # u_h = u^j on [t_j, t_{j+1}); the last state persists until chi's support ends
    edges = np.append(times, max(_support_end(chi, times[-1]), times[-1]))
    chi_edges = chi(edges)
    ints = _chi_integrals(chi, edges)
    dv = g.cell_volume
    total = float(chi(np.array([0.0]))[0]) * float((psi * path.fields[0].values).sum() * dv)
    for j, u in enumerate(path.fields):
        uv = u.values
        total += (chi_edges[j + 1] - chi_edges[j]) * float((psi * uv).sum() * dv)
        spatial = -float((frac * cs.beta(uv)).sum() * dv)
        if has_transport:
            spatial += float((cs.bstar(uv) * Dgrad).sum() * dv)
        total += ints[j] * spatial
    return abs(total)


def _support_end(chi, t0, horizon=1e6):
    hi = max(t0, 1e-12)
    while chi(np.array([hi]))[0] != 0.0 and hi < horizon:
        hi *= 2
    return hi


# ---------------------------------------------------------------- linearized


def linearized_ratio(beta, u):
    """``beta(u)/u`` with ``beta(0)/0 := 0``."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    nz = u != 0
    out[nz] = beta(u[nz]) / u[nz]
    return out


def evolve_linearized(u_frozen: SolutionPath, v0: Field, cfg: EvolutionConfig | None = None,
                      tol: float = 1e-12) -> SolutionPath:
    """Implicit Euler for ``v_t + (-Delta)^s((beta(u)/u) v) + div(v D b(u)) = 0``.

    ``u`` is taken from ``u_frozen`` at the new time level, so the path must
    store every step.  The spatial operator shares the scheme and flux
    viscosity of the run that produced ``u_frozen``.
    """
    cs = cfg.cs if cfg is not None else u_frozen.cs
    h = u_frozen.h
    g = v0.grid
    times = np.asarray(u_frozen.times)
    if len(times) > 1 and not np.allclose(np.diff(times), h, rtol=1e-9, atol=1e-12):
        raise ValueError("u_frozen must store every step (snapshot_stride = 1)")
    op = DiscreteOperator(g, cs, 0.0, u_frozen.scheme, u_frozen.state_bound)
    path = SolutionPath([0.0], [v0.copy()], h=h, cs=cs, scheme=u_frozen.scheme, state_bound=u_frozen.state_bound)
    _record(path, 0.0, v0)
    v = v0.values
    N = g.size
    for j in range(1, len(times)):
        u = u_frozen.fields[j].values
        c = linearized_ratio(cs.beta, u)
        bu = cs.b(u) if op.has_transport else None

        def apply(w, c=c, bu=bu):
            out = w + h * apply_multiplier(c * w, op.P, g.dim)
            if bu is not None:
                out = out + h * op.div_from(bu * w, w)
            return out

        if N <= 1024:
            E = np.eye(N).reshape((N,) + g.shape)
            Mat = apply(E).reshape(N, N).T
            v = np.linalg.solve(Mat, v.ravel()).reshape(g.shape)
        else:
            pre = 1.0 / (1.0 + h * float(c.mean()) * op.P)
            A = LinearOperator((N, N), matvec=lambda w: apply(w.reshape(g.shape)).ravel(), dtype=float)
            M = LinearOperator((N, N), matvec=lambda w: apply_multiplier(w.reshape(g.shape), pre, g.dim).ravel(),
                               dtype=float)
            x, _ = gmres(A, v.ravel(), x0=v.ravel(), M=M, rtol=tol, atol=0.0, restart=60, maxiter=100)
            v = x.reshape(g.shape)
        vf = Field(g, v)
        _record(path, times[j], vf)
        path.times.append(float(times[j]))
        path.fields.append(vf)
    return path
