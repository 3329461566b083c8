"""Resolvent ``J_lambda(f)`` of the fractional nonlinear Fokker-Planck operator.

The discrete operator is

    A(y) = P_eps[beta_eps(y)] + div_h(D_eps b*_eps(y)),

with ``P_eps`` the Fourier multiplier ``(eps + sigma(xi))^s`` and
``sigma`` either ``|xi|^2`` (``scheme='spectral'``) or the symbol of the
second-order lattice Laplacian (``scheme='monotone'``).  On the lattice,
``P_eps`` is a subordinated heat semigroup generator, hence an M-matrix,
and the transport term uses a local Lax-Friedrichs flux.  Together they
make ``I + lambda A`` order preserving and l1 contractive at the discrete
level, which the spectral variant is not.

``eps = 0`` denotes the unregularized operator ``(-Delta)^s beta(y) +
div(D b(y) y)``; :func:`resolvent_J` finishes with it after the
regularized stages.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .coefficients import (
    CoefficientSet,
    cutoff_D,
    drift_bound,
    lambda0,
    regularize_b,
    regularize_beta,
)
from .errors import NoConvergence, StageBoundExceeded
from .spectral import Field, Grid, _derivative, apply_multiplier

__all__ = [
    "SolverControls",
    "ResolventProblem",
    "ResolventSolution",
    "DiscreteOperator",
    "resolve_scheme",
    "stage_bound",
    "solve_preconditioned",
    "solve_chained",
    "resolvent_J",
    "check_resolvent_identity",
    "regularity_constant",
    "beta_energy",
    "sup_bound_factor",
    "DEFAULT_EPS_SCHEDULE",
]

DEFAULT_EPS_SCHEDULE = (1e-2, 1e-3, 1e-4)
DEGENERATE_EPS_FLOOR = 1e-3


@dataclass
class SolverControls:
    """Iteration controls shared by all resolvent solves.

    ``method`` is ``'newton'`` (default) or ``'picard'``; ``scheme`` is
    ``'auto'``, ``'spectral'`` or ``'monotone'``.
    """

    max_iter: int = 60
    tol_l1: float = 1e-10
    damping: float = 1.0
    method: str = "newton"
    scheme: str = "auto"
    chaining: bool = True
    dense_limit: int = 1024
    max_outer: int = 5000

    def __post_init__(self):
        if not self.tol_l1 > 0:
            raise ValueError("tol_l1 must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.method not in ("newton", "picard"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.scheme not in ("auto", "spectral", "monotone"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ResolventProblem:
    f: Field
    lam: float
    eps: float
    cs: CoefficientSet
    controls: SolverControls = field(default_factory=SolverControls)
    state_bound: float | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")


@dataclass
class ResolventSolution:
    y: Field
    iterations: int
    residual_l1: float
    residual_precond_l2: float
    lam: float = 0.0
    eps: float = 0.0
    chain: list | None = None
    merit_history: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "eps": self.eps,
            "iterations": self.iterations,
            "residual_l1": self.residual_l1,
            "residual_precond_l2": self.residual_precond_l2,
            "chain_length": None if self.chain is None else len(self.chain),
            "stages": self.stages,
            "warnings": self.warnings,
        }


def resolve_scheme(cs: CoefficientSet, scheme: str = "auto") -> str:
    """Spectral only for linear, transport-free problems unless forced."""
    if scheme != "auto":
        return scheme
    return "spectral" if cs.is_linear else "monotone"


def _is_degenerate(beta) -> bool:
    r = np.linspace(-4.0, 4.0, 801)
    return bool(np.min(beta.d(r)) <= 0.0)


def sup_bound_factor(cs: CoefficientSet, grid: Grid) -> float:
    """``1 + |(div D)^- + |D||_inf^(1/2)`` probed on the grid."""
    return 1.0 + math.sqrt(drift_bound(cs.D, grid.points()))


def _transport_lipschitz(gd, R: float) -> float:
    r = np.linspace(-R, R, 4001)
    return float(np.max(np.abs(gd(r))))


class DiscreteOperator:
    """The discrete map ``y -> A(y)`` on one grid, one ``eps`` and one scheme.

    Parameters
    ----------
    grid, cs, eps, scheme
        Problem data; ``eps = 0`` selects the unregularized operator.
    state_bound : float
        Range ``[-R, R]`` over which the flux Lipschitz constant is probed.
        Only used by the monotone scheme to size its numerical viscosity.
    """

    def __init__(self, grid: Grid, cs: CoefficientSet, eps: float, scheme: str = "monotone",
                 state_bound: float = 1.0):
        if scheme not in ("spectral", "monotone"):
            raise ValueError(f"scheme must be resolved, got {scheme!r}")
        self.grid, self.cs, self.eps, self.scheme = grid, cs, float(eps), scheme
        s = cs.s
        if eps > 0:
            self.beta = regularize_beta(cs.beta, eps)
            D = cutoff_D(cs.D, eps)
            if cs.b.is_zero:
                self.gstar = self.gstar_d = None
            else:
                _, bstar = regularize_b(cs.b, eps)
                self.gstar, self.gstar_d = bstar.evaluate, bstar.derivative
        else:
            self.beta = cs.beta
            D = cs.D
            self.gstar, self.gstar_d = cs.bstar, cs.bstar_d
        self.D = D
        self.has_transport = not (D.is_zero or cs.b.is_zero)
        sym = grid.symbol_sq("spectral" if scheme == "spectral" else "lattice")
        self.sym = sym
        self.P = (eps + sym) ** s
        self.linear_slope = self.beta.linear_slope
        self.state_bound = max(float(state_bound), 1.0)
        self.G = 0.0
        if self.has_transport:
            self.G = _transport_lipschitz(self.gstar_d, self.state_bound)
            d = grid.dim
            if scheme == "spectral":
                vals = D(grid.points())
                self.Dn = [vals[:, a].reshape(grid.shape) for a in range(d)]
            else:
                self.Df, self.alpha = [], []
                for a in range(d):
                    pts = grid.points().copy()
                    pts[:, a] += 0.5 * grid.dx
                    comp = D(pts)[:, a].reshape(grid.shape)
                    self.Df.append(comp)
                    self.alpha.append(np.abs(comp) * self.G)

    @property
    def is_linear_spectral(self) -> bool:
        return self.scheme == "spectral" and self.linear_slope is not None and not self.has_transport

    def div_from(self, w, v):
        """Discrete ``div(D w)``; ``v`` sets the monotone viscosity term."""
        g = self.grid
        d = g.dim
        out = np.zeros(np.broadcast_shapes(np.shape(w), np.shape(v)))
        if self.scheme == "spectral":
            for a in range(d):
                out += _derivative(self.Dn[a] * w, g, a)
            return out
        for a in range(d):
            ax = a - d
            wr = np.roll(w, -1, axis=ax)
            vr = np.roll(v, -1, axis=ax)
            F = 0.5 * self.Df[a] * (w + wr) - 0.5 * self.alpha[a] * (vr - v)
            out += (F - np.roll(F, 1, axis=ax)) / g.dx
        return out

    def apply(self, y):
        out = apply_multiplier(self.beta(y), self.P, self.grid.dim)
        if self.has_transport:
            out = out + self.div_from(self.gstar(y), y)
        return out

    def jvp(self, y, v):
        out = apply_multiplier(self.beta.d(y) * v, self.P, self.grid.dim)
        if self.has_transport:
            out = out + self.div_from(self.gstar_d(y) * v, v)
        return out

    def jacobian_dense(self, y):
        N = self.grid.size
        E = np.eye(N).reshape((N,) + self.grid.shape)
        cols = self.jvp(y, E)
        return cols.reshape(N, N).T


def stage_bound(op: DiscreteOperator) -> float:
    """Largest step for which the preconditioned map is provably monotone.

    Infinite for the monotone scheme, for transport-free problems and for
    the unregularized stage; otherwise
    ``2 eps min_xi[(eps + xi^2)^s / xi^2] / (|D|_inf Lip(b*_eps))^2``.
    """
    if op.scheme == "monotone" or not op.has_transport or op.eps == 0:
        return math.inf
    K = op.D.sup_bound * op.G
    if K == 0:
        return math.inf
    q = op.sym.ravel()[1:]
    q = q[q > 0]
    ratio = np.min((op.eps + q) ** op.cs.s / q)
    return float(2.0 * op.eps * ratio / K**2)


def _l1(v, grid):
    return float(np.abs(v).sum() * grid.cell_volume)


def _l2(v, grid):
    return float(np.sqrt((v * v).sum() * grid.cell_volume))


def _newton(op, f, lam, ctrl, y0, Q):
    g = op.grid
    y = y0.copy()

    def resid(z):
        return z + lam * op.apply(z) - f

    R = resid(y)
    merit = _l2(apply_multiplier(R, Q, g.dim), g)
    history = [merit]
    r1 = _l1(R, g)
    best = (r1, y.copy())
    for it in range(1, ctrl.max_iter + 1):
        if r1 <= ctrl.tol_l1:
            return y, it - 1, r1, merit, history
        if ctrl.method == "newton":
            delta = _newton_direction(op, y, R, lam, ctrl)
        else:
            cbar = float(np.mean(op.beta.d(y)))
            delta = -apply_multiplier(R, 1.0 / (1.0 + lam * cbar * op.P), g.dim)
        t = ctrl.damping
        while True:
            y_new = y + t * delta
            R_new = resid(y_new)
            m_new = _l2(apply_multiplier(R_new, Q, g.dim), g)
            r1_new = _l1(R_new, g)
            if m_new <= (1.0 - 1e-4 * t) * merit or (r1_new <= ctrl.tol_l1 and m_new <= merit):
                break
            t *= 0.5
            if t < 1e-10:
                raise NoConvergence(
                    f"line search stalled at residual {r1:.3e}", best=Field(g, best[1]),
                    residual=best[0], iterations=it,
                )
        y, R, merit, r1 = y_new, R_new, m_new, r1_new
        history.append(merit)
        if r1 < best[0]:
            best = (r1, y.copy())
    if r1 <= ctrl.tol_l1:
        return y, ctrl.max_iter, r1, merit, history
    raise NoConvergence(
        f"no convergence in {ctrl.max_iter} iterations (residual {best[0]:.3e})",
        best=Field(g, best[1]), residual=best[0], iterations=ctrl.max_iter,
    )


def _newton_direction(op, y, R, lam, ctrl):
    g = op.grid
    N = g.size
    if N <= ctrl.dense_limit:
        J = np.eye(N) + lam * op.jacobian_dense(y)
        return np.linalg.solve(J, -R.ravel()).reshape(g.shape)
    cbar = float(np.mean(op.beta.d(y)))
    pre = 1.0 / (1.0 + lam * cbar * op.P)

    def mv(v):
        v = v.reshape(g.shape)
        return (v + lam * op.jvp(y, v)).ravel()

    def pv(v):
        return apply_multiplier(v.reshape(g.shape), pre, g.dim).ravel()

    A = LinearOperator((N, N), matvec=mv, dtype=float)
    M = LinearOperator((N, N), matvec=pv, dtype=float)
    x, info = gmres(A, -R.ravel(), M=M, rtol=1e-13, atol=0.0, restart=60, maxiter=50)
    return x.reshape(g.shape)


def _merit_weight(op, eps_q):
    return (eps_q + op.sym) ** (-op.cs.s)


def _default_state_bound(f: Field, cs: CoefficientSet) -> float:
    return sup_bound_factor(cs, f.grid) * float(np.abs(f.values).max())


def _solve_direct(op, f, lam, ctrl, y0=None, eps_q=None) -> ResolventSolution:
    g = op.grid
    fv = f.values
    Q = _merit_weight(op, eps_q if eps_q else (op.eps if op.eps > 0 else 1.0))
    if op.is_linear_spectral:
        y = apply_multiplier(fv, 1.0 / (1.0 + lam * op.linear_slope * op.P), g.dim)
        R = y + lam * op.apply(y) - fv
        m = _l2(apply_multiplier(R, Q, g.dim), g)
        return ResolventSolution(Field(g, y), 1, _l1(R, g), m, lam=lam, eps=op.eps, merit_history=[m])
    y, it, r1, m, hist = _newton(op, fv, lam, ctrl, fv.copy() if y0 is None else y0, Q)
    return ResolventSolution(Field(g, y), it, r1, m, lam=lam, eps=op.eps, merit_history=hist)


def _operator(p: ResolventProblem) -> DiscreteOperator:
    scheme = resolve_scheme(p.cs, p.controls.scheme)
    R = p.state_bound if p.state_bound is not None else _default_state_bound(p.f, p.cs)
    return DiscreteOperator(p.f.grid, p.cs, p.eps, scheme, R)


def solve_preconditioned(p: ResolventProblem, y0: Field | None = None, op: DiscreteOperator | None = None) -> ResolventSolution:
    """Solve ``y + lambda A_eps(y) = f`` for one ``(lambda, eps)``.

    Raises :class:`StageBoundExceeded` when ``lambda`` is at or above the
    stage bound and chaining is disabled; with chaining enabled the solve is
    delegated to :func:`solve_chained`.
    """
    op = op or _operator(p)
    bound = stage_bound(op)
    if p.lam >= bound:
        if not p.controls.chaining:
            raise StageBoundExceeded(f"lambda={p.lam:.4g} >= stage bound {bound:.4g}")
        return solve_chained(p.f, p.lam, p.eps, p.cs, controls=p.controls, op=op, y0=y0)
    return _solve_direct(op, p.f, p.lam, p.controls, None if y0 is None else y0.values)


def solve_chained(f: Field, lam: float, eps: float, cs: CoefficientSet, controls: SolverControls | None = None,
                  lam1: float | None = None, op: DiscreteOperator | None = None, y0: Field | None = None,
                  state_bound: float | None = None) -> ResolventSolution:
    """Reach a large step through ``y = J_lam1((1 - lam1/lam) y + (lam1/lam) f)``.

    The outer map is an l1 contraction with factor ``1 - lam1/lam``.  With
    ``lam1`` unset it is half the stage bound, or ``lam`` itself when the
    bound allows a direct solve.
    """
    ctrl = controls or SolverControls()
    if op is None:
        R = state_bound if state_bound is not None else _default_state_bound(f, cs)
        op = DiscreteOperator(f.grid, cs, eps, resolve_scheme(cs, ctrl.scheme), R)
    g = f.grid
    bound = stage_bound(op)
    if lam1 is None:
        lam1 = lam if lam < bound else 0.5 * bound
    if lam1 >= bound:
        raise StageBoundExceeded(f"inner step {lam1:.4g} >= stage bound {bound:.4g}")
    if lam1 >= lam:
        sol = _solve_direct(op, f, lam, ctrl, None if y0 is None else y0.values)
        sol.chain = [{"lambda1": lam, "outer": 0, "increment_l1": 0.0}]
        return sol
    q = 1.0 - lam1 / lam
    y = f.values.copy() if y0 is None else y0.values.copy()
    chain = []
    inner_it = 0
    tol = ctrl.tol_l1
    for k in range(1, ctrl.max_outer + 1):
        w = q * y + (1.0 - q) * f.values
        inner = _solve_direct(op, Field(g, w), lam1, ctrl, y)
        inner_it += inner.iterations
        inc = _l1(inner.y.values - y, g)
        y = inner.y.values
        chain.append({"lambda1": lam1, "outer": k, "increment_l1": inc})
        # a-priori distance to the fixed point, scaled back to the lam-residual
        if inc * q / (1.0 - q) * (lam / lam1) <= tol or inc == 0.0:
            break
    else:
        raise NoConvergence("outer chain did not converge", best=Field(g, y), iterations=ctrl.max_outer)
    R = y + lam * op.apply(y) - f.values
    Q = _merit_weight(op, op.eps if op.eps > 0 else 1.0)
    return ResolventSolution(
        Field(g, y), inner_it, _l1(R, g), _l2(apply_multiplier(R, Q, g.dim), g),
        lam=lam, eps=eps, chain=chain,
    )


def _schedule(cs: CoefficientSet, eps_schedule) -> list[float]:
    sched = list(DEFAULT_EPS_SCHEDULE if eps_schedule is None else eps_schedule)
    if _is_degenerate(cs.beta):
        sched = [e for e in sched if e >= DEGENERATE_EPS_FLOOR] or [DEGENERATE_EPS_FLOOR]
    return sorted(sched, reverse=True)


def beta_energy(y: Field, eps: float, cs: CoefficientSet) -> float:
    """``|(eps I - Delta)^(s/2) beta_eps(y)|_2^2`` by Parseval."""
    beta = regularize_beta(cs.beta, eps) if eps > 0 else cs.beta
    g = y.grid
    w = beta(y.values)
    hat = np.fft.fftn(w) * g.cell_volume
    # |F|^2 dxi^d with the symmetric convention reduces to |fft|^2 dx^d / n^d
    return float(((eps + g.xi_sq) ** cs.s * np.abs(hat) ** 2).sum() / g.volume)


def regularity_constant(f: Field, lam: float, cs: CoefficientSet) -> float:
    """Bound ``C`` on the stage energies of :func:`beta_energy`.

    ``C = lam (|b|_inf + 1) (M + 2)^2 (Lip beta + 1)^2 |f|_inf |f|_1``
    with ``M = |(div D)^- + |D||_inf``.
    """
    g = f.grid
    M = drift_bound(cs.D, g.points())
    bsup = 0.0 if cs.b.is_zero else float(cs.b.sup_bound if cs.b.sup_bound is not None else np.inf)
    lip = cs.beta.lipschitz_bound
    if lip is None:
        R = _default_state_bound(f, cs)
        lip = float(np.max(np.abs(cs.beta.d(np.linspace(-R, R, 4001)))))
    finf = float(np.abs(f.values).max())
    f1 = _l1(f.values, g)
    return lam * (bsup + 1.0) * (M + 2.0) ** 2 * (lip + 1.0) ** 2 * finf * f1


def resolvent_J(f: Field, lam: float, cs: CoefficientSet, eps_schedule=None,
                controls: SolverControls | None = None, return_solution: bool = False,
                state_bound: float | None = None, limit_stage: bool = True,
                cache: dict | None = None):
    """``J_lambda(f)`` through a decreasing ``eps`` schedule.

    Each stage is warm-started from the previous one.  With
    ``limit_stage`` the unregularized operator is solved last and its
    solution returned; stage-to-stage l1 increments are recorded in
    ``solution.stages``.  ``cache`` keeps discrete operators between calls
    that share grid, coefficients, scheme and ``state_bound``.
    """
    ctrl = controls or SolverControls()
    g = f.grid
    notes = []
    lam0 = lambda0(cs, g.points())
    if lam >= lam0:
        msg = f"lambda={lam:.4g} is not below lambda0={lam0:.4g}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    scheme = resolve_scheme(cs, ctrl.scheme)
    R = state_bound if state_bound is not None else _default_state_bound(f, cs)
    eps_list = _schedule(cs, eps_schedule) + ([0.0] if limit_stage else [])
    stages = []
    prev = None
    sol = None
    total_it = 0
    for eps in eps_list:
        key = (eps, scheme, R)
        if cache is not None and key in cache:
            op = cache[key]
        else:
            op = DiscreteOperator(g, cs, eps, scheme, R)
            if cache is not None:
                cache[key] = op
        p = ResolventProblem(f, lam, eps, cs, ctrl, R)
        sol = solve_preconditioned(p, y0=prev, op=op)
        total_it += sol.iterations
        inc = None if prev is None else _l1(sol.y.values - prev.values, g)
        stages.append({
            "eps": eps,
            "iterations": sol.iterations,
            "residual_l1": sol.residual_l1,
            "increment_l1": inc,
            "beta_energy": beta_energy(sol.y, eps, cs),
        })
        prev = sol.y
    sol.stages = stages
    sol.warnings = notes
    sol.iterations = total_it
    return sol if return_solution else sol.y


def check_resolvent_identity(f: Field, lam1: float, lam2: float, cs: CoefficientSet, **kw) -> float:
    """l1 defect of ``J_lam2(f) = J_lam1((lam1/lam2) f + (1 - lam1/lam2) J_lam2(f))``."""
    kw.setdefault("state_bound", _default_state_bound(f, cs))
    y2 = resolvent_J(f, lam2, cs, **kw)
    r = lam1 / lam2
    rhs = resolvent_J(Field(f.grid, r * f.values + (1.0 - r) * y2.values), lam1, cs, **kw)
    return _l1(y2.values - rhs.values, f.grid)
