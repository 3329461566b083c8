"""Coefficient triples ``(beta, b, D)``, their regularizations and checks.

Scalar nonlinearities are plain vectorized callables wrapped in
:class:`ScalarFunctionSpec`; drift fields act on ``(..., d)`` point arrays.
Hypothesis validation is probe based: it can reject a coefficient set on
a witness point, it cannot certify one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "ScalarFunctionSpec",
    "DriftSpec",
    "CoefficientSet",
    "HypothesisReport",
    "validate",
    "regularize_beta",
    "regularize_b",
    "cutoff_D",
    "truncate",
    "lambda0",
    "drift_bound",
    "mollifier",
    "build_coefficients",
    "CATALOG",
]

Array = np.ndarray


@dataclass(frozen=True)
class ScalarFunctionSpec:
    """A scalar nonlinearity with its derivative and known bounds."""

    evaluate: Callable[[Array], Array]
    derivative: Callable[[Array], Array]
    lipschitz_bound: float | None = None
    sup_bound: float | None = None
    name: str = "anonymous"
    linear_slope: float | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, r):
        return self.evaluate(np.asarray(r, dtype=float))

    def d(self, r):
        return self.derivative(np.asarray(r, dtype=float))

    def derivative_defect(self, probes: Array | None = None, step: float = 1e-5) -> float:
        """Worst relative gap between the derivative and a central difference."""
        if probes is None:
            probes = np.linspace(-3.0, 3.0, 64)
        probes = np.asarray(probes, dtype=float)
        fd = (self(probes + step) - self(probes - step)) / (2 * step)
        an = self.d(probes)
        scale = np.maximum(np.abs(an), 1.0)
        return float(np.max(np.abs(fd - an) / scale))

    @property
    def is_zero(self) -> bool:
        return self.linear_slope == 0.0 and self.params.get("zero", False)


@dataclass(frozen=True)
class DriftSpec:
    """Vector field ``D`` on ``R^d`` with bounds on ``|D|`` and ``(div D)^-``."""

    evaluate: Callable[[Array], Array]
    divergence: Callable[[Array], Array] | None
    sup_bound: float
    div_minus_sup: float
    dim: int
    name: str = "anonymous"
    is_zero: bool = False
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))

    def div(self, x):
        x = np.asarray(x, dtype=float)
        if self.divergence is None:
            return _fd_divergence(self.evaluate, x)
        return self.divergence(x)


def _fd_divergence(fn, x, h=1e-6):
    out = np.zeros(x.shape[:-1])
    for a in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[a] = h
        out += (fn(x + e)[..., a] - fn(x - e)[..., a]) / (2 * h)
    return out


@dataclass(frozen=True)
class CoefficientSet:
    beta: ScalarFunctionSpec
    b: ScalarFunctionSpec
    D: DriftSpec
    s: float

    def __post_init__(self):
        if self.D.is_zero:
            if not 0 < self.s < 1:
                raise ValueError(f"s must lie in (0, 1), got {self.s}")
        elif not 0.5 < self.s < 1:
            raise ValueError(f"s must lie in (1/2, 1) when D is nonzero, got {self.s}")

    @property
    def dim(self) -> int:
        return self.D.dim

    def bstar(self, r):
        r = np.asarray(r, dtype=float)
        return self.b(r) * r

    def bstar_d(self, r):
        r = np.asarray(r, dtype=float)
        return self.b(r) + r * self.b.d(r)

    @property
    def transport_free(self) -> bool:
        return self.D.is_zero or self.b.is_zero

    @property
    def is_linear(self) -> bool:
        return self.beta.linear_slope is not None and self.transport_free

    def describe(self) -> dict:
        return {
            "s": self.s,
            "beta": {"name": self.beta.name, **self.beta.params},
            "b": {"name": self.b.name, **self.b.params},
            "D": {"name": self.D.name, **self.D.params},
        }


@dataclass
class HypothesisReport:
    mode: str
    checks: list = field(default_factory=list)

    def add(self, name: str, ok: bool, witness=None):
        self.checks.append((name, bool(ok), witness))

    def get(self, name: str) -> tuple:
        for c in self.checks:
            if c[0] == name:
                return c
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        if self.mode == "uniqueness":
            names = {c[0]: c[1] for c in self.checks}
            beta_ok = names["(j)"] or (names["(j)'"] and names.get("D==0", False))
            rest = all(ok for n, ok, _ in self.checks if n not in ("(j)", "(j)'", "D==0"))
            return beta_ok and rest
        return all(ok for _, ok, _ in self.checks)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "passed": self.passed,
            "checks": [
                {"name": n, "passed": ok, "witness": _jsonable(w)} for n, ok, w in self.checks
            ],
        }


def _jsonable(w):
    if w is None:
        return None
    w = np.asarray(w, dtype=float)
    return w.tolist()


def _first_witness(mask, points):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    return points[idx[0]]


def validate(cs: CoefficientSet, mode: str = "existence", r_grid=None, x_points=None) -> HypothesisReport:
    """Probe the hypotheses of the existence or uniqueness theory."""
    if mode not in ("existence", "uniqueness"):
        raise ValueError(f"unknown mode {mode!r}")
    r = np.linspace(-5.0, 5.0, 2001) if r_grid is None else np.asarray(r_grid, dtype=float)
    if x_points is None:
        ax = np.linspace(-4.0, 4.0, 33 if cs.dim == 1 else 9)
        x_points = np.stack(np.meshgrid(*([ax] * cs.dim), indexing="ij"), -1).reshape(-1, cs.dim)
    rep = HypothesisReport(mode)
    dbeta = cs.beta.d(r)
    beta0 = float(cs.beta(np.array([0.0]))[0])
    bvals = cs.b(r)
    Dx = cs.D(x_points)
    Dnorm = np.linalg.norm(Dx, axis=-1)
    divm = np.maximum(-cs.D.div(x_points), 0.0)

    if mode == "existence":
        nz = r != 0
        bad = (dbeta <= 0) & nz
        rep.add("(i) beta'>0 off 0", not bad.any(), _first_witness(bad, r))
        rep.add("(i) beta C1", cs.beta.derivative_defect(r[::50], step=1e-7) < 1e-6)
        lip = cs.beta.lipschitz_bound
        if lip is None:
            rep.add("(i) beta Lipschitz", False, r[np.argmax(np.abs(dbeta))])
        else:
            bad = np.abs(dbeta) > lip * (1 + 1e-9) + 1e-12
            rep.add("(i) beta Lipschitz", not bad.any(), _first_witness(bad, r))
        bad = Dnorm > cs.D.sup_bound * (1 + 1e-9) + 1e-12
        rep.add("(ii) D bounded", not bad.any(), _first_witness(bad, x_points))
        sup_b = cs.b.sup_bound
        bad = ~np.isfinite(bvals) | (np.abs(bvals) > (sup_b if sup_b is not None else np.inf) * (1 + 1e-9))
        rep.add("(iii) b bounded", not bad.any() and sup_b is not None, _first_witness(bad, r))
        bad = divm > cs.D.div_minus_sup * (1 + 1e-9) + 1e-12
        rep.add("(iv) (div D)^- bounded", not bad.any(), _first_witness(bad, x_points))
        bad = bvals < 0
        rep.add("(iv) b>=0", not bad.any(), _first_witness(bad, r))
    else:
        bad = dbeta <= 0
        rep.add("(j)", (not bad.any()) and beta0 == 0.0, _first_witness(bad, r))
        bad = dbeta < 0
        rep.add("(j)'", (not bad.any()) and beta0 == 0.0, _first_witness(bad, r))
        rep.add("D==0", cs.D.is_zero)
        bad = Dnorm > cs.D.sup_bound * (1 + 1e-9) + 1e-12
        rep.add("(jj) D bounded", not bad.any(), _first_witness(bad, x_points))
        rep.add("(jjj) b C1", cs.b.derivative_defect(r[::50], step=1e-7) < 1e-6)
    return rep


# ---------------------------------------------------------------- regularizations


def regularize_beta(beta: ScalarFunctionSpec, eps: float) -> ScalarFunctionSpec:
    """``beta_eps(r) = beta(r) + eps r``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    lip = None if beta.lipschitz_bound is None else beta.lipschitz_bound + eps
    slope = None if beta.linear_slope is None else beta.linear_slope + eps
    return ScalarFunctionSpec(
        evaluate=lambda r: beta.evaluate(r) + eps * r,
        derivative=lambda r: beta.derivative(r) + eps,
        lipschitz_bound=lip,
        sup_bound=None,
        name=f"{beta.name}+eps",
        linear_slope=slope,
        params={**beta.params, "eps": eps},
    )


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


_BUMP_MASS = integrate.quad(
    lambda t: math.exp(-1.0 / (1.0 - t * t)), -1, 1, epsabs=0.0, epsrel=1e-12, limit=200
)[0]


def mollifier(t):
    """Normalized bump ``c exp(-1/(1-t^2))`` supported on ``[-1, 1]``."""
    return _bump(t) / _BUMP_MASS


def _mollifier_rule(order: int = 120):
    # tanh-sinh style map concentrates nodes where the bump flattens
    x, w = np.polynomial.legendre.leggauss(order)
    u = 3.0 * x
    t = np.tanh(u)
    jac = 3.0 / np.cosh(u) ** 2
    return t, w * jac * mollifier(t)


_MOLL_T, _MOLL_W = _mollifier_rule()


def mollify(fn, r, eps):
    """``(fn * phi_eps)(r) = integral fn(r - eps t) phi(t) dt``."""
    r = np.asarray(r, dtype=float)
    vals = fn(r[..., None] - eps * _MOLL_T)
    return vals @ _MOLL_W


def regularize_b(b: ScalarFunctionSpec, eps: float) -> tuple[ScalarFunctionSpec, ScalarFunctionSpec]:
    """Return ``(b_eps, b_star_eps)``.

    ``b_eps(r) = (b * phi_eps)(r) / (1 + eps |r|)`` and
    ``b_star_eps(r) = b_eps(r) r``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")

    def conv(r):
        return mollify(b.evaluate, r, eps)

    def dconv(r):
        return mollify(b.derivative, r, eps)

    def be(r):
        return conv(r) / (1.0 + eps * np.abs(r))

    def be_d(r):
        w = 1.0 + eps * np.abs(r)
        return dconv(r) / w - eps * np.sign(r) * conv(r) / w**2

    sup_b = b.sup_bound
    lip_b = b.lipschitz_bound
    b_eps = ScalarFunctionSpec(
        evaluate=be,
        derivative=be_d,
        lipschitz_bound=None if lip_b is None or sup_b is None else lip_b + eps * sup_b,
        sup_bound=sup_b,
        name=f"{b.name}_eps",
        params={**b.params, "eps": eps},
    )
    # |r b_eps'(r)| <= |b'|_inf / eps + |b|_inf
    lip_star = None if lip_b is None or sup_b is None else 2.0 * sup_b + lip_b / eps
    b_star = ScalarFunctionSpec(
        evaluate=lambda r: be(r) * r,
        derivative=lambda r: be(r) + r * be_d(r),
        lipschitz_bound=lip_star,
        sup_bound=None,
        name=f"{b.name}_star_eps",
        params={**b.params, "eps": eps},
    )
    if b.is_zero:
        b_eps = b
    return b_eps, b_star


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _smoothstep_d(t):
    inside = (t > 0) & (t < 1)
    return np.where(inside, 6.0 * t * (1.0 - t), 0.0)


def cutoff_D(D: DriftSpec, eps: float, width: float = 2.0) -> DriftSpec:
    """``D_eps = eta_eps D`` with a C^1 radial ramp from radius ``1/eps`` to ``1/eps + width``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if D.is_zero:
        return D
    R = 1.0 / eps

    def eta(x):
        rad = np.linalg.norm(x, axis=-1)
        return 1.0 - _smoothstep((rad - R) / width)

    def grad_eta(x):
        rad = np.linalg.norm(x, axis=-1)
        dr = -_smoothstep_d((rad - R) / width) / width
        safe = np.where(rad > 0, rad, 1.0)
        return (dr / safe)[..., None] * x

    def ev(x):
        return eta(x)[..., None] * D.evaluate(x)

    def dv(x):
        return eta(x) * D.div(x) + np.sum(grad_eta(x) * D.evaluate(x), axis=-1)

    return DriftSpec(
        evaluate=ev,
        divergence=dv,
        sup_bound=D.sup_bound,
        # (div D_eps)^- <= (div D)^- + 1_{|x|>1/eps} |D| * |grad eta|, |grad eta| <= 3/(2 width)
        div_minus_sup=D.div_minus_sup + 1.5 / width * D.sup_bound,
        dim=D.dim,
        name=f"{D.name}_cut",
        params={**D.params, "eps": eps},
    )


def truncate(f: ScalarFunctionSpec, N: float, probes: int = 4001) -> ScalarFunctionSpec:
    """C^1 truncation: ``f`` on ``[-N, N]``, tangent lines outside."""
    if not N > 0:
        raise ValueError("N must be positive")
    fN, fmN = float(f(np.array([N]))[0]), float(f(np.array([-N]))[0])
    dN, dmN = float(f.d(np.array([N]))[0]), float(f.d(np.array([-N]))[0])

    def ev(r):
        r = np.asarray(r, dtype=float)
        inner = f.evaluate(np.clip(r, -N, N))
        return np.where(r > N, dN * (r - N) + fN, np.where(r < -N, dmN * (r + N) + fmN, inner))

    def dv(r):
        r = np.asarray(r, dtype=float)
        inner = f.derivative(np.clip(r, -N, N))
        return np.where(r > N, dN, np.where(r < -N, dmN, inner))

    grid = np.linspace(-N, N, probes)
    lip = float(np.max(np.abs(f.d(grid))))
    slope = f.linear_slope
    return ScalarFunctionSpec(
        evaluate=ev,
        derivative=dv,
        lipschitz_bound=lip,
        sup_bound=f.sup_bound if (dN == 0 and dmN == 0) else None,
        name=f"{f.name}_N",
        linear_slope=slope,
        params={**f.params, "N": N},
    )


def drift_bound(D: DriftSpec, points=None) -> float:
    """``M = |(div D)^- + |D||_inf``, probed on ``points`` or from declared bounds."""
    if D.is_zero:
        return 0.0
    if points is None:
        return D.div_minus_sup + D.sup_bound
    points = np.asarray(points, dtype=float)
    val = np.maximum(-D.div(points), 0.0) + np.linalg.norm(D(points), axis=-1)
    return float(val.max())


def lambda0(cs: CoefficientSet, points=None) -> float:
    """Admissible resolvent step ``[M + M^(1/2) |b|_inf]^(-1)``."""
    M = drift_bound(cs.D, points)
    bsup = 0.0 if cs.b.is_zero else (cs.b.sup_bound if cs.b.sup_bound is not None else np.inf)
    denom = M + math.sqrt(M) * bsup if M > 0 else 0.0
    if denom == 0:
        return math.inf
    return 1.0 / denom


# ---------------------------------------------------------------- catalog


def linear_beta(slope: float = 1.0) -> ScalarFunctionSpec:
    return ScalarFunctionSpec(
        evaluate=lambda r: slope * r,
        derivative=lambda r: np.full_like(r, slope, dtype=float),
        lipschitz_bound=abs(slope),
        name="linear",
        linear_slope=slope,
        params={"slope": slope},
    )


def porous_medium(m: float = 2.0) -> ScalarFunctionSpec:
    if m < 1:
        raise ValueError("porous_medium needs m >= 1")
    return ScalarFunctionSpec(
        evaluate=lambda r: np.abs(r) ** (m - 1) * r,
        derivative=lambda r: m * np.abs(r) ** (m - 1),
        lipschitz_bound=1.0 if m == 1 else None,
        name="porous_medium",
        linear_slope=1.0 if m == 1 else None,
        params={"m": m},
    )


def bounded_porous(kappa: float = 0.5) -> ScalarFunctionSpec:
    """``beta(r) = r|r|/(kappa+|r|)``: degenerate at 0, slope 1 at infinity."""
    return ScalarFunctionSpec(
        evaluate=lambda r: r * np.abs(r) / (kappa + np.abs(r)),
        derivative=lambda r: 1.0 - kappa**2 / (kappa + np.abs(r)) ** 2,
        lipschitz_bound=1.0,
        name="bounded_porous",
        params={"kappa": kappa},
    )


def constant_b(c: float = 1.0) -> ScalarFunctionSpec:
    zero = c == 0
    return ScalarFunctionSpec(
        evaluate=lambda r: np.full_like(np.asarray(r, dtype=float), c),
        derivative=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        lipschitz_bound=0.0,
        sup_bound=abs(c),
        name="constant_b",
        linear_slope=0.0 if zero else None,
        params={"c": c, "zero": zero} if zero else {"c": c},
    )


def lorentzian_b(c: float = 1.0) -> ScalarFunctionSpec:
    """``b(r) = c / (1 + r^2)``."""
    return ScalarFunctionSpec(
        evaluate=lambda r: c / (1.0 + r * r),
        derivative=lambda r: -2.0 * c * r / (1.0 + r * r) ** 2,
        lipschitz_bound=abs(c) * 3.0 * math.sqrt(3.0) / 8.0,
        sup_bound=abs(c),
        name="lorentzian_b",
        params={"c": c},
    )


def logistic_b(c: float = 1.0) -> ScalarFunctionSpec:
    """``b(r) = c / (1 + exp(-r))``."""

    def ev(r):
        return c * 0.5 * (1.0 + np.tanh(0.5 * r))

    def dv(r):
        return c * 0.25 / np.cosh(0.5 * r) ** 2

    return ScalarFunctionSpec(
        evaluate=ev,
        derivative=dv,
        lipschitz_bound=abs(c) / 4.0,
        sup_bound=abs(c),
        name="logistic_b",
        params={"c": c},
    )


def zero_D(dim: int) -> DriftSpec:
    return DriftSpec(
        evaluate=lambda x: np.zeros(np.shape(x)),
        divergence=lambda x: np.zeros(np.shape(x)[:-1]),
        sup_bound=0.0,
        div_minus_sup=0.0,
        dim=dim,
        name="zero_D",
        is_zero=True,
    )


def constant_D(vector) -> DriftSpec:
    v = np.atleast_1d(np.asarray(vector, dtype=float))
    return DriftSpec(
        evaluate=lambda x: np.broadcast_to(v, np.shape(x)).copy(),
        divergence=lambda x: np.zeros(np.shape(x)[:-1]),
        sup_bound=float(np.linalg.norm(v)),
        div_minus_sup=0.0,
        dim=v.size,
        name="constant_D",
        is_zero=bool(np.all(v == 0)),
        params={"vector": v.tolist()},
    )


def sine_D(dim: int, L: float, amplitude: float = 0.5) -> DriftSpec:
    """``D_a(x) = A sin(pi x_a / L)``, periodic on the box."""
    k = math.pi / L

    def ev(x):
        return amplitude * np.sin(k * x)

    def dv(x):
        return amplitude * k * np.cos(k * x).sum(axis=-1)

    return DriftSpec(
        evaluate=ev,
        divergence=dv,
        sup_bound=abs(amplitude) * math.sqrt(dim),
        div_minus_sup=abs(amplitude) * k * dim,
        dim=dim,
        name="sine_D",
        params={"amplitude": amplitude, "L": L},
    )


def rotational_D(dim: int, L: float, amplitude: float = 0.5) -> DriftSpec:
    """Divergence-free cellular flow from ``psi = A sin(k x1) sin(k x2)``."""
    if dim < 2:
        raise ValueError("rotational_D needs dim >= 2")
    k = math.pi / L

    def ev(x):
        out = np.zeros(np.shape(x))
        x1, x2 = x[..., 0], x[..., 1]
        out[..., 0] = amplitude * k * np.sin(k * x1) * np.cos(k * x2)
        out[..., 1] = -amplitude * k * np.cos(k * x1) * np.sin(k * x2)
        return out

    return DriftSpec(
        evaluate=ev,
        divergence=lambda x: np.zeros(np.shape(x)[:-1]),
        sup_bound=abs(amplitude) * k * math.sqrt(2.0),
        div_minus_sup=0.0,
        dim=dim,
        name="rotational_D",
        params={"amplitude": amplitude, "L": L},
    )


CATALOG = {
    "beta": {
        "linear": linear_beta,
        "porous_medium": porous_medium,
        "bounded_porous": bounded_porous,
    },
    "b": {
        "constant": constant_b,
        "zero": lambda: constant_b(0.0),
        "lorentzian": lorentzian_b,
        "logistic_b": logistic_b,
    },
    "D": {
        "zero": zero_D,
        "constant_D": constant_D,
        "sine_D": sine_D,
        "rotational_D": rotational_D,
    },
}


def build_coefficients(spec: dict, dim: int, L: float) -> CoefficientSet:
    """Instantiate a :class:`CoefficientSet` from a catalog declaration.

    ``spec`` looks like ``{"s": 0.75, "beta": {"name": "porous_medium",
    "m": 2, "truncate": 2}, "b": {"name": "lorentzian"}, "D": {"name":
    "sine_D", "amplitude": 0.5}}``.
    """
    from .errors import ConfigError

    try:
        s = float(spec["s"])
        beta_cfg = dict(spec.get("beta", {"name": "linear"}))
        b_cfg = dict(spec.get("b", {"name": "zero"}))
        D_cfg = dict(spec.get("D", {"name": "zero"}))
        trunc_beta = beta_cfg.pop("truncate", None)
        trunc_b = b_cfg.pop("truncate", None)
        beta = CATALOG["beta"][beta_cfg.pop("name")](**beta_cfg)
        b = CATALOG["b"][b_cfg.pop("name")](**b_cfg)
        D_name = D_cfg.pop("name")
        if D_name == "constant_D":
            D = constant_D(D_cfg.get("vector", [0.0] * dim))
            if D.dim != dim:
                raise ConfigError("constant_D vector length must equal grid dim")
        elif D_name == "zero":
            D = zero_D(dim)
        else:
            D = CATALOG["D"][D_name](dim=dim, L=L, **D_cfg)
    except KeyError as exc:
        raise ConfigError(f"unknown or missing coefficient entry: {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"bad coefficient parameters: {exc}") from exc
    if trunc_beta is not None:
        beta = truncate(beta, float(trunc_beta))
    if trunc_b is not None:
        b = truncate(b, float(trunc_b))
    try:
        return CoefficientSet(beta=beta, b=b, D=D, s=s)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
