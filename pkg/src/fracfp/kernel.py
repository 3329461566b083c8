"""Whole-space subordination kernels.

``eta_density`` is the density of the one-sided stable law with Laplace
transform ``exp(-lambda^s)``: Kanter's integral below ``r = 2`` and the
convergent power series in ``r^(-s)`` above.  Subordinated quantities are
trapezoid sums in logarithmic variables, which converge geometrically for
these integrands; every table is computed at spacing ``delta`` and
``delta/2`` and the difference is reported as the quadrature error.

The resolvent kernel ``g`` with multiplier ``1/(eps + |xi|^(2s))`` is
available through two independent routes: subordination with the potential
density of the killed subordinator, and radial Fourier inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import DomainError, QuadratureFailure
from .spectral import Field

__all__ = [
    "StableDensity",
    "KernelQuery",
    "eta_density",
    "eta_laplace",
    "heat_kernel",
    "fractional_heat_kernel",
    "resolvent_kernel_subordination",
    "resolvent_kernel_fourier",
    "resolvent_kernel_table",
    "resolvent_kernel_mass",
    "fractional_heat_mass",
    "riesz_constant",
    "sphere_area",
    "phi_epsilon_offgrid",
]

_SERIES_SWITCH = 2.0
_SERIES_TERMS = 400


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in ``R^d`` (2 for ``d = 1``)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _kanter(s: float, x: float) -> float:
    a = s / (1.0 - s)
    z = x ** (-a)

    def A(u):
        # log form: sin(u)^(1/(1-s)) underflows near u = 0 when s is close to 1
        la = a * math.log(math.sin(s * u)) + math.log(math.sin((1 - s) * u)) - math.log(math.sin(u)) / (1 - s)
        return math.exp(la)

    A0 = s**a * (1 - s)
    if z * A0 > 745:
        return 0.0
    val = integrate.quad(lambda u: A(u) * math.exp(-z * (A(u) - A0)), 0.0, math.pi,
                         epsabs=0.0, epsrel=1e-13, limit=400)[0]
    if val == 0.0:
        return 0.0
    return math.exp(math.log(a * val / math.pi) - math.log(x) / (1 - s) - z * A0)


def _series(s: float, x: np.ndarray) -> np.ndarray:
    k = np.arange(1, _SERIES_TERMS + 1)
    logx = np.log(np.asarray(x, dtype=float))[..., None]
    lt = gammaln(k * s + 1) - gammaln(k + 1) - (k * s + 1) * logx
    sgn = np.where(k % 2 == 1, 1.0, -1.0) * np.sin(np.pi * k * s)
    return (sgn * np.exp(lt)).sum(axis=-1) / np.pi


def eta_density(s: float, r, method: str = "auto"):
    """Density of the one-sided ``s``-stable law at time 1.

    ``method`` is ``'auto'``, ``'integral'``, ``'series'`` or
    ``'closed_form'`` (``s = 1/2`` only).
    """
    if not 0 < s < 1:
        raise DomainError("s must lie in (0, 1)")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise DomainError("eta_density needs r > 0")
    flat = r_arr.ravel()
    if method == "closed_form":
        if s != 0.5:
            raise DomainError("closed form exists only for s = 1/2")
        out = (4 * np.pi) ** -0.5 * flat**-1.5 * np.exp(-0.25 / flat)
    elif method == "series":
        out = _series(s, flat)
    elif method == "integral":
        out = np.array([_kanter(s, x) for x in flat])
    elif method == "auto":
        out = np.empty_like(flat)
        hi = flat >= _SERIES_SWITCH
        out[hi] = _series(s, flat[hi])
        out[~hi] = [_kanter(s, x) for x in flat[~hi]]
    else:
        raise ValueError(f"unknown method {method!r}")
    out = np.maximum(out, 0.0)
    return float(out[0]) if np.ndim(r) == 0 else out.reshape(r_arr.shape)


def _warp(w, a):
    """``u(w) = w/a + (1 - 1/a) softplus(w)``: fine spacing where eta rises steeply."""
    return w / a + (1.0 - 1.0 / a) * np.logaddexp(0.0, w)


def _warp_d(w, a):
    return 1.0 / a + (1.0 - 1.0 / a) / (1.0 + np.exp(-w))


@dataclass(frozen=True)
class StableDensity:
    """Cached nodes of ``eta^s_1`` on a warped logarithmic grid.

    ``q`` are the nodes, ``weights`` the trapezoid weights for
    ``integral F(q) dq ~ sum F(q_k) weights_k``.
    """

    s: float
    delta: float = 0.05
    u_hi: float = 140.0
    method: str = "integral+series"

    @property
    def a(self) -> float:
        return max(self.s / (1.0 - self.s), 1.0)

    @property
    def nodes(self):
        return _stable_nodes(self.s, self.delta, self.u_hi)

    def integrate(self, fn) -> np.ndarray:
        q, w, eta = self.nodes
        return fn(q) @ (w * eta) if np.ndim(fn(q[:1])) > 1 else np.sum(fn(q) * w * eta)

    def laplace(self, lam: float) -> float:
        q, w, eta = self.nodes
        return float(np.sum(np.exp(-lam * q) * w * eta))

    def mass(self) -> float:
        q, w, eta = self.nodes
        return float(np.sum(w * eta))


@lru_cache(maxsize=32)
def _stable_nodes(s: float, delta: float, u_hi: float):
    a = max(s / (1.0 - s), 1.0)
    # lower end: eta below 1e-300 (log eta ~ -(1-s) s^a q^(-a))
    c = (1 - s) * s ** (s / (1 - s))
    u_lo = -math.log(700.0 / c) / (s / (1 - s))
    w_lo = _find_w(u_lo, a)
    w_hi = _find_w(u_hi, a)
    w = np.arange(w_lo, w_hi + delta, delta)
    u = _warp(w, a)
    q = np.exp(u)
    weights = delta * _warp_d(w, a) * q
    eta = eta_density(s, q)
    return q, weights, eta


def _find_w(u_target, a):
    lo, hi = -1e4, 1e4
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _warp(mid, a) < u_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def eta_laplace(s: float, lam: float, delta: float = 0.05) -> float:
    """``integral exp(-lam r) eta^s_1(r) dr`` by the cached node table."""
    return StableDensity(s, delta).laplace(lam)


def heat_kernel(r_time, x, d: int | None = None):
    """Gaussian ``(4 pi r)^(-d/2) exp(-|x|^2 / (4 r))``.

    ``x`` is a point (last axis of length ``d``) or, with ``d`` given, a radius.
    """
    r_time = np.asarray(r_time, dtype=float)
    if np.any(r_time <= 0):
        raise DomainError("heat kernel needs r > 0")
    if d is None:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = x.shape[-1]
        rad2 = np.sum(x * x, axis=-1)
    else:
        rad2 = np.asarray(x, dtype=float) ** 2
    return (4 * np.pi * r_time) ** (-d / 2) * np.exp(-rad2 / (4 * r_time))


def _check_refinement(coarse, fine, tol, what):
    err = np.max(np.abs(coarse - fine) / np.maximum(np.abs(fine), 1e-300))
    if not np.isfinite(err) or err > tol:
        raise QuadratureFailure(f"{what}: refinement gap {err:.2e} exceeds {tol:.1e}")
    return float(err)


def fractional_heat_kernel(s: float, t: float, x, d: int = 1, delta: float = 0.05, check: bool = True):
    """``p^s_t(x) = integral p_r(x) eta^s_t(dr)`` at radii ``|x|``.

    The time-``t`` law is the image of ``eta^s_1`` under ``r -> t^(1/s) r``.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    r = np.atleast_1d(np.abs(np.asarray(x, dtype=float)))

    def run(dl):
        q, w, eta = _stable_nodes(s, dl, 140.0)
        rho = t ** (1.0 / s) * q
        out = np.empty(r.size)
        for i0 in range(0, r.size, 256):
            rr = r[i0:i0 + 256, None]
            out[i0:i0 + 256] = (heat_kernel(rho[None, :], rr, d) * (w * eta)[None, :]).sum(axis=1)
        return out

    val = run(delta)
    if check:
        _check_refinement(val, run(delta / 2), 1e-8, "fractional heat kernel")
    return float(val[0]) if np.ndim(x) == 0 else val.reshape(np.shape(x))


def fractional_heat_mass(s: float, t: float, d: int = 1) -> float:
    """Radial quadrature of ``p^s_t`` over ``R^d``."""
    v = np.arange(-30.0, 30.0, 0.05)
    r = np.exp(v)
    p = fractional_heat_kernel(s, t, r, d, check=False)
    return float(np.sum(p * sphere_area(d) * r**d) * 0.05)


# ---------------------------------------------------------------- resolvent kernel


@dataclass(frozen=True)
class KernelQuery:
    s: float
    eps: float
    d: int
    r: float

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise DomainError("s must lie in (0, 1)")
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        if self.d not in (1, 2, 3):
            raise DomainError("d must be 1, 2 or 3")
        if self.r < 0:
            raise DomainError("r must be nonnegative")


_V_LO, _V_HI = -80.0, 100.0


@lru_cache(maxsize=64)
def _potential_density(s: float, eps: float, delta: float):
    """``U(rho) = s rho^(s-1) integral q^(-s) exp(-eps rho^s q^(-s)) eta(q) dq`` on a log-rho grid."""
    q, w, eta = _stable_nodes(s, delta, 140.0 + _V_HI)
    keep = eta > 0
    q, w, eta = q[keep], w[keep], eta[keep]
    v = np.arange(_V_LO, _V_HI + delta, delta)
    rho = np.exp(v)
    base = q ** (-s) * w * eta
    U = np.empty_like(rho)
    lq = np.log(q)
    for i0 in range(0, rho.size, 256):
        rs = rho[i0:i0 + 256, None] ** s
        expo = -eps * np.exp(np.log(rs) - s * lq[None, :])
        U[i0:i0 + 256] = np.exp(expo) @ base
    U *= s * rho ** (s - 1.0)
    return v, rho, U


def resolvent_kernel_table(s: float, eps: float, d: int, radii, delta: float = 0.05, check: bool = True):
    """Subordination values of ``g^s_eps`` at an array of radii."""
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(radii <= 0):
        raise DomainError("subordination route needs r > 0")

    def run(dl):
        v, rho, U = _potential_density(s, eps, dl)
        wts = dl * rho * U
        out = np.empty(radii.size)
        for i0 in range(0, radii.size, 128):
            rr = radii[i0:i0 + 128, None]
            out[i0:i0 + 128] = heat_kernel(rho[None, :], rr, d) @ wts
        return out

    val = run(delta)
    if check:
        _check_refinement(val, run(delta / 2), 1e-8, "resolvent kernel")
    return val


def resolvent_kernel_subordination(q: KernelQuery, delta: float = 0.05) -> float:
    """``g^s_eps(x) = integral exp(-eps t) p^s_t(x) dt`` at ``|x| = q.r``."""
    return float(resolvent_kernel_table(q.s, q.eps, q.d, [q.r], delta)[0])


def resolvent_kernel_mass(s: float, eps: float, d: int, delta: float = 0.05) -> float:
    """``integral g^s_eps dx`` by radial quadrature in ``log r`` over ``[e^-30, e^22]``."""
    dv = 0.05
    v = np.arange(-30.0, 22.0 + dv, dv)
    r = np.exp(v)
    g = resolvent_kernel_table(s, eps, d, r, delta, check=False)
    return float(np.sum(g * sphere_area(d) * r**d) * dv)


def riesz_constant(s: float, d: int) -> float:
    """``c`` with ``(2 pi)^(-d) integral e^(i x.xi) |xi|^(-2s) dxi = c |x|^(2s-d)``, ``2s < d``."""
    if not 2 * s < d:
        raise DomainError("Riesz kernel needs 2s < d")
    return math.gamma(d / 2 - s) / (4**s * math.pi ** (d / 2) * math.gamma(s))


def resolvent_kernel_fourier(q: KernelQuery, dps: int = 20, subtract_riesz: bool | None = None) -> float:
    """Radial Fourier inversion of ``1/(eps + |xi|^(2s))``.

    For ``2s < d`` the Riesz part ``|xi|^(-2s)`` is inverted in closed form
    and only the faster decaying remainder is integrated.
    """
    s, eps, d, r = q.s, q.eps, q.d, q.r
    if r <= 0:
        raise DomainError("Fourier route needs r > 0")
    if subtract_riesz is None:
        subtract_riesz = 2 * s < d
    S = mpmath.mpf(s)
    E = mpmath.mpf(eps)
    R = mpmath.mpf(r)

    def m(k):
        if subtract_riesz:
            return -E / (k ** (2 * S) * (E + k ** (2 * S)))
        return 1 / (E + k ** (2 * S))

    # integrable singularity at k = 0: resolve the head with tanh-sinh, then extrapolate
    head_zeros = 40
    with mpmath.workdps(dps):
        try:
            if d == 1:
                def fk(k):
                    return mpmath.cos(R * k) * m(k)

                def zero(n):
                    return (n - mpmath.mpf(1) / 2) * mpmath.pi / R
                scale = 1 / mpmath.pi
            elif d == 2:
                def fk(k):
                    return mpmath.besselj(0, R * k) * k * m(k)

                def zero(n):
                    return mpmath.besseljzero(0, n) / R
                scale = 1 / (2 * mpmath.pi)
            else:
                def fk(k):
                    return mpmath.sin(R * k) * k * m(k)

                def zero(n):
                    return n * mpmath.pi / R
                scale = 1 / (2 * mpmath.pi**2 * R)
            pts = [mpmath.mpf(0)] + [zero(n) for n in range(1, head_zeros + 1)]
            if subtract_riesz:
                # k = t^p with p = 1/(d - 2s) removes the k^(d-1-2s) singularity at 0
                p = 1 / (d - 2 * S)
                first = mpmath.quad(lambda t: fk(t**p) * p * t ** (p - 1), [0, pts[1] ** (1 / p)])
                head = first + mpmath.quad(fk, pts[1:])
            else:
                head = mpmath.quad(fk, pts)
            tail = mpmath.quadosc(fk, [pts[-1], mpmath.inf], zeros=lambda n: zero(n + head_zeros))
            val = scale * (head + tail)
        except Exception as exc:  # mpmath raises plain errors on divergence
            raise QuadratureFailure(f"oscillatory quadrature failed: {exc}") from exc
    out = float(val)
    if subtract_riesz:
        out += riesz_constant(s, d) * r ** (2 * s - d)
    if not math.isfinite(out):
        raise QuadratureFailure("non-finite Fourier value")
    return out


# ---------------------------------------------------------------- off-grid Phi_eps


def _cell_weights_1d(grid, eps, s, images):
    """Integrals of ``g`` over the periodized cells, by 16-point Gauss per cell."""
    n, dx = grid.n, grid.dx
    x, wq = np.polynomial.legendre.leggauss(16)
    j = np.arange(-n // 2 - images * n, n // 2 + images * n)
    lo = (j - 0.5) * dx
    nodes = lo[:, None] + 0.5 * dx * (x + 1.0)
    rad = np.abs(nodes).ravel()
    # the origin cell is split at 0 so all radii are positive
    rad = np.where(rad == 0, 1e-300, rad)
    vals = resolvent_kernel_table(s, eps, 1, rad, check=False).reshape(nodes.shape)
    W = vals @ wq * 0.5 * dx
    return j, W


def phi_epsilon_offgrid(f: Field, eps: float, s: float, images: int = 4) -> Field:
    """``(eps I + (-Delta)^s)^(-1) f`` by periodized convolution with ``g^s_eps``.

    Kernel weights are summed over ``images`` periods each side; the mass
    outside that window is spread uniformly so that the total weight is
    exactly ``1/eps``.  In 1-D the weights are exact cell integrals; in
    higher dimension they are midpoint values with the origin cell replaced
    by the integral over the ball of equal volume.
    """
    g = f.grid
    n = g.n
    if g.dim == 1:
        j, W = _cell_weights_1d(g, eps, s, images)
        w = np.zeros(n)
        np.add.at(w, j % n, W)
    else:
        # offsets in FFT index order: index i <-> i dx wrapped into [-L, L)
        rel = (np.stack([m.ravel() for m in g.mesh], -1) + g.L) % (2 * g.L)
        rel = np.where(rel >= g.L, rel - 2 * g.L, rel)
        span = np.arange(-images, images + 1) * 2 * g.L
        shifts = np.stack(np.meshgrid(*([span] * g.dim), indexing="ij"), -1).reshape(-1, g.dim)
        w = np.zeros(g.size)
        for sh in shifts:
            rad = np.linalg.norm(rel + sh, axis=-1)
            pos = rad > 0
            vals = np.zeros_like(rad)
            vals[pos] = resolvent_kernel_table(s, eps, g.dim, rad[pos], check=False)
            w += vals * g.cell_volume
        unit_ball = math.pi ** (g.dim / 2) / math.gamma(g.dim / 2 + 1)
        rc = (g.cell_volume / unit_ball) ** (1.0 / g.dim)
        v = np.linspace(math.log(rc) - 40, math.log(rc), 4001)
        rr = np.exp(v)
        gv = resolvent_kernel_table(s, eps, g.dim, rr, check=False)
        w[0] += np.trapezoid(gv * sphere_area(g.dim) * rr**g.dim, v)
    w = w.reshape(g.shape)
    w += (1.0 / eps - w.sum()) / g.size
    out = np.real(np.fft.ifftn(np.fft.fftn(f.values) * np.fft.fftn(w)))
    return Field(g, out)
