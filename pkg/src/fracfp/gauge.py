"""Gauge functional ``h(t) = (Phi_eps z_m, z_m)_2`` for comparing two solution paths.

``z = y1 - y2`` is mollified spectrally with a fixed radial bump of width
``eps_m`` and paired with ``Phi_eps = (eps I + (-Delta)^s)^(-1)``.  The
audit fits a Gronwall constant to the trace; it is a diagnostic, not a
certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import j0

from .coefficients import CoefficientSet, mollifier, truncate
from .evolution import SolutionPath
from .spectral import Field, Grid, apply_multiplier, bessel_resolvent_phi, forward_transform

__all__ = [
    "GaugePair",
    "GaugeReport",
    "mollifier_multiplier",
    "compute_z_w",
    "gauge_h",
    "gauge_h_routes",
    "gauge_decomposition",
    "gronwall_audit",
    "alpha_constants",
]


@lru_cache(maxsize=8)
def _radial_rule(d: int, order: int = 200):
    # the bump is smooth on [0, 1], so plain Gauss nodes converge spectrally
    x, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1.0)
    dens = mollifier(t) if d == 1 else np.exp(-1.0 / np.maximum(1.0 - t * t, 1e-300)) * (t < 1)
    return t, 0.5 * w * dens


def _bump_transform(k: np.ndarray, d: int) -> np.ndarray:
    """``integral theta(x) exp(i k.x) dx / integral theta`` for the radial bump."""
    r, w = _radial_rule(d)
    kr = np.multiply.outer(k, r)
    if d == 1:
        ker, wr = np.cos(kr), w
    elif d == 2:
        ker, wr = j0(kr), w * r
    else:
        ker, wr = np.sinc(kr / np.pi), w * r**2
    return (ker @ wr) / wr.sum()


def mollifier_multiplier(grid: Grid, width: float) -> np.ndarray:
    """Fourier multiplier of convolution with ``theta_width``; identity for ``width = 0``."""
    if width == 0:
        return np.ones(grid.shape)
    k = np.sqrt(grid.xi_sq) * width
    flat = np.unique(k)
    vals = _bump_transform(flat, grid.dim)
    return np.interp(k, flat, vals)


@dataclass
class GaugePair:
    y1: SolutionPath
    y2: SolutionPath
    eps_g: float = 0.01
    eps_m: float | None = None
    cs: CoefficientSet | None = None

    def __post_init__(self):
        if self.y1.grid != self.y2.grid:
            raise ValueError("paths must share a grid")
        if len(self.y1.times) != len(self.y2.times) or not np.allclose(self.y1.times, self.y2.times):
            raise ValueError("paths must share snapshot times")
        if not self.eps_g > 0:
            raise ValueError("eps_g must be positive")
        if self.eps_m is None:
            self.eps_m = 2.0 * self.grid.dx
        if self.cs is None:
            self.cs = self.y1.cs
        for p in (self.y1, self.y2):
            for f in p.fields:
                if not np.all(np.isfinite(f.values)):
                    raise ValueError("paths must be finite")

    @property
    def grid(self) -> Grid:
        return self.y1.grid

    @property
    def times(self) -> list:
        return list(self.y1.times)

    @property
    def N(self) -> float:
        sup = max(max(np.abs(f.values).max() for f in p.fields) for p in (self.y1, self.y2))
        return max(float(sup), 1e-12)

    def index(self, t: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.times) - t)))


@dataclass
class GaugeReport:
    times: list
    h_trace: list
    eta_proxy: list
    C: float
    verdict: str
    tol: float
    alphas: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def trace_rows(self) -> list:
        return [{"t": t, "h": h, "eta": e} for t, h, e in zip(self.times, self.h_trace, self.eta_proxy)]


def compute_z_w(pair: GaugePair, t: float) -> tuple[Field, Field]:
    """``z = y1 - y2`` and ``w = beta_N(y1) - beta_N(y2)`` with ``N >= sup |y_i|``."""
    i = pair.index(t)
    a, b = pair.y1.fields[i], pair.y2.fields[i]
    beta = truncate(pair.cs.beta, pair.N)
    return a - b, Field(a.grid, beta(a.values) - beta(b.values))


def _mollified_z(pair: GaugePair, t: float) -> Field:
    z, _ = compute_z_w(pair, t)
    m = mollifier_multiplier(pair.grid, pair.eps_m)
    return Field(z.grid, apply_multiplier(z.values, m, z.grid.dim))


def gauge_h_routes(pair: GaugePair, t: float) -> tuple[float, float]:
    """``(inner product, spectral integral)`` forms of ``h``."""
    zm = _mollified_z(pair, t)
    g = zm.grid
    s = pair.cs.s
    phi = bessel_resolvent_phi(zm, pair.eps_g, s)
    inner = float((phi.values * zm.values).sum() * g.cell_volume)
    F = forward_transform(zm).coefficients
    spec = float((np.abs(F) ** 2 / (pair.eps_g + g.xi_sq**s)).sum() * g.dxi**g.dim)
    return inner, spec


def gauge_h(pair: GaugePair, t: float) -> float:
    return gauge_h_routes(pair, t)[1]


def gauge_decomposition(pair: GaugePair, t: float) -> tuple[float, float]:
    """``(eps |Phi z|_2^2, |(-Delta)^(s/2) Phi z|_2^2)``; they sum to ``h``."""
    zm = _mollified_z(pair, t)
    g = zm.grid
    s = pair.cs.s
    F = forward_transform(zm).coefficients
    phiF2 = np.abs(F) ** 2 / (pair.eps_g + g.xi_sq**s) ** 2
    w = g.dxi**g.dim
    return float(pair.eps_g * phiF2.sum() * w), float((g.xi_sq**s * phiF2).sum() * w)


def alpha_constants(cs: CoefficientSet, N: float) -> dict:
    """Structural constants of the truncated coefficients on ``[-N, N]``.

    ``alpha1 = sup |b*_N'| / beta_N'``, ``alpha2 = min beta_N'``,
    ``alpha3 = 1 / sup beta_N'``.
    """
    r = np.linspace(-N, N, 4001)
    bd = truncate(cs.beta, N).d(r)
    gd = np.abs(cs.bstar_d(r)) if not cs.b.is_zero else np.zeros_like(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bd > 0, gd / bd, np.where(gd > 0, np.inf, 0.0))
    return {
        "alpha1": float(np.max(ratio)),
        "alpha2": float(np.min(bd)),
        "alpha3": float(1.0 / np.max(bd)) if np.max(bd) > 0 else math.inf,
    }


def gronwall_audit(pair: GaugePair, tol: float = 1e-10) -> GaugeReport:
    """Fit the smallest ``C`` with ``h(t) <= eta + C int_0^t h`` and issue a verdict.

    ``eta = h(0) + tol``.  The verdict is ``SAME`` when ``h(0) <= tol`` and
    ``h`` stays below ``h(0) exp(C t) + tol``; otherwise ``DIFFERENT``.
    """
    times = np.asarray(pair.times, dtype=float)
    h = np.array([gauge_h(pair, t) for t in times])
    eta = h[0] + tol
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (h[1:] + h[:-1]) * np.diff(times))])
    excess = h - eta
    C = 0.0
    mask = (excess > 0) & (cum > 0)
    if mask.any():
        C = float(np.max(excess[mask] / cum[mask]))
    if np.any((excess > 0) & (cum == 0)):
        C = math.inf
    bound = h[0] * np.exp(min(C, 700.0) * times) + tol
    same = h[0] <= tol and bool(np.all(h <= bound))
    return GaugeReport(
        times=times.tolist(), h_trace=h.tolist(), eta_proxy=[float(eta)] * len(times), C=C,
        verdict="SAME" if same else "DIFFERENT", tol=tol, alphas=alpha_constants(pair.cs, pair.N),
    )
