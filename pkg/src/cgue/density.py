"""Large-N level density of the constrained ensemble.

Units are ``eps = x / lam`` throughout.  The saddle-point condition for the
density reads ``g(eps) = 2 P int rho(y) / (eps - y) dy`` with
``g(eps) = eps - field(eps)`` and ``field = (lam / N) d ln F / dx``.

Inversion on a single interval ``[-a, a]`` uses

    P int_{-a}^{a} sqrt(a^2 - y^2) U_{n-1}(y/a) / (eps - y) dy = a pi T_n(eps/a),

so that expanding ``g(a t) = sum gamma_n T_n(t)`` gives the density
``rho = sqrt(a^2 - eps^2) sum_n gamma_n / (2 pi a) U_{n-1}(eps / a)``, which
vanishes at both edges.  Unit mass fixes ``a * gamma_1(a) = 4``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy import integrate, optimize, special

from .errors import DivergenceError, InfeasibleError, InvalidArgumentError

DEFAULT_N_MAX = 3
DEFAULT_GRID = 2001


def semicircle_cdf(e):
    """CDF of the unit-variance semicircle on ``[-2, 2]``."""
    e = np.clip(np.asarray(e, dtype=float), -2.0, 2.0)
    return 0.5 + e * np.sqrt(4.0 - e * e) / (4.0 * np.pi) + np.arcsin(e / 2.0) / np.pi


def semicircle_pdf(e, radius: float = 2.0):
    e = np.asarray(e, dtype=float)
    inside = np.clip(radius * radius - e * e, 0.0, None)
    return 2.0 * np.sqrt(inside) / (np.pi * radius * radius)


@dataclass
class DensityModel:
    """Symmetric one-cut density ``rho`` on ``[-a, a]`` with its exact Chebyshev form.

    ``u[n-1]`` multiplies ``sqrt(a^2 - eps^2) U_{n-1}(eps/a)``; ``moments`` maps
    even orders to exact moments of that form.
    """

    grid: np.ndarray
    rho: np.ndarray
    a: float
    u: np.ndarray
    moments: dict
    iterations: int = 0
    residual: float | None = None
    n_max: int | None = None
    meta: dict = field(default_factory=dict)

    def evaluate(self, eps) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        t = np.clip(eps / self.a, -1.0, 1.0)
        series = np.zeros_like(t)
        for n, un in enumerate(self.u, start=1):
            if un != 0.0:
                series = series + un * special.eval_chebyu(n - 1, t)
        out = np.sqrt(np.clip(self.a ** 2 - eps ** 2, 0.0, None)) * series
        return np.where(np.abs(eps) <= self.a, out, 0.0)

    __call__ = evaluate

    def normalization(self) -> float:
        return float(integrate.trapezoid(self.rho, self.grid))

    def grid_moment(self, k: int) -> float:
        return float(integrate.trapezoid(self.rho * self.grid ** k, self.grid))

    def bin_masses(self, edges, points: int = 16) -> np.ndarray:
        """Probability in each bin, by Gauss-Legendre on the exact form."""
        edges = np.asarray(edges, dtype=float)
        t, w = np.polynomial.legendre.leggauss(points)
        lo = np.clip(edges[:-1], -self.a, self.a)
        hi = np.clip(edges[1:], -self.a, self.a)
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        x = mid[:, None] + half[:, None] * t[None, :]
        return (self.evaluate(x) * w[None, :]).sum(axis=1) * half

    def l1_distance(self, other, points: int = 20001) -> float:
        """``int |rho - other|`` where ``other`` is a model or a callable."""
        f = other.evaluate if isinstance(other, DensityModel) else other
        reach = max(self.a, getattr(other, "a", self.a))
        x = np.linspace(-reach, reach, points)
        return float(integrate.trapezoid(np.abs(self.evaluate(x) - f(x)), x))

    def to_dict(self) -> dict:
        return {"support_half_width": self.a, "iterations": self.iterations,
                "residual": self.residual, "n_max": self.n_max,
                "moments": {str(k): v for k, v in sorted(self.moments.items())},
                "chebyshev_u": [float(v) for v in self.u], **self.meta}


def _symmetric_grid(a: float, points: int) -> np.ndarray:
    g = -a * np.cos(np.pi * np.arange(points) / (points - 1))
    return 0.5 * (g - g[::-1])


def _exact_moments(a: float, u: np.ndarray, max_order: int) -> dict:
    # Gauss quadrature with weight sqrt(1 - t^2); exact for these polynomials
    m = len(u) + max_order + 2
    k = np.arange(1, m + 1)
    t = np.cos(k * np.pi / (m + 1))
    w = np.pi / (m + 1) * np.sin(k * np.pi / (m + 1)) ** 2
    series = sum(un * special.eval_chebyu(n - 1, t) for n, un in enumerate(u, start=1))
    base = a * a * w * series
    return {order: float(np.sum(base * (a * t) ** order)) for order in range(2, max_order + 1, 2)}


def _model_from_coefficients(a, u, points, max_order, **kw) -> DensityModel:
    grid = _symmetric_grid(a, points)
    proto = DensityModel(grid, np.zeros_like(grid), a, np.asarray(u, dtype=float), {})
    rho = proto.evaluate(grid)
    rho = 0.5 * (rho + rho[::-1])
    rho[0] = rho[-1] = 0.0
    return DensityModel(grid, rho, a, proto.u, _exact_moments(a, proto.u, max_order), **kw)


def semicircle(points: int = DEFAULT_GRID, max_order: int = 12) -> DensityModel:
    """Wigner semicircle of half-width 2 (unit second moment)."""
    return _model_from_coefficients(2.0, [1.0 / (2.0 * np.pi)], points, max_order, n_max=0)


# ---------------------------------------------------------------------------
# effective field
# ---------------------------------------------------------------------------

@dataclass
class EffectiveField:
    """Odd polynomial ``sum_k coeffs[2k-1] eps^(2k-1)``."""

    coeffs: dict
    radial_moments: dict = field(default_factory=dict)

    def __call__(self, eps):
        eps = np.asarray(eps, dtype=float)
        out = np.zeros_like(eps)
        for p, c in self.coeffs.items():
            out = out + c * eps ** p
        return out

    def is_decreasing(self) -> bool:
        mags = [abs(self.coeffs[p]) for p in sorted(self.coeffs)]
        return all(b < a for a, b in zip(mags, mags[1:]) if a > 0)


def radial_moments(poly: dict, n_q: int, orders, points: int = 40001) -> dict:
    """``<u^k>`` under ``u^(n_q/2 - 1) exp(sum_j poly[j] u^j) du`` on ``u > 0``.

    Integrated on a logarithmic grid around the dominant peak.  A non-negative
    leading coefficient makes the integral diverge.
    """
    top = max(poly)
    if poly[top] >= 0:
        raise DivergenceError(
            f"radial integral diverges: leading Gaussian-type coefficient of u^{top} is non-negative",
            trace={"poly": {str(k): v for k, v in poly.items()}})

    def log_weight(w):
        u = np.exp(w)
        return 0.5 * n_q * w + sum(c * u ** j for j, c in poly.items())

    # bracket: far below, the power law decays; far above, the leading term does
    u_star = (0.5 * n_q / abs(poly[top])) ** (1.0 / top)
    coarse = np.linspace(math.log(u_star) - 40.0, math.log(u_star) + 10.0, 200001)
    lw = log_weight(coarse)
    peak = coarse[np.argmax(lw)]
    keep = lw > lw.max() - 60.0
    lo, hi = coarse[keep][0], coarse[keep][-1]
    w = np.linspace(lo - 0.01, hi + 0.01, points)
    lw = log_weight(w)
    lw -= lw.max()
    wt = np.exp(lw)
    z = integrate.trapezoid(wt, w)
    out = {k: float(integrate.trapezoid(wt * np.exp(k * w), w) / z) for k in orders}
    out["log_peak"] = float(peak)
    return out


def effective_field_from_moments(eps_moments: dict, angular, n: int, n_q: int,
                                 n_max: int = DEFAULT_N_MAX, regularized: bool = False) -> EffectiveField:
    """Field from density moments ``<eps^(2k)>`` and sphere-averaged ``Tr B(Omega)^(2k)``.

    The Haar integral is replaced by its truncated cumulant series in the
    orders ``2k <= 2 n_max``; radial and angular averages are factorised.
    """
    if n_max < 1:
        raise InvalidArgumentError("n_max must be at least 1")
    if n_q >= n * (n - 1) // 2 and n_q > 0:
        raise InvalidArgumentError(f"N_Q={n_q} is not below N(N-1)/2={n * (n - 1) // 2}")
    if n_q == 0:
        return EffectiveField({2 * k - 1: 0.0 for k in range(1, n_max + 1)})
    ang = {2 * k: (1.0 if k == 1 else float(angular[2 * k])) for k in range(1, n_max + 1)}
    # exponent coefficient of u^k, u = r^2
    poly = {k: (-1) ** k * eps_moments[2 * k] / (2 * k * n ** (2 * k - 1)) * ang[2 * k]
            for k in range(1, n_max + 1)}
    poly = {k: v for k, v in poly.items() if v != 0.0 or k == 1}
    rad = radial_moments(poly, n_q, range(1, n_max + 1))
    coeffs = {2 * k - 1: (-1) ** k * rad[k] * ang[2 * k] / n ** (2 * k + 1)
              for k in range(1, n_max + 1)}
    if regularized:
        coeffs[1] += n_q / (n * n * eps_moments[2])
    fld = EffectiveField(coeffs, rad)
    if not fld.is_decreasing():
        warnings.warn("effective-field coefficients do not decrease with order", stacklevel=2)
    return fld


def effective_field(dm: DensityModel, angular, n: int, n_q: int, n_max: int = DEFAULT_N_MAX,
                    regularized: bool = False) -> EffectiveField:
    """Field for density ``dm``; ``angular`` maps even orders to ``Tr B(Omega)^n`` averages."""
    missing = [2 * k for k in range(1, n_max + 1) if 2 * k not in dm.moments]
    moments = dict(dm.moments)
    for order in missing:
        moments[order] = dm.grid_moment(order)
    return effective_field_from_moments(moments, angular, n, n_q, n_max, regularized)


# ---------------------------------------------------------------------------
# singular-integral inversion
# ---------------------------------------------------------------------------

def _drive_poly(fld: EffectiveField) -> np.ndarray:
    """Power-series coefficients of ``g(eps) = eps - field(eps)``."""
    deg = max([1, *fld.coeffs])
    g = np.zeros(deg + 1)
    g[1] = 1.0
    for p, c in fld.coeffs.items():
        g[p] -= c
    return g


def _gamma(g_poly: np.ndarray, a: float) -> np.ndarray:
    scaled = g_poly * a ** np.arange(len(g_poly))
    return C.poly2cheb(scaled)


def _support(g_poly: np.ndarray, a_max: float = 20.0) -> float:
    # T_1 coefficient of t^k, so that a * gamma_1(a) is a plain polynomial in a
    t1 = np.array([C.poly2cheb(np.eye(len(g_poly))[k])[1] if k % 2 else 0.0
                   for k in range(len(g_poly))])
    norm_poly = np.zeros(len(g_poly) + 1)
    norm_poly[1:] = g_poly * t1
    norm_poly[0] = -4.0

    def norm(a):
        return np.polynomial.polynomial.polyval(a, norm_poly)

    scan = np.linspace(1e-3, a_max, 4000)
    vals = norm(scan)
    cross = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if len(cross) == 0:
        raise InfeasibleError("no support half-width satisfies the normalization; "
                              "try a smaller n_max or N_Q")
    i = cross[0]
    return float(optimize.brentq(norm, scan[i], scan[i + 1], xtol=1e-15, rtol=1e-15))


def solve_density(fld: EffectiveField, points: int = DEFAULT_GRID, max_order: int = 12,
                  check_points: int = 4001) -> DensityModel:
    """Invert ``eps - field(eps) = 2 P int rho / (eps - y)`` for a one-cut density."""
    g_poly = _drive_poly(fld)
    if not np.all(np.isfinite(g_poly)):
        raise InvalidArgumentError("field coefficients are not finite")
    a = _support(g_poly)
    gam = _gamma(g_poly, a)
    u = gam[1:] / (2.0 * np.pi * a)
    # even parts of g vanish, so only odd Chebyshev orders carry weight
    u[1::2] = 0.0
    dm = _model_from_coefficients(a, u, points, max_order)
    probe = dm.evaluate(np.linspace(-a, a, check_points)[1:-1])
    if probe.min() < -1e-12:
        raise InfeasibleError(
            f"density turns negative (min {probe.min():.3g}); try a smaller n_max or N_Q")
    dm.meta["field"] = {str(p): c for p, c in sorted(fld.coeffs.items())}
    return dm


def principal_value_transform(dm: DensityModel, eps) -> np.ndarray:
    """``2 P int rho(y) / (eps - y) dy`` by Cauchy-weight quadrature."""
    out = []
    for e in np.atleast_1d(eps):
        val = integrate.quad(dm.evaluate, -dm.a, dm.a, weight="cauchy", wvar=float(e),
                             epsabs=1e-13, epsrel=1e-12, limit=400)[0]
        out.append(-2.0 * val)
    return np.array(out)


def residual(dm: DensityModel, fld: EffectiveField, fraction: float = 0.9, points: int = 41) -> float:
    """Sup-norm of ``g - 2 P int rho / (eps - y)`` over the interior ``fraction`` of the support."""
    eps = np.linspace(-fraction * dm.a, fraction * dm.a, points)
    g = eps - fld(eps)
    return float(np.max(np.abs(g - principal_value_transform(dm, eps))))


# ---------------------------------------------------------------------------
# self-consistent iteration
# ---------------------------------------------------------------------------

def iterate_density(angular, n: int, n_q: int | None = None, n_max: int = DEFAULT_N_MAX, *,
                    tol: float = 1e-8, max_iters: int = 200, damping: float = 0.5,
                    regularized: bool = False, nq_crit: int | None = None,
                    points: int = DEFAULT_GRID, check_residual: bool = True) -> DensityModel:
    """Fixed-point solution for the constrained density, starting from the semicircle.

    ``angular`` is an :class:`AngularMomentTable` (or a mapping of even orders
    to sphere-averaged trace moments).  The moments feeding the field are
    mixed with weight ``damping``; convergence is the L1 change of the solved
    density.
    """
    if n_q is None:
        n_q = getattr(angular, "n_q", None)
        if n_q is None:
            raise InvalidArgumentError("N_Q is required")
    if nq_crit is not None and n_q >= nq_crit:
        raise InvalidArgumentError(f"N_Q={n_q} is not below N_Q^crit={nq_crit}")
    max_order = max(12, 2 * n_max)
    current = semicircle(points, max_order)
    mix = dict(current.moments)
    trace = []
    for it in range(1, max_iters + 1):
        fld = effective_field_from_moments(mix, angular, n, n_q, n_max, regularized)
        try:
            new = solve_density(fld, points, max_order)
        except InfeasibleError as exc:
            raise InfeasibleError(f"{exc} (iteration {it})") from exc
        change = new.l1_distance(current)
        trace.append({"iteration": it, "l1_change": change, "a": new.a})
        current = new
        if change < tol:
            current.iterations = it
            current.n_max = n_max
            if check_residual:
                current.residual = residual(current, fld)
            current.meta.update(N=n, N_Q=n_q, regularized=regularized, trace=trace)
            return current
        mix = {k: (1 - damping) * mix[k] + damping * new.moments[k] for k in mix}
    raise DivergenceError(f"density iteration did not converge in {max_iters} steps", trace=trace)


def empirical_l1(dm: DensityModel, eigenvalues, lam: float = 1.0, bins="fd") -> float:
    """L1 distance between ``dm`` and a pooled eigenvalue histogram, bin by bin.

    Bins follow ``numpy.histogram_bin_edges`` (Freedman-Diaconis by default)
    and are widened to cover the model support; model mass comes from exact
    quadrature over each bin.
    """
    ev = np.ravel(np.asarray(eigenvalues, dtype=float)) / lam
    edges = np.histogram_bin_edges(ev, bins=bins)
    width = edges[1] - edges[0]
    lo = min(edges[0], -dm.a)
    hi = max(edges[-1], dm.a)
    edges = np.concatenate([edges[0] - width * np.arange(np.ceil((edges[0] - lo) / width), 0, -1),
                            edges,
                            edges[-1] + width * np.arange(1, np.ceil((hi - edges[-1]) / width) + 1)])
    counts, _ = np.histogram(ev, edges)
    return float(np.sum(np.abs(counts / len(ev) - dm.bin_masses(edges))))
