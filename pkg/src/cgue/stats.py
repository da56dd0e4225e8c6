"""Unfolding and spectral fluctuation measures.

All GUE reference curves beyond the Wigner surmise are produced by sampling
(:func:`gue_reference`) rather than taken from closed-form asymptotics; the
only analytic references are the surmise itself and the Poisson process.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special, stats as sps

from .density import semicircle_cdf
from .errors import InvalidArgumentError, NumericFailure

POISSON_RATIO_MEAN = 2.0 * np.log(2.0) - 1.0
DEFAULT_L_GRID = tuple(float(x) for x in np.arange(0.5, 10.01, 0.5))
MIN_SPACINGS_FOR_KS = 1000


# ---------------------------------------------------------------------------
# reference distributions
# ---------------------------------------------------------------------------

def wigner_surmise_pdf(s):
    s = np.asarray(s, dtype=float)
    return np.where(s >= 0, (32.0 / np.pi ** 2) * s ** 2 * np.exp(-4.0 * s ** 2 / np.pi), 0.0)


def wigner_surmise_cdf(s):
    s = np.clip(np.asarray(s, dtype=float), 0.0, None)
    return special.erf(2.0 * s / np.sqrt(np.pi)) - (4.0 * s / np.pi) * np.exp(-4.0 * s ** 2 / np.pi)


def poisson_cdf(s):
    s = np.clip(np.asarray(s, dtype=float), 0.0, None)
    return -np.expm1(-s)


# ---------------------------------------------------------------------------
# unfolding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnfoldedSpectrum:
    values: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    edge_fraction: float = 0.05

    def spacings(self) -> np.ndarray:
        return np.diff(self.values)

    def __len__(self):
        return len(self.values)


class Staircase:
    """Ensemble-averaged integrated density built from pooled spectra.

    ``staircase(x)`` is the mean number of levels per spectrum below ``x``,
    interpolated linearly between pooled order statistics thinned to
    ``knots`` points.
    """

    def __init__(self, spectra, knots: int = 2000):
        arrays = [np.asarray(_levels(s), dtype=float) for s in spectra]
        if not arrays:
            raise InvalidArgumentError("no spectra to build a staircase from")
        self.n_levels = float(np.mean([len(a) for a in arrays]))
        pooled = np.sort(np.concatenate(arrays))
        m = len(pooled)
        # empirical CDF at midpoints of each pooled level
        cdf = (np.arange(m) + 0.5) / m
        if m > knots:
            pick = np.unique(np.linspace(0, m - 1, knots).round().astype(int))
            pooled, cdf = pooled[pick], cdf[pick]
        self.x = pooled
        self.F = cdf

    def __call__(self, x):
        return self.n_levels * np.interp(x, self.x, self.F, left=0.0, right=1.0)


def _levels(spectrum) -> np.ndarray:
    ev = getattr(spectrum, "eigenvalues", spectrum)
    if hasattr(ev, "values") and not isinstance(ev, np.ndarray):
        ev = ev.values
    return np.asarray(ev, dtype=float)


def _trim(values: np.ndarray, edge_fraction: float) -> np.ndarray:
    cut = int(np.floor(edge_fraction * len(values)))
    return values[cut:len(values) - cut]


def unfold(spectrum, method: str = "polynomial", *, degree: int = 7, lam: float = 1.0,
           staircase: Staircase | None = None, edge_fraction: float = 0.05) -> UnfoldedSpectrum:
    """Map a spectrum through a smooth integrated density to unit mean spacing.

    ``method`` is ``"polynomial"`` (least-squares fit of the staircase,
    ``degree``), ``"semicircle"`` (analytic semicircle CDF of half-radius
    ``2 lam``) or ``"ensemble"`` (a pooled :class:`Staircase`).
    """
    x = np.sort(_levels(spectrum))
    n = len(x)
    if n < 20:
        raise InvalidArgumentError("unfolding needs at least 20 levels")
    if method == "polynomial":
        y = np.arange(1, n + 1, dtype=float) - 0.5
        poly, (_, rank, _, _) = np.polynomial.Polynomial.fit(x, y, degree, full=True)
        if rank < degree + 1:
            raise NumericFailure(f"rank-deficient staircase fit (rank {rank} < {degree + 1})")
        u = poly(x)
        params = {"degree": degree}
    elif method == "semicircle":
        u = n * semicircle_cdf(x / lam)
        params = {"lambda": lam}
    elif method == "ensemble":
        if staircase is None:
            raise InvalidArgumentError("ensemble unfolding needs a Staircase")
        u = staircase(x)
        params = {"knots": len(staircase.x)}
    else:
        raise InvalidArgumentError(f"unknown unfolding method {method!r}")
    u = _trim(u, edge_fraction)
    if np.any(np.diff(u) <= 0):
        raise NumericFailure(f"{method} unfolding is not strictly increasing on the retained levels")
    return UnfoldedSpectrum(u, method, params, edge_fraction)


def unfold_many(spectra, method: str = "auto", **kwargs) -> list[UnfoldedSpectrum]:
    """Unfold a collection.

    ``auto`` uses the ensemble staircase from 50 spectra on and otherwise a
    per-spectrum polynomial whose degree is lowered until the map is monotone.
    """
    spectra = list(spectra)
    auto = method == "auto"
    if auto:
        method = "ensemble" if len(spectra) >= 50 else "polynomial"
    if method == "ensemble" and kwargs.get("staircase") is None:
        kwargs["staircase"] = Staircase(spectra)
    if not auto or method != "polynomial":
        return [unfold(s, method, **kwargs) for s in spectra]
    # short spectra can make a high-degree fit wiggle; step the degree down until monotone
    out = []
    for s in spectra:
        degree = kwargs.get("degree", 7)
        while True:
            try:
                out.append(unfold(s, method, **{**kwargs, "degree": degree}))
                break
            except NumericFailure:
                if degree <= 1:
                    raise
                degree -= 2
    return out


# ---------------------------------------------------------------------------
# nearest-neighbour spacings
# ---------------------------------------------------------------------------

@dataclass
class NNSD:
    edges: np.ndarray
    density: np.ndarray
    spacings: np.ndarray
    ks_gue: float | None
    ks_poisson: float | None
    overflow: float
    flags: tuple = ()

    @property
    def n_spacings(self) -> int:
        return len(self.spacings)


def _pool_spacings(unfolded) -> np.ndarray:
    if isinstance(unfolded, UnfoldedSpectrum):
        unfolded = [unfolded]
    parts = [np.diff(u.values if isinstance(u, UnfoldedSpectrum) else np.asarray(u))
             for u in unfolded]
    return np.concatenate(parts) if parts else np.zeros(0)


def nnsd(unfolded, bins: int = 40, s_max: float = 4.0) -> NNSD:
    s = _pool_spacings(unfolded)
    counts, edges = np.histogram(s, bins=bins, range=(0.0, s_max))
    inside = counts.sum()
    density = counts / (inside * np.diff(edges)) if inside else np.zeros(bins)
    flags = ()
    if len(s) >= MIN_SPACINGS_FOR_KS:
        ks_g = float(sps.kstest(s, wigner_surmise_cdf).statistic)
        ks_p = float(sps.kstest(s, poisson_cdf).statistic)
    else:
        ks_g = ks_p = None
        flags = ("too-few-spacings",)
    overflow = 1.0 - inside / len(s) if len(s) else 0.0
    return NNSD(edges, density, s, ks_g, ks_p, float(overflow), flags)


def repulsion_exponent(spacings, s_range=(0.05, 0.3), bins: int = 8) -> float:
    """Slope of log p(s) against log s over ``s_range`` (log-spaced bins)."""
    s = np.asarray(spacings, dtype=float)
    edges = np.geomspace(*s_range, bins + 1)
    counts, _ = np.histogram(s, bins=edges)
    dens = counts / (len(s) * np.diff(edges))
    mid = np.sqrt(edges[1:] * edges[:-1])
    ok = counts > 0
    if ok.sum() < 3:
        raise NumericFailure("too few small spacings to fit a repulsion exponent")
    slope, _ = np.polyfit(np.log(mid[ok]), np.log(dens[ok]), 1, w=np.sqrt(counts[ok]))
    return float(slope)


# ---------------------------------------------------------------------------
# spacing ratios
# ---------------------------------------------------------------------------

@dataclass
class SpacingRatios:
    mean: float
    stderr: float
    edges: np.ndarray
    density: np.ndarray
    n_ratios: int
    values: np.ndarray


def ratio_values(levels, edge_fraction: float = 0.05) -> np.ndarray:
    """``min(r, 1/r)`` for consecutive spacings of one raw spectrum."""
    x = _trim(np.sort(np.asarray(levels, dtype=float)), edge_fraction)
    s = np.diff(x)
    a, b = s[:-1], s[1:]
    hi = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(hi > 0, np.minimum(a, b) / hi, np.nan)
    return r[np.isfinite(r)]


def spacing_ratios(spectra, edge_fraction: float = 0.05, bins: int = 20) -> SpacingRatios:
    spectra = [spectra] if isinstance(spectra, np.ndarray) and spectra.ndim == 1 else list(spectra)
    per = [ratio_values(_levels(s), edge_fraction) for s in spectra]
    r = np.concatenate(per) if per else np.zeros(0)
    if len(r) == 0:
        raise InvalidArgumentError("no spacing ratios available")
    if len(r) < 1000:
        warnings.warn(f"only {len(r)} spacing ratios pooled; mean is noisy", stacklevel=2)
    means = np.array([p.mean() for p in per if len(p)])
    if len(means) > 1:
        # weight per-sample means by their ratio counts
        w = np.array([len(p) for p in per if len(p)], dtype=float)
        mu = np.average(means, weights=w)
        var = np.sum(w ** 2 * (means - mu) ** 2) / (w.sum() ** 2) * len(w) / (len(w) - 1)
        stderr = float(np.sqrt(var))
    else:
        stderr = float(r.std(ddof=1) / np.sqrt(len(r))) if len(r) > 1 else float("nan")
    counts, edges = np.histogram(r, bins=bins, range=(0.0, 1.0))
    density = counts / (counts.sum() * np.diff(edges))
    return SpacingRatios(float(r.mean()), stderr, edges, density, len(r), r)


# ---------------------------------------------------------------------------
# number variance and Delta_3
# ---------------------------------------------------------------------------

@dataclass
class Curve:
    L: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    flags: tuple = ()


def _window_starts(lo: float, hi: float, L: float, step: float | None) -> np.ndarray:
    if hi - lo <= L:
        return np.zeros(0)
    step = step if step is not None else min(0.25, L / 4)
    return np.arange(lo, hi - L, step)


def _as_value_arrays(unfolded) -> list[np.ndarray]:
    if isinstance(unfolded, UnfoldedSpectrum):
        unfolded = [unfolded]
    return [np.asarray(u.values if isinstance(u, UnfoldedSpectrum) else u, dtype=float)
            for u in unfolded]


def _check_window(arrays, L_grid) -> tuple:
    span = min(a[-1] - a[0] for a in arrays)
    if max(L_grid) > span / 10:
        return (f"L_max={max(L_grid):g} exceeds retained window/10={span / 10:.3g}",)
    return ()


def _per_sample_stat(arrays, L_grid, func, step):
    L_grid = np.asarray(L_grid, dtype=float)
    per = np.full((len(arrays), len(L_grid)), np.nan)
    weights = np.zeros((len(arrays), len(L_grid)))
    for i, x in enumerate(arrays):
        for j, L in enumerate(L_grid):
            starts = _window_starts(x[0], x[-1], L, step)
            if len(starts) == 0:
                continue
            per[i, j] = func(x, starts, L)
            weights[i, j] = len(starts)
    return L_grid, per, weights


def _combine(L_grid, per, weights, flags) -> Curve:
    w = np.where(np.isfinite(per), weights, 0.0)
    tot = w.sum(axis=0)
    val = np.where(tot > 0, np.nansum(np.where(w > 0, per, 0.0) * w, axis=0) / np.maximum(tot, 1), np.nan)
    k = (w > 0).sum(axis=0)
    dev = np.where(w > 0, per - val, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        var = (w ** 2 * dev ** 2).sum(axis=0) / np.maximum(tot, 1) ** 2 * k / np.maximum(k - 1, 1)
    err = np.where(k > 1, np.sqrt(var), np.nan)
    return Curve(L_grid, val, err, flags)


def _count_variance(x, starts, L):
    counts = np.searchsorted(x, starts + L) - np.searchsorted(x, starts)
    return float(np.mean((counts - L) ** 2))


def number_variance(unfolded, L_grid=DEFAULT_L_GRID, step: float | None = None) -> Curve:
    """Variance of level counts in windows of length ``L``.

    Deviations are taken from ``L`` itself, the exact mean count of a unit
    mean-spacing sequence.  Per-sample values are combined with window-count
    weights; the error is the spread of the per-sample values.
    """
    arrays = _as_value_arrays(unfolded)
    flags = _check_window(arrays, L_grid)
    L, per, w = _per_sample_stat(arrays, L_grid, _count_variance, step)
    return _combine(L, per, w, flags)


def _delta3_windows(x, starts, L):
    n_all = len(x)
    j = np.arange(n_all, dtype=float)
    S1 = np.concatenate([[0.0], np.cumsum(x)])
    S2 = np.concatenate([[0.0], np.cumsum(x * x)])
    J1 = np.concatenate([[0.0], np.cumsum(j)])
    JX = np.concatenate([[0.0], np.cumsum(j * x)])
    lo = np.searchsorted(x, starts, side="left")
    hi = np.searchsorted(x, starts + L, side="right")
    a = starts
    n = (hi - lo).astype(float)
    sx = S1[hi] - S1[lo]
    sxx = S2[hi] - S2[lo]
    sj = J1[hi] - J1[lo]
    sjx = JX[hi] - JX[lo]
    sy = sx - n * a
    syy = sxx - 2 * a * sx + n * a * a
    I0 = n * L - sy
    I1 = 0.5 * (n * L * L - syy)
    c = 2 * lo - 1.0
    I2 = (L + a) * (2 * sj - c * n) - (2 * sjx - c * sx)
    proj = (12.0 / L ** 4) * (I0 * I0 * L ** 3 / 3.0 - I0 * I1 * L * L + I1 * I1 * L)
    return float(np.mean((I2 - proj) / L))


def delta3(unfolded, L_grid=DEFAULT_L_GRID, step: float | None = None) -> Curve:
    """Dyson-Mehta least-squares rigidity, exact for the piecewise-constant staircase."""
    arrays = _as_value_arrays(unfolded)
    flags = _check_window(arrays, L_grid)
    L, per, w = _per_sample_stat(arrays, L_grid, _delta3_windows, step)
    return _combine(L, per, w, flags)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class FluctuationReport:
    nnsd: NNSD
    ratios: SpacingRatios
    sigma2: Curve
    delta3: Curve
    n_samples: int
    unfolding: str
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def arr(a):
            return [None if not np.isfinite(v) else float(v) for v in np.asarray(a, dtype=float)]
        return {
            "n_samples": self.n_samples,
            "unfolding": self.unfolding,
            "nnsd": {"edges": arr(self.nnsd.edges), "density": arr(self.nnsd.density),
                     "n_spacings": self.nnsd.n_spacings, "ks_gue": self.nnsd.ks_gue,
                     "ks_poisson": self.nnsd.ks_poisson, "overflow": self.nnsd.overflow,
                     "flags": list(self.nnsd.flags)},
            "spacing_ratio": {"mean": self.ratios.mean, "stderr": self.ratios.stderr,
                              "n": self.ratios.n_ratios, "edges": arr(self.ratios.edges),
                              "density": arr(self.ratios.density)},
            "sigma2": {"L": arr(self.sigma2.L), "value": arr(self.sigma2.value),
                       "stderr": arr(self.sigma2.stderr), "flags": list(self.sigma2.flags)},
            "delta3": {"L": arr(self.delta3.L), "value": arr(self.delta3.value),
                       "stderr": arr(self.delta3.stderr), "flags": list(self.delta3.flags)},
            "meta": self.meta,
        }

    def write_csv(self, prefix) -> list:
        """One CSV per curve; returns the written paths."""
        paths = []
        tables = {
            "nnsd": (("s_lo", "s_hi", "density"),
                     zip(self.nnsd.edges[:-1], self.nnsd.edges[1:], self.nnsd.density)),
            "ratio": (("r_lo", "r_hi", "density"),
                      zip(self.ratios.edges[:-1], self.ratios.edges[1:], self.ratios.density)),
            "sigma2": (("L", "sigma2", "stderr"),
                       zip(self.sigma2.L, self.sigma2.value, self.sigma2.stderr)),
            "delta3": (("L", "delta3", "stderr"),
                       zip(self.delta3.L, self.delta3.value, self.delta3.stderr)),
        }
        for name, (header, rows) in tables.items():
            path = f"{prefix}_{name}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                for row in rows:
                    w.writerow([repr(float(v)) for v in row])
            paths.append(path)
        return paths


def fluctuation_report(spectra, *, method: str = "auto", L_grid=DEFAULT_L_GRID,
                       bins: int = 40, edge_fraction: float = 0.05, **unfold_kwargs) -> FluctuationReport:
    spectra = list(spectra)
    if not spectra:
        raise InvalidArgumentError("no spectra given")
    unfolded = unfold_many(spectra, method, edge_fraction=edge_fraction, **unfold_kwargs)
    method = unfolded[0].method
    return FluctuationReport(
        nnsd=nnsd(unfolded, bins=bins),
        ratios=spacing_ratios(spectra, edge_fraction=edge_fraction),
        sigma2=number_variance(unfolded, L_grid),
        delta3=delta3(unfolded, L_grid),
        n_samples=len(spectra),
        unfolding=method,
    )


def compare(a: FluctuationReport, b: FluctuationReport) -> dict:
    """Distances between two reports, with pooled statistical error estimates."""
    if not (np.array_equal(a.sigma2.L, b.sigma2.L) and np.array_equal(a.delta3.L, b.delta3.L)
            and np.array_equal(a.nnsd.edges, b.nnsd.edges)):
        raise InvalidArgumentError("reports were computed on different grids")
    ks = float(sps.ks_2samp(a.nnsd.spacings, b.nnsd.spacings).statistic) \
        if a is not b else 0.0

    def curve_diff(ca, cb):
        d = np.abs(ca.value - cb.value)
        sig = np.sqrt(np.nan_to_num(ca.stderr) ** 2 + np.nan_to_num(cb.stderr) ** 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(sig > 0, d / sig, np.where(d == 0, 0.0, np.inf))
        return float(np.nanmax(d)), float(np.nanmax(z))

    s2, s2z = curve_diff(a.sigma2, b.sigma2)
    d3, d3z = curve_diff(a.delta3, b.delta3)
    dr = abs(a.ratios.mean - b.ratios.mean)
    rsig = float(np.hypot(a.ratios.stderr, b.ratios.stderr))
    return {
        "ks_nnsd": ks,
        "ratio_diff": dr,
        "ratio_sigma": rsig,
        "ratio_z": dr / rsig if rsig > 0 else (0.0 if dr == 0 else float("inf")),
        "sigma2_sup": s2,
        "sigma2_max_z": s2z,
        "delta3_sup": d3,
        "delta3_max_z": d3z,
    }


@lru_cache(maxsize=8)
def gue_reference(dim: int = 200, n_samples: int = 200, seed: int = 987654321,
                  lam: float = 1.0, L_grid=DEFAULT_L_GRID) -> FluctuationReport:
    """Fluctuation report of sampled GUE spectra; the artifact's own GUE oracle."""
    from .ensembles import EnsembleSpec, generate

    spectra = generate(EnsembleSpec("gue", dim=dim, lam=lam, seed=seed), n_samples)
    rep = fluctuation_report(spectra, L_grid=L_grid)
    rep.meta.update(reference="gue", dim=dim, n_samples=n_samples, seed=seed)
    return rep


def classify(report: FluctuationReport, gue_ratio_mean: float, ks_tol: float = 0.05,
             ratio_tol: float = 0.02) -> str:
    """Label a report ``GUE-consistent``, ``Poisson-consistent`` or ``intermediate``."""
    r = report.ratios.mean
    ks_g, ks_p = report.nnsd.ks_gue, report.nnsd.ks_poisson
    if ks_g is not None and ks_g < ks_tol and abs(r - gue_ratio_mean) < ratio_tol:
        return "GUE-consistent"
    if ks_p is not None and ks_p < ks_tol and abs(r - POISSON_RATIO_MEAN) < ratio_tol:
        return "Poisson-consistent"
    return "intermediate"
