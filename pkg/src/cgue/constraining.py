"""The constraining function F and its regularised form, by independent routes.

Normalisation
-------------
``F(x)`` is the Haar average of ``prod_q delta(c <B_q | U x U^dag>)`` with
``c = sqrt(N / (2 pi lam^2))`` and Dirac deltas of unit mass.  Both the
determinant route and the Monte Carlo route return this quantity with no
further constant, so their values are directly comparable.  Helpers that
normalise at ``x_ref = (-1, 1, 0, ..., 0)`` are provided because only ratios
carry meaning once the ensemble normalisation is divided out.

Determinant route
-----------------
Writing each delta as a Fourier integral over ``s`` and doing the unitary
integral with the Harish-Chandra formula leaves

    F = (lam^2 / (2 pi N))^(N_Q/2) * i^(-K) * prod_{p<N} p!
        * int_{S^(N_Q-1)} dOmega  sum_pi sgn(pi) R(phi_pi) / (V(x) V(beta))

where ``K = N(N-1)/2``, ``beta`` are the eigenvalues of ``B(Omega)``,
``phi_pi = sum_mu x_mu beta_pi(mu)``, ``V`` is the Vandermonde product and
``R`` is the radial integral ``int_0^inf r^(N_Q-K-1) exp(i r phi) dr``.  For
``N_Q <= K`` the individual radial integrals diverge at ``r -> 0`` but the
alternating sum does not; the finite part that survives the sum is

    R(phi) = (-1)^(m+1) / m! * (-i phi)^m * log(-i phi),   m = K - N_Q,

because every polynomial of degree below ``K`` in ``phi`` is annihilated by
the signed permutation sum.  The sphere integral is then done by adaptive
quadrature (two points, a circle, or a two-sphere).

Coincident eigenvalues of ``x`` or ``beta`` are handled by splitting each
cluster symmetrically by ``+-h`` and extrapolating ``h -> 0`` in ``h^2``; the
value is an even function of ``h`` because it is symmetric in both sets.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from .basis import ConstraintSet, degeneracy_profile
from .ensembles import haar_unitary, sample_rng
from .errors import (AmbiguityError, CapacityError, DivergenceError,
                     InvalidArgumentError, SingularityError)
from .hermitian import from_coefficients

ROUTES = ("determinant", "haar-mc", "moment-expansion")
DEFAULT_SIGMA = 0.1
MC_BLOCK = 4096
MAX_DET_DIM = 6
MAX_DET_NQ = 3
MAX_MC_NQ = 8
MIN_EFFECTIVE_SAMPLES = 100


@dataclass(frozen=True)
class FPValue:
    value: float
    route: str
    regularized: bool = False
    stderr: float | None = None
    flags: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.route not in ROUTES:
            raise InvalidArgumentError(f"unknown route {self.route!r}")
        if (self.stderr is not None) != (self.route == "haar-mc"):
            raise InvalidArgumentError("stderr is carried by Monte Carlo values only")

    def to_record(self, x=None, x_ref=None) -> dict:
        rec = {
            "route": self.route,
            "regularized": self.regularized,
            "value": self.value,
            "stderr": self.stderr,
            "flags": list(self.flags),
            "params": self.params,
        }
        if x is not None:
            rec["x"] = [float(v) for v in x]
        if x_ref is not None:
            rec["x_ref"] = [float(v) for v in x_ref]
        return rec

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_record(**kw), sort_keys=True)


def reference_spectrum(n: int) -> np.ndarray:
    ref = np.zeros(n)
    ref[:2] = (-1.0, 1.0)
    return ref


def _scale(n: int, lam: float) -> float:
    return math.sqrt(n / (2.0 * math.pi * lam * lam))


# ---------------------------------------------------------------------------
# determinant route
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _permutations(n: int):
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    # parity from inversion count
    inv = np.zeros(len(perms), dtype=np.intp)
    for i in range(n):
        for j in range(i + 1, n):
            inv += perms[:, i] > perms[:, j]
    signs = np.where(inv % 2 == 0, 1.0, -1.0)
    return perms, signs


def _vandermonde(v) -> float:
    v = np.asarray(v)
    i, j = np.triu_indices(len(v), 1)
    return float(np.prod(v[j] - v[i]))


def radial_kernel(phi, m: int):
    """Finite part of ``int_0^inf r^(-m-1) exp(i r phi) dr`` modulo degree-``m`` polynomials."""
    phi = np.asarray(phi, dtype=float)
    absphi = np.abs(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        log = np.log(absphi) - 0.5j * np.pi * np.sign(phi)
        out = ((-1) ** (m + 1) / math.factorial(m)) * (-1j * phi) ** m * log
    if m > 0:
        out = np.where(absphi == 0, 0.0, out)
    return out


def _clusters(v: np.ndarray, tol: float) -> list[np.ndarray]:
    """Index groups of (sorted) ``v`` whose neighbours lie within ``tol``."""
    order = np.argsort(v, kind="stable")
    groups, cur = [], [order[0]]
    for a, b in zip(order[:-1], order[1:]):
        if v[b] - v[a] <= tol:
            cur.append(b)
        else:
            groups.append(np.array(cur))
            cur = [b]
    groups.append(np.array(cur))
    return groups


def _split(v: np.ndarray, h: float, tol: float) -> np.ndarray:
    if h == 0.0:
        return v
    out = np.array(v, dtype=float)
    for g in _clusters(out, tol):
        if len(g) > 1:
            out[g] = out[g].mean() + h * (np.arange(len(g)) - (len(g) - 1) / 2.0)
    return out


class _Integrand:
    """Sphere integrand for fixed (split) ``x``; splits degenerate ``beta`` by ``h_beta``."""

    def __init__(self, x, q_mats, m, h_beta, beta_tol):
        self.x = np.asarray(x, dtype=float)
        self.q = q_mats
        self.m = m
        self.h_beta = h_beta
        self.beta_tol = beta_tol
        self.perms, self.signs = _permutations(len(self.x))
        self.vx = _vandermonde(self.x)
        self.min_abs_phi = np.inf
        # i^(-K) folded in here so that the real part is the physical one
        self.phase = (1j) ** (-(len(self.x) * (len(self.x) - 1) // 2))

    def phases(self, omegas):
        """``phi_pi`` per permutation for a stack of directions, plus the ``beta`` rows."""
        omegas = np.atleast_2d(omegas)
        beta = np.linalg.eigvalsh(np.tensordot(omegas, self.q, axes=1))
        if self.h_beta:
            beta = np.array([_split(b, self.h_beta, self.beta_tol) for b in beta])
        return beta[:, self.perms] @ self.x, beta

    def batch(self, omegas) -> np.ndarray:
        phi, beta = self.phases(omegas)
        self.min_abs_phi = min(self.min_abs_phi, float(np.min(np.abs(phi))))
        kern = radial_kernel(phi, self.m)
        # a node landing exactly on phi = 0 is a null set
        kern[~np.isfinite(kern)] = 0.0
        total = kern @ self.signs
        i, j = np.triu_indices(beta.shape[1], 1)
        vb = np.prod(beta[:, j] - beta[:, i], axis=1)
        return self.phase * total / (self.vx * vb)

    def __call__(self, omega):
        return self.batch(omega)[0]


def _dip(f, direction, j: int, lo: float, hi: float, sign: float, zooms: int = 4):
    """Parameter of the smallest ``sign * phi_j`` in ``[lo, hi]`` by batched zooming."""
    for _ in range(zooms):
        t = np.linspace(lo, hi, 33)
        k = int(np.argmin(sign * f.phases(direction(t))[0][:, j]))
        lo, hi = t[max(k - 1, 0)], t[min(k + 1, 32)]
    return 0.5 * (lo + hi)


def _phase_zeros(f, direction, a: float, b: float, scan: int = 96) -> list[float]:
    """Parameters in ``(a, b)`` where some ``phi_pi`` changes sign along ``direction(t)``.

    ``direction`` maps an array of parameters to a stack of unit vectors.
    Close zero pairs hide between scan points; local minima of ``|phi|`` that
    are small against the local variation are refined and split if they cross.
    Between consecutive zeros the integrand is smooth.
    """
    t = np.linspace(a, b, scan + 1)
    phi = f.phases(direction(t))[0]
    out = []
    for j in range(phi.shape[1]):
        col = phi[:, j]
        g = lambda v, j=j: f.phases(direction(np.array([v])))[0][0, j]  # noqa: E731
        for i in np.nonzero(np.sign(col[:-1]) * np.sign(col[1:]) < 0)[0]:
            out.append(optimize.brentq(g, t[i], t[i + 1], xtol=1e-12))
        out.extend(t[np.nonzero(col == 0.0)[0]])
        mag = np.abs(col)
        step = np.abs(np.diff(col))
        for i in range(1, scan):
            same = np.sign(col[i - 1]) == np.sign(col[i]) == np.sign(col[i + 1]) != 0
            if not (same and mag[i] <= mag[i - 1] and mag[i] <= mag[i + 1]):
                continue
            if mag[i] > 2.0 * max(step[i - 1], step[i]):
                continue
            sgn = np.sign(col[i])
            tm = _dip(f, direction, j, t[i - 1], t[i + 1], sgn)
            if sgn * g(tm) < 0:
                out.append(optimize.brentq(g, t[i - 1], tm, xtol=1e-12))
                out.append(optimize.brentq(g, tm, t[i + 1], xtol=1e-12))
    return sorted(v for v in set(out) if a < v < b)


def _count_zeros(f, direction) -> int:
    return len(_phase_zeros(f, direction, 0.0, 2 * math.pi))


_GL16 = np.polynomial.legendre.leggauss(16)
_GL32 = np.polynomial.legendre.leggauss(32)


def _piecewise_gauss(fun, breaks, eabs: float, erel: float, max_pieces: int = 4000) -> float:
    """Integrate ``fun`` (vectorised) over consecutive ``breaks``.

    Each piece is compared at 16 and 32 Gauss-Legendre nodes; pieces that
    disagree are halved. All pending pieces are evaluated in one call.
    """
    pending = [(lo, hi) for lo, hi in zip(breaks[:-1], breaks[1:]) if hi > lo]
    span = breaks[-1] - breaks[0]
    done = 0.0
    scale = 0.0
    while pending:
        lo = np.array([p[0] for p in pending])[:, None]
        hi = np.array([p[1] for p in pending])[:, None]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        x16, w16 = _GL16
        x32, w32 = _GL32
        nodes = np.hstack([mid + half * x16, mid + half * x32])
        vals = fun(nodes.ravel()).reshape(nodes.shape)
        i16 = half[:, 0] * (vals[:, :16] @ w16)
        i32 = half[:, 0] * (vals[:, 16:] @ w32)
        scale = max(scale, abs(done + i32.sum()))
        tol = max(eabs, erel * scale)
        err = np.abs(i32 - i16)
        ok = err <= tol * (2 * half[:, 0]) / span
        if len(pending) >= max_pieces:
            ok[:] = True
        done += float(i32[ok].sum())
        pending = [q for p, good in zip(pending, ok) if not good
                   for q in ((p[0], 0.5 * (p[0] + p[1])), (0.5 * (p[0] + p[1]), p[1]))]
    return done


def _sphere_integral(f, n_q: int, epsabs: float, epsrel: float, limit: int) -> complex:
    if n_q == 1:
        return (f(np.array([1.0])) + f(np.array([-1.0]))).real

    # F is real; the imaginary part integrates to zero and is not computed
    def circle(direction, eabs, erel):
        pts = _phase_zeros(f, direction, 0.0, 2 * math.pi)
        breaks = [0.0, *pts, 2 * math.pi]
        return _piecewise_gauss(lambda t: f.batch(direction(t)).real, breaks, eabs, erel)

    def latitude(theta):
        s, c = math.sin(theta), math.cos(theta)
        return lambda t: np.column_stack([s * np.cos(t), s * np.sin(t), np.full(len(t), c)])

    if n_q == 2:
        return circle(lambda t: np.column_stack([np.cos(t), np.sin(t)]), epsabs, epsrel)

    # the real integrand is even under omega -> -omega, so one hemisphere suffices;
    # the polar angle keeps features close to the pole from being squeezed
    def shell(theta):
        return math.sin(theta) * circle(latitude(theta), 0.1 * epsabs, 0.1 * epsrel)

    # shell has kinks where a zero curve of some phi_pi touches a latitude circle
    grid = np.linspace(0.0, 0.5 * math.pi, 129)[1:]
    counts = [_count_zeros(f, latitude(v)) for v in grid]
    kinks = []
    for i in range(len(grid) - 1):
        if counts[i] != counts[i + 1]:
            lo, hi, c_lo = grid[i], grid[i + 1], counts[i]
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                if _count_zeros(f, latitude(mid)) == c_lo:
                    lo = mid
                else:
                    hi = mid
            kinks.append(0.5 * (lo + hi))
    # one-sided sqrt behaviour at the kinks is removed by the smoothstep map
    # theta = a + w (3s^2 - 2s^3), whose Jacobian vanishes at both ends
    edges = [0.0, *kinks, 0.5 * math.pi]
    half = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        w = b - a

        def mapped(v, a=a, w=w):
            return shell(a + w * v * v * (3.0 - 2.0 * v)) * 6.0 * w * v * (1.0 - v)

        half += integrate.quad(mapped, 0.0, 1.0, epsabs=0.5 * epsabs / (len(edges) - 1),
                               epsrel=epsrel, limit=limit)[0]
    return 2.0 * half


def _richardson_h2(hs, values) -> complex:
    """Value at ``h = 0`` of the polynomial in ``h^2`` through the samples."""
    h2 = np.asarray(hs, dtype=float) ** 2
    out = 0.0
    for i in range(len(h2)):
        w = 1.0
        for j in range(len(h2)):
            if j != i:
                w *= h2[j] / (h2[j] - h2[i])
        out += w * values[i]
    return out


def fp_determinant(x, cs: ConstraintSet, lam: float = 1.0, *, epsabs: float = 1e-10,
                   epsrel: float = 1e-8, limit: int = 200, split: float = 0.02,
                   coincidence_tol: float = 1e-9) -> FPValue:
    """Evaluate F at spectrum ``x`` through the determinant (Fourier + HCIZ) representation."""
    x = np.asarray(x, dtype=float)
    n, n_q = len(x), cs.n_q
    if n != cs.dim:
        raise InvalidArgumentError(f"spectrum has {n} levels, constraints act on dim {cs.dim}")
    if n > MAX_DET_DIM or n_q > MAX_DET_NQ:
        raise CapacityError(f"determinant route supports N <= {MAX_DET_DIM}, N_Q <= {MAX_DET_NQ}")
    if n < 2:
        raise InvalidArgumentError("need N >= 2")
    if n_q == 0:
        return FPValue(1.0, "determinant", params={"N": n, "N_Q": 0, "lambda": lam})
    if not cs.traceless:
        raise InvalidArgumentError("determinant route needs traceless constraints; apply traceless_reduce")
    spread = float(np.ptp(x))
    if spread <= coincidence_tol * max(1.0, float(np.max(np.abs(x)))):
        raise SingularityError("F is singular when all eigenvalues coincide")

    try:
        profile = degeneracy_profile(cs)
        nq_crit = profile.nq_crit
    except AmbiguityError:
        nq_crit = None
    if nq_crit is not None and n_q > nq_crit:
        raise DivergenceError(
            f"s-integral diverges: N_Q={n_q} exceeds N_Q^crit={nq_crit}",
            trace={"N_Q": n_q, "nq_crit": nq_crit})

    k = n * (n - 1) // 2
    m = k - n_q
    q = cs.q_matrices()
    beta_tol = 1e-7
    x_tol = coincidence_tol * max(1.0, float(np.max(np.abs(x))))
    x_degenerate = any(len(g) > 1 for g in _clusters(x, x_tol))
    b_probe = np.linalg.eigvalsh(np.tensordot(
        np.random.default_rng(12345).standard_normal(n_q), q, axes=1))
    b_probe /= max(np.linalg.norm(b_probe), 1e-300)
    b_degenerate = any(len(g) > 1 for g in _clusters(b_probe, beta_tol))

    def evaluate(h):
        f = _Integrand(_split(x, h * spread, x_tol), q, m, h, beta_tol)
        return _sphere_integral(f, n_q, epsabs, epsrel, limit), f.min_abs_phi

    flags = []
    if x_degenerate or b_degenerate:
        hs = (split, split / 2, split / 4)
        evals = [evaluate(h) for h in hs]
        raw = _richardson_h2(hs, [e[0] for e in evals])
        flags.append("coincidence-extrapolated")
        min_phi = min(e[1] for e in evals)
    else:
        raw, min_phi = evaluate(0.0)
    if m == 0 and n_q == 1 and min_phi == 0.0:
        raise DivergenceError("logarithmic divergence: a permutation phase vanishes",
                              trace={"N_Q": n_q, "K": k})

    const = (lam * lam / (2 * math.pi * n)) ** (n_q / 2) \
        * math.prod(math.factorial(p) for p in range(1, n))
    value = float(const * raw)
    if value < 0:
        if abs(value) > 10 * epsabs * abs(const):
            flags.append(f"negative-quadrature-value={value:.3g}")
        value = 0.0
    params = {"N": n, "N_Q": n_q, "lambda": lam, "epsabs": epsabs, "epsrel": epsrel,
              "nq_crit": nq_crit}
    return FPValue(value, "determinant", flags=tuple(flags), params=params)


# ---------------------------------------------------------------------------
# Haar Monte Carlo route
# ---------------------------------------------------------------------------

def _smoothed_delta(z, sigma):
    return np.exp(-0.5 * (z / sigma) ** 2) / (math.sqrt(2 * math.pi) * sigma)


def _delta_arguments(x, q_mats, c, u) -> np.ndarray:
    # diag(U^dag B_q U)_j for every sample and constraint, contracted with x
    d = np.einsum("sij,qik,skj->sqj", u.conj(), q_mats, u, optimize=True).real
    return c * (d @ x)


def _block_weights(x, q_mats, c, sigmas, seed, block, size):
    rng = sample_rng(seed, block)
    u = haar_unitary(len(x), rng, size=size)
    z = _delta_arguments(x, q_mats, c, u)
    return np.stack([np.prod(_smoothed_delta(z, s), axis=1) for s in sigmas], axis=1)


def _extrapolation_weights(sigmas) -> np.ndarray:
    h2 = np.asarray(sigmas, dtype=float) ** 2
    w = np.ones(len(h2))
    for i in range(len(h2)):
        for j in range(len(h2)):
            if j != i:
                w[i] *= h2[j] / (h2[j] - h2[i])
    return w


def fp_haar_mc(x, cs: ConstraintSet, sigma: float = DEFAULT_SIGMA, n_samples: int = 100_000,
               seed: int = 0, lam: float = 1.0, *, extrapolate: bool = True,
               threads: int = 1) -> FPValue:
    """Haar average of Gaussian-smoothed deltas, optionally extrapolated to zero width.

    With ``extrapolate`` the widths ``(2 sigma, sigma, sigma / 2)`` share the
    same unitaries and the zero-width value is the per-sample quadratic in
    ``sigma^2``; the quoted error is the sample spread of that combination.
    Samples come in blocks of fixed size seeded by block index, so the
    estimate does not depend on ``threads``.
    """
    x = np.asarray(x, dtype=float)
    n, n_q = len(x), cs.n_q
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    if n != cs.dim:
        raise InvalidArgumentError(f"spectrum has {n} levels, constraints act on dim {cs.dim}")
    params = {"N": n, "N_Q": n_q, "lambda": lam, "sigma": sigma, "n_samples": n_samples,
              "seed": seed, "extrapolate": extrapolate}
    if n_q == 0:
        return FPValue(1.0, "haar-mc", stderr=0.0, params=params)
    if n_q > MAX_MC_NQ:
        raise CapacityError(f"Monte Carlo route supports N_Q <= {MAX_MC_NQ}")
    if n_samples < 2:
        raise InvalidArgumentError("need at least two samples")
    sigmas = (2 * sigma, sigma, sigma / 2) if extrapolate else (sigma,)
    q = cs.q_matrices()
    c = _scale(n, lam)
    n_blocks = -(-n_samples // MC_BLOCK)
    sizes = [min(MC_BLOCK, n_samples - b * MC_BLOCK) for b in range(n_blocks)]

    def run(b):
        return _block_weights(x, q, c, sigmas, seed, b, sizes[b])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            blocks = list(pool.map(run, range(n_blocks)))
    else:
        blocks = [run(b) for b in range(n_blocks)]
    w = np.concatenate(blocks, axis=0)
    per_sample = w @ _extrapolation_weights(sigmas) if extrapolate else w[:, 0]
    mean = float(per_sample.mean())
    stderr = float(per_sample.std(ddof=1) / math.sqrt(len(per_sample)))
    narrow = w[:, -1]
    ess = float(narrow.sum() ** 2 / max(np.sum(narrow ** 2), 1e-300))
    flags = ("unreliable-estimate",) if ess < MIN_EFFECTIVE_SAMPLES else ()
    params["effective_samples"] = ess
    params["sigmas"] = list(sigmas)
    # the extrapolated estimator can dip below zero through noise only
    return FPValue(max(mean, 0.0), "haar-mc", stderr=stderr, flags=flags, params=params)


def fp_ratio(route, x, cs: ConstraintSet, x_ref=None, **kwargs) -> tuple[float, float]:
    """``F(x) / F(x_ref)`` and its propagated error; ``route`` is an fp_* function."""
    x_ref = reference_spectrum(cs.dim) if x_ref is None else np.asarray(x_ref, dtype=float)
    a = route(x, cs, **kwargs)
    b = route(x_ref, cs, **kwargs)
    ratio = a.value / b.value
    if a.stderr is None:
        return ratio, 0.0
    err = abs(ratio) * math.hypot(a.stderr / a.value if a.value else 0.0, b.stderr / b.value)
    return ratio, err


def tilde_regularize(fp: FPValue, x, n_q: int, lam: float = 1.0) -> FPValue:
    """Multiply by ``(sum (x - mean)^2 / (N lam^2))^(N_Q/2)``."""
    x = np.asarray(x, dtype=float)
    norm2 = float(np.sum((x - x.mean()) ** 2))
    factor = (norm2 / (len(x) * lam * lam)) ** (n_q / 2) if n_q else 1.0
    flags = tuple(fp.flags)
    if factor == 0.0:
        # the factor's zero beats the singularity of F at a fully degenerate spectrum
        value, stderr = 0.0, (0.0 if fp.stderr is not None else None)
        flags += ("degenerate-spectrum",)
    else:
        value = fp.value * factor
        stderr = None if fp.stderr is None else fp.stderr * factor
    params = dict(fp.params, tilde_factor=factor)
    return FPValue(value, fp.route, regularized=True, stderr=stderr, flags=flags, params=params)


# ---------------------------------------------------------------------------
# large-N moment expansion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AngularMomentTable:
    """Sphere averages ``M_n`` of ``Tr B(Omega)^n`` for ``n = 2 .. n_max``."""

    moments: dict
    stderrs: dict
    mc_samples: int
    n_q: int
    dim: int

    def __getitem__(self, n: int) -> float:
        return self.moments[n]

    @property
    def n_max(self) -> int:
        return max(self.moments)


def angular_moments(cs: ConstraintSet, n_max: int = 6, mc_samples: int = 256,
                    seed: int = 0) -> AngularMomentTable:
    """Sphere-averaged trace moments of ``B(Omega)``.

    Directions come in antithetic pairs, which makes odd moments vanish
    exactly as they must.  ``M_2`` is 1 by orthonormality and is not sampled.
    """
    if n_max < 2:
        raise InvalidArgumentError("n_max must be at least 2")
    n, n_q = cs.dim, cs.n_q
    orders = range(2, n_max + 1)
    if n_q == 0:
        zero = {k: 0.0 for k in orders}
        return AngularMomentTable(zero, dict(zero), 0, 0, n)
    if n_q == 1:
        beta = np.linalg.eigvalsh(cs.q_matrices()[0])
        mom = {k: float(np.sum(beta ** k)) if k % 2 == 0 else 0.0 for k in orders}
        mom[2] = 1.0
        return AngularMomentTable(mom, {k: 0.0 for k in orders}, 0, 1, n)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), n, n_q]))
    half = max(1, mc_samples // 2)
    omega = rng.standard_normal((half, n_q))
    omega /= np.linalg.norm(omega, axis=1, keepdims=True)
    rows = cs.q_rows
    beta = np.linalg.eigvalsh(from_coefficients(omega @ rows, n))
    # B(-Omega) = -B(Omega): odd moments cancel pairwise
    mom, err = {}, {}
    for k in orders:
        if k == 2:
            mom[k], err[k] = 1.0, 0.0
        elif k % 2:
            mom[k], err[k] = 0.0, 0.0
        else:
            v = np.sum(beta ** k, axis=1)
            mom[k] = float(v.mean())
            err[k] = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return AngularMomentTable(mom, err, 2 * half, n_q, n)


def spectrum_moments(x, lam: float = 1.0, n_max: int = 6, center: bool = True) -> dict:
    """``(1/N) Tr (H/lam)^n`` from eigenvalues, optionally after removing the trace."""
    x = np.asarray(x, dtype=float)
    if center:
        x = x - x.mean()
    y = x / lam
    return {k: float(np.mean(y ** k)) for k in range(1, n_max + 1)}


def log_haar_integral_expansion(h_moments, b_moments, n: int, n_max: int) -> complex:
    """Truncated exponent ``sum_{k=2}^{n_max} (1/k) (i^k / N^(k-1)) h_k b_k``.

    ``h_moments[k]`` is ``(1/N) Tr (H/lam)^k`` and ``b_moments[k]`` is
    ``Tr B(t)^k``.  Odd orders give imaginary terms; they are kept.
    """
    if n_max < 2:
        raise InvalidArgumentError("n_max must be at least 2")
    total = 0j
    for k in range(2, n_max + 1):
        total += (1j ** k) / (k * n ** (k - 1)) * h_moments[k] * b_moments[k]
    return total


def haar_integral_mc(h_eigs, b_eigs, n_samples: int = 20_000, seed: int = 0,
                     block: int = 1024) -> tuple[complex, float]:
    """Monte Carlo ``int dU exp(i Tr(U B U^dag H))`` for eigenvalue lists ``h``, ``b``.

    Only ``|U_ij|^2`` enters, because ``Tr(U B U^dag H) = h^T |U|^2 b`` in the
    eigenbases.  Returns the complex mean and the standard error of its modulus.
    """
    h = np.asarray(h_eigs, dtype=float)
    b = np.asarray(b_eigs, dtype=float)
    n = len(h)
    vals = []
    for i in range(-(-n_samples // block)):
        size = min(block, n_samples - i * block)
        u = haar_unitary(n, sample_rng(seed, i), size=size)
        theta = np.einsum("i,sij,j->s", h, np.abs(u) ** 2, b)
        vals.append(np.exp(1j * theta))
    v = np.concatenate(vals)
    mean = complex(v.mean())
    err = float(np.sqrt((np.var(v.real, ddof=1) + np.var(v.imag, ddof=1)) / len(v)))
    return mean, err


def expansion_discrepancy(h_eigs, b_eigs, n_max: int = 4, lam: float = 1.0,
                          n_samples: int = 20_000, seed: int = 0, exact: bool = False) -> dict:
    """Relative gap between the Haar integral and the exponentiated truncated series.

    The left side is always estimated by Monte Carlo; with ``exact`` it is also
    evaluated by :func:`haar_integral_exact`, whose gap is noise-free.
    """
    h = np.asarray(h_eigs, dtype=float) / lam
    b = np.asarray(b_eigs, dtype=float)
    n = len(h)
    hm = {k: float(np.mean(h ** k)) for k in range(1, n_max + 1)}
    bm = {k: float(np.sum(b ** k)) for k in range(1, n_max + 1)}
    exponent = log_haar_integral_expansion(hm, bm, n, n_max)
    predicted = complex(np.exp(exponent))
    mc, err = haar_integral_mc(h, b, n_samples=n_samples, seed=seed)
    rel = abs(mc - predicted) / abs(predicted)
    out = {"N": n, "n_max": n_max, "exponent": exponent, "predicted": predicted,
           "monte_carlo": mc, "mc_stderr": err, "relative_error": rel,
           "relative_stderr": err / abs(predicted)}
    if exact:
        ex = haar_integral_exact(h, b)
        out["exact"] = ex
        out["exact_relative_error"] = abs(ex - predicted) / abs(predicted)
    return out


def haar_integral_exact(h_eigs, b_eigs, dps: int | None = None) -> complex:
    """``int dU exp(i Tr(U B U^dag H))`` from the Harish-Chandra determinant in extended precision.

    The determinant cancels catastrophically in floating point beyond a
    handful of levels, so it is evaluated with ``mpmath`` at ``dps`` digits
    (default ``max(60, 2N)``).  Eigenvalues within either list must be distinct.
    """
    import mpmath

    h = [float(v) for v in h_eigs]
    b = [float(v) for v in b_eigs]
    n = len(h)
    if len(b) != n:
        raise InvalidArgumentError("eigenvalue lists differ in length")
    with mpmath.workdps(dps or max(60, 2 * n)):
        hm = [mpmath.mpf(v) for v in h]
        bm = [mpmath.mpf(v) for v in b]
        mat = mpmath.matrix(n, n)
        for i in range(n):
            for j in range(n):
                mat[i, j] = mpmath.expj(hm[i] * bm[j])
        vh = mpmath.fprod(hm[j] - hm[i] for i in range(n) for j in range(i + 1, n))
        vb = mpmath.fprod(bm[j] - bm[i] for i in range(n) for j in range(i + 1, n))
        if vh == 0 or vb == 0:
            raise SingularityError("exact Haar integral needs distinct eigenvalues")
        const = mpmath.fprod(mpmath.factorial(p) for p in range(1, n))
        k = n * (n - 1) // 2
        return complex(const * mpmath.det(mat) / (mpmath.mpc(0, 1) ** k * vh * vb))
