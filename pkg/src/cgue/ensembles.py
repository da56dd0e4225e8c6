"""Samplers for the GUE, the constrained GUE, deformed and banded ensembles, and EGUE(k).

Why sampling in the P-span gives the constrained ensemble
---------------------------------------------------------
The constrained density is the GUE weight times a Haar average of delta
functions ``prod_q delta(<U B_q U^dagger | H>)``.  The Haar average only moves
eigenvectors: writing ``H = V x V^dagger`` the eigenvalue density becomes the
GUE eigenvalue weight ``exp(-N<x|x>/2 lambda^2) Delta(x)^2`` times
``F_P(x) = int dU prod_q delta(<B_q | U x U^dagger>)``.  The *non-invariant*
ensemble obtained by drawing ``H = sum_p h_p B_p`` with i.i.d. Gaussian
``h_p`` has density ``exp(-N<H|H>/2 lambda^2) prod_q delta(<B_q|H>)``;
integrating it over eigenvectors gives exactly the same ``F_P(x)``.  Both
ensembles therefore share one eigenvalue distribution, and spectra can be
drawn exactly and cheaply by projecting a GUE coefficient vector onto P.

Seeding
-------
Every draw uses its own generator keyed by ``(seed, sample_index)``; nothing
is shared between samples, so results do not depend on thread count or order.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np

from .basis import ConstraintSet, band_indices
from .errors import CapacityError, InvalidArgumentError
from .hermitian import HermitianMatrix, eigenvalues, from_coefficients

KINDS = ("gue", "constrained", "deformed", "banded", "egue")
MAX_DENSE_DIM = 2048


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    kind: str
    dim: int | None = None
    lam: float = 1.0
    constraints: ConstraintSet | None = None
    epsilon: float = 0.0
    bandwidth: int | None = None
    l: int | None = None
    m: int | None = None
    k: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown ensemble kind {self.kind!r}")
        if not self.lam > 0:
            raise InvalidArgumentError("lambda must be positive")
        if self.epsilon < 0:
            raise InvalidArgumentError("epsilon must be non-negative")
        if self.kind == "egue":
            l, m, k = self.l, self.m, self.k
            if None in (l, m, k) or not 1 <= k <= m <= l:
                raise InvalidArgumentError("egue needs 1 <= k <= m <= l")
            if comb(l, m) > MAX_DENSE_DIM or comb(l, k) > MAX_DENSE_DIM:
                raise CapacityError(f"C({l},{m}) exceeds the dense envelope {MAX_DENSE_DIM}")
            return
        if self.kind in ("constrained", "deformed"):
            if self.constraints is None:
                raise InvalidArgumentError(f"{self.kind} ensemble needs a constraint set")
            if self.dim is None:
                object.__setattr__(self, "dim", self.constraints.dim)
            if self.constraints.dim != self.dim:
                raise InvalidArgumentError("constraint dimension does not match dim")
        if self.dim is None or self.dim < 1:
            raise InvalidArgumentError("dim must be a positive integer")
        if self.dim > MAX_DENSE_DIM:
            raise CapacityError(f"dim {self.dim} exceeds the dense envelope {MAX_DENSE_DIM}")
        if self.kind == "banded":
            if self.bandwidth is None or not 1 <= self.bandwidth <= self.dim:
                raise InvalidArgumentError("banded ensemble needs 1 <= b <= dim")
        if self.kind == "constrained" and self.constraints.n_p == 0:
            raise InvalidArgumentError("constraint set leaves an empty P subspace")

    @property
    def hilbert_dim(self) -> int:
        if self.kind == "egue":
            return comb(self.l, self.m)
        return self.dim

    def describe(self) -> dict:
        """JSON-ready description (the constraint set is summarised, not embedded)."""
        d = {"kind": self.kind, "dim": self.hilbert_dim, "lambda": self.lam, "seed": self.seed}
        if self.kind == "deformed":
            d["epsilon"] = self.epsilon
        if self.kind == "banded":
            d["bandwidth"] = self.bandwidth
            d["equivalent_n_q"] = banded_constraint_count(self.dim, self.bandwidth)
        if self.kind == "egue":
            d.update(l=self.l, m=self.m, k=self.k)
        if self.constraints is not None:
            cs = self.constraints
            d["constraints"] = {"generator": cs.generator, "dim": cs.dim, "n_q": cs.n_q,
                                "seed": cs.seed, **{k: v for k, v in cs.params.items()
                                                    if isinstance(v, (int, float, str, bool))}}
        return d


@dataclass(frozen=True, eq=False)
class SpectrumSample:
    eigenvalues: np.ndarray
    spec: EnsembleSpec | None = None
    sample_index: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.eigenvalues)


def sample_rng(seed: int, sample_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(sample_index)]))


def haar_unitary(n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-distributed unitaries via QR of a complex Ginibre matrix.

    The phases of ``diag(R)`` are moved into ``Q`` so the result is exactly
    Haar rather than QR-convention dependent.
    """
    shape = (n, n) if size is None else (size, n, n)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    ph = d / np.abs(d)
    return q * ph[..., None, :]


def _gaussian_coeffs(spec: EnsembleSpec, sample_index: int, n: int) -> np.ndarray:
    rng = sample_rng(spec.seed, sample_index)
    return rng.standard_normal(n * n) * (spec.lam / np.sqrt(n))


def sample_gue(spec: EnsembleSpec, sample_index: int = 0) -> HermitianMatrix:
    """``H = sum_a h_a B_a`` with i.i.d. ``h_a ~ Normal(0, lambda^2/N)``."""
    n = spec.dim
    return HermitianMatrix(from_coefficients(_gaussian_coeffs(spec, sample_index, n), n))


def constrained_matrix(spec: EnsembleSpec, sample_index: int = 0) -> np.ndarray:
    n = spec.dim
    g = _gaussian_coeffs(spec, sample_index, n)
    cs = spec.constraints
    if cs is not None and cs.n_q > 0:
        p = cs.project_p(g)
        if spec.kind == "deformed":
            g = p + spec.epsilon * (g - p)
        else:
            g = p
    return from_coefficients(g, n)


def sample_constrained_spectrum(spec: EnsembleSpec, sample_index: int = 0) -> SpectrumSample:
    if spec.kind not in ("constrained", "gue"):
        raise InvalidArgumentError("expected a constrained ensemble spec")
    if spec.kind == "gue":
        return SpectrumSample(eigenvalues(sample_gue(spec, sample_index)), spec, sample_index)
    return SpectrumSample(eigenvalues(constrained_matrix(spec, sample_index)), spec, sample_index)


def sample_deformed(spec: EnsembleSpec, sample_index: int = 0) -> SpectrumSample:
    """P coefficients with variance ``lambda^2/N``, Q coefficients with ``(epsilon lambda)^2/N``."""
    if spec.kind != "deformed":
        raise InvalidArgumentError("expected a deformed ensemble spec")
    return SpectrumSample(eigenvalues(constrained_matrix(spec, sample_index)), spec, sample_index)


def banded_constraint_count(n: int, b: int) -> int:
    """Number of real parameters removed by confining ``H`` to ``|m - n| <= b``."""
    b = min(b, n - 1)
    inband = n + 2 * (b * n - b * (b + 1) // 2)
    return n * n - inband


def banded_matrix(spec: EnsembleSpec, sample_index: int = 0) -> np.ndarray:
    n = spec.dim
    g = _gaussian_coeffs(spec, sample_index, n)
    if spec.bandwidth < n:
        mask = np.zeros(n * n, dtype=bool)
        mask[band_indices(n, spec.bandwidth)] = True
        g = np.where(mask, g, 0.0)
    return from_coefficients(g, n)


def sample_banded(spec: EnsembleSpec, sample_index: int = 0) -> SpectrumSample:
    if spec.kind != "banded":
        raise InvalidArgumentError("expected a banded ensemble spec")
    n_q = banded_constraint_count(spec.dim, spec.bandwidth)
    return SpectrumSample(eigenvalues(banded_matrix(spec, sample_index)), spec, sample_index,
                          meta={"equivalent_n_q": n_q})


# ---------------------------------------------------------------------------
# EGUE(k): k-body random interactions among m fermions in l orbitals
# ---------------------------------------------------------------------------

def _popcount(x: int) -> int:
    return bin(x).count("1")


def _annihilate(state: int, orbitals) -> tuple[int, int]:
    """Apply a_{o_k} ... a_{o_1} (o ascending, a_{o_1} first); returns (state, sign)."""
    sign = 1
    for o in orbitals:
        bit = 1 << o
        if not state & bit:
            return 0, 0
        if _popcount(state & (bit - 1)) & 1:
            sign = -sign
        state ^= bit
    return state, sign


def _create(state: int, orbitals) -> tuple[int, int]:
    """Apply a+_{o_1} ... a+_{o_k} (rightmost first)."""
    sign = 1
    for o in reversed(orbitals):
        bit = 1 << o
        if state & bit:
            return 0, 0
        if _popcount(state & (bit - 1)) & 1:
            sign = -sign
        state |= bit
    return state, sign


@lru_cache(maxsize=8)
def egue_structure(l: int, m: int, k: int):
    """Sparse lift of k-body operators ``a+_alpha a_beta`` to the m-particle space.

    Returns ``(rows, cols, alpha, beta, sign)``: the m-particle matrix of
    ``sum_{alpha,beta} C[alpha,beta] a+_alpha a_beta`` is
    ``H[rows, cols] += sign * C[alpha, beta]``.
    """
    states = [sum(1 << o for o in c) for c in itertools.combinations(range(l), m)]
    index = {s: i for i, s in enumerate(states)}
    ksets = list(itertools.combinations(range(l), k))
    kindex = {sum(1 << o for o in c): i for i, c in enumerate(ksets)}
    rows, cols, al, be, sg = [], [], [], [], []
    for i, s in enumerate(states):
        occ = [o for o in range(l) if s >> o & 1]
        for beta in itertools.combinations(occ, k):
            rest, s1 = _annihilate(s, beta)
            bidx = kindex[sum(1 << o for o in beta)]
            free = [o for o in range(l) if not rest >> o & 1]
            for alpha in itertools.combinations(free, k):
                new, s2 = _create(rest, alpha)
                rows.append(index[new])
                cols.append(i)
                al.append(kindex[sum(1 << o for o in alpha)])
                be.append(bidx)
                sg.append(s1 * s2)
    out = tuple(np.array(a, dtype=np.int64) for a in (rows, cols, al, be)) + (
        np.array(sg, dtype=np.float64),)
    for a in out:
        a.setflags(write=False)
    return out


def egue_counts(l: int, m: int, k: int) -> dict:
    """Dimension and operator counts of EGUE(k) on ``C(l, m)`` Slater determinants."""
    return {
        "dim": comb(l, m),
        "k_body_operators": comb(l, m) * comb(m, k) * comb(l - m, k),
        "independent_parameters": comb(l, k) ** 2,
        "nonzero_lift_entries": len(egue_structure(l, m, k)[0]),
    }


def build_egue(spec: EnsembleSpec, sample_index: int = 0) -> HermitianMatrix:
    """Draw a GUE coefficient matrix on the k-particle space and lift it."""
    if spec.kind != "egue":
        raise InvalidArgumentError("expected an egue ensemble spec")
    l, m, k = spec.l, spec.m, spec.k
    dk = comb(l, k)
    c = from_coefficients(_gaussian_coeffs(spec, sample_index, dk), dk)
    rows, cols, al, be, sg = egue_structure(l, m, k)
    n = comb(l, m)
    h = np.zeros((n, n), dtype=np.complex128)
    np.add.at(h, (rows, cols), sg * c[al, be])
    return HermitianMatrix(h)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def sample_matrix(spec: EnsembleSpec, sample_index: int = 0) -> np.ndarray:
    if spec.kind == "gue":
        return sample_gue(spec, sample_index).entries
    if spec.kind in ("constrained", "deformed"):
        return constrained_matrix(spec, sample_index)
    if spec.kind == "banded":
        return banded_matrix(spec, sample_index)
    return build_egue(spec, sample_index).entries


def sample_spectrum(spec: EnsembleSpec, sample_index: int = 0) -> SpectrumSample:
    if spec.kind == "banded":
        return sample_banded(spec, sample_index)
    return SpectrumSample(eigenvalues(sample_matrix(spec, sample_index)), spec, sample_index)


def generate(spec: EnsembleSpec, n_samples: int, threads: int = 1,
             start: int = 0) -> list[SpectrumSample]:
    """Spectra for sample indices ``start, ..., start + n_samples - 1`` in index order."""
    idx = range(start, start + n_samples)
    if threads <= 1:
        return [sample_spectrum(spec, i) for i in idx]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: sample_spectrum(spec, i), idx))
