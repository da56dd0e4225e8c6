"""Orthonormal Hermitian bases, constraint sets and the critical constraint count.

A constraint set splits the ``N**2``-dimensional real space of Hermitian
matrices into the constrained subspace Q (coefficients forced to zero) and
its orthogonal complement P.  Subspaces are stored as orthonormal rows of
standard-basis coefficients (see :mod:`cgue.hermitian`), on whichever side is
cheaper: random constraint sets keep their Q rows, while sets whose P side is
small (diagonal-only, banded) keep a P description instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import AmbiguityError, InvalidArgumentError
from .hermitian import from_coefficients, to_coefficients, _pair_indices


@dataclass(frozen=True)
class BasisSet:
    """``N**2`` Hermitian matrices, stacked as an array of shape (N**2, N, N)."""

    matrices: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    def __len__(self):
        return self.matrices.shape[0]

    def gram(self) -> np.ndarray:
        m = self.matrices.reshape(len(self), -1)
        # Tr(A B) = <vec(B^dagger)... > ; for Hermitian A, B: sum conj(A_ij) B_ij
        return (m.conj() @ m.T).real

    def is_complete(self, tol: float = 1e-10) -> bool:
        n = self.dim
        if len(self) != n * n:
            return False
        return bool(np.max(np.abs(self.gram() - np.eye(n * n))) < tol)


def standard_basis(n: int) -> BasisSet:
    if n < 1:
        raise InvalidArgumentError("dimension must be at least 1")
    return BasisSet(from_coefficients(np.eye(n * n), n))


def identity_coefficients(n: int) -> np.ndarray:
    """Coefficients of ``1_N / sqrt(N)`` (the unit-norm trace direction)."""
    c = np.zeros(n * n)
    c[:n] = 1.0 / np.sqrt(n)
    return c


def critical_count(multiplicities) -> int:
    """Critical constraint number from the degenerate-cluster sizes ``L_j``."""
    mult = [int(m) for m in multiplicities]
    if any(m < 1 for m in mult):
        raise InvalidArgumentError("multiplicities must be positive")
    n = sum(mult)
    return n * (n - 1) // 2 - sum(m * (m - 1) // 2 for m in mult)


@dataclass(frozen=True)
class DegeneracyProfile:
    multiplicities: tuple
    nq_crit: int

    @property
    def J(self) -> int:
        return len(self.multiplicities)

    @property
    def dim(self) -> int:
        return sum(self.multiplicities)


@dataclass(frozen=True)
class TracelessReduction:
    """Decomposition of the one constraint that keeps a trace.

    ``b1 = alpha * b1_hat + trace_b1 * 1/N``; ``b1_hat`` is ``None`` when
    ``alpha == 0``.
    """

    alpha: float
    trace_b1: float
    b1_hat: np.ndarray | None

    @property
    def alpha_squared(self) -> float:
        return self.alpha ** 2

    @property
    def edge(self) -> str | None:
        if self.alpha < 1e-12:
            return "alpha=0"
        if abs(self.alpha - 1.0) < 1e-12:
            return "alpha=1"
        return None


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """A P/Q partition of Hermitian-matrix space.

    Exactly one of ``q_coeffs`` (orthonormal rows spanning Q),
    ``p_coeffs`` (orthonormal rows spanning P) or ``p_indices`` (P spanned by
    a subset of the standard basis) describes the partition.
    """

    dim: int
    q_coeffs: np.ndarray | None = None
    p_coeffs: np.ndarray | None = None
    p_indices: np.ndarray | None = None
    generator: str = "explicit"
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        given = [x is not None for x in (self.q_coeffs, self.p_coeffs, self.p_indices)]
        if sum(given) != 1:
            raise InvalidArgumentError("exactly one subspace description is required")
        nn = self.dim * self.dim
        for rows in (self.q_coeffs, self.p_coeffs):
            if rows is not None and (rows.ndim != 2 or rows.shape[1] != nn or rows.shape[0] > nn):
                raise InvalidArgumentError(f"coefficient rows must have shape (k, {nn})")

    # -- sizes ---------------------------------------------------------------
    @property
    def n_q(self) -> int:
        return self.dim ** 2 - self.n_p

    @property
    def n_p(self) -> int:
        nn = self.dim ** 2
        if self.q_coeffs is not None:
            return nn - self.q_coeffs.shape[0]
        if self.p_coeffs is not None:
            return self.p_coeffs.shape[0]
        return len(self.p_indices)

    # -- explicit bases (materialised lazily; may be large) ---------------------
    @cached_property
    def q_rows(self) -> np.ndarray:
        if self.q_coeffs is not None:
            return self.q_coeffs
        return _complement(self._p_rows_explicit(), self.dim ** 2)

    @cached_property
    def p_rows(self) -> np.ndarray:
        if self.q_coeffs is None:
            return self._p_rows_explicit()
        return _complement(self.q_coeffs, self.dim ** 2)

    def _p_rows_explicit(self) -> np.ndarray:
        if self.p_coeffs is not None:
            return self.p_coeffs
        rows = np.zeros((len(self.p_indices), self.dim ** 2))
        rows[np.arange(len(self.p_indices)), self.p_indices] = 1.0
        return rows

    def q_matrices(self) -> np.ndarray:
        return from_coefficients(self.q_rows, self.dim)

    def p_matrices(self) -> np.ndarray:
        return from_coefficients(self.p_rows, self.dim)

    # -- projections on coefficient vectors (batched over leading axes) --------
    def project_p(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64)
        if self.q_coeffs is not None:
            q = self.q_coeffs
            return c - (c @ q.T) @ q
        if self.p_coeffs is not None:
            p = self.p_coeffs
            return (c @ p.T) @ p
        out = np.zeros_like(c)
        out[..., self.p_indices] = c[..., self.p_indices]
        return out

    def project_q(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=np.float64)
        return c - self.project_p(c)

    # -- trace structure -----------------------------------------------------
    def q_traces(self) -> np.ndarray:
        """Traces of the Q basis matrices, ``<B_q>``."""
        return self.q_rows[:, :self.dim].sum(axis=1)

    @property
    def traceless(self) -> bool:
        if self.n_q == 0:
            return True
        # <B_q> = 0 for all q  <=>  the identity lies in P
        e = identity_coefficients(self.dim)
        return bool(np.linalg.norm(self.project_q(e)) < 1e-10)


def _complement(rows: np.ndarray, nn: int) -> np.ndarray:
    k = rows.shape[0]
    if k == 0:
        return np.eye(nn)
    if k == nn:
        return np.zeros((0, nn))
    q, _ = np.linalg.qr(rows.T, mode="complete")
    comp = q[:, k:].T
    # one re-orthogonalisation pass against the given rows
    comp = comp - (comp @ rows.T) @ rows
    q2, r2 = np.linalg.qr(comp.T)
    return (q2 * np.sign(np.diag(r2))).T


def _orthonormal_rows(g: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on the rows of ``g`` (Householder QR, positive R diagonal)."""
    if g.shape[0] == 0:
        return g.copy()
    q, r = np.linalg.qr(g.T)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return (q * d).T


def random_traceless_constraints(n: int, n_q: int, seed: int) -> ConstraintSet:
    """``n_q`` random orthonormal traceless constraints, reproducible from ``seed``."""
    if n < 1:
        raise InvalidArgumentError("dimension must be at least 1")
    if not 0 <= n_q <= n * n - 1:
        raise InvalidArgumentError(f"n_q must lie in [0, {n * n - 1}] for traceless constraints")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), n, n_q]))
    g = rng.standard_normal((n_q, n * n))
    e = identity_coefficients(n)
    for _ in range(2):
        g -= np.outer(g @ e, e)
        g = _orthonormal_rows(g)
    return ConstraintSet(n, q_coeffs=g, generator="random-traceless", seed=int(seed),
                         params={"n_q": n_q})


def explicit_constraints(matrices) -> ConstraintSet:
    """Constraint set spanned by the given (orthonormalised) Hermitian matrices."""
    mats = np.asarray(matrices, dtype=np.complex128)
    if mats.ndim == 2:
        mats = mats[None]
    n = mats.shape[1]
    c = np.stack([to_coefficients(m) for m in mats]) if len(mats) else np.zeros((0, n * n))
    gram = c @ c.T
    if len(c) and np.max(np.abs(gram - np.eye(len(c)))) > 1e-10:
        c = _orthonormal_rows(c)
    return ConstraintSet(n, q_coeffs=c, generator="explicit")


def diagonal_p_constraints(n: int) -> ConstraintSet:
    """P spanned by the ``n`` diagonal units; every off-diagonal element is constrained."""
    return ConstraintSet(n, p_indices=np.arange(n), generator="diagonal-p")


def band_indices(n: int, b: int) -> np.ndarray:
    """Standard-basis indices of the in-band (|m - n| <= b) basis matrices."""
    iu, ju = _pair_indices(n)
    npair = len(iu)
    inband = np.nonzero(ju - iu <= b)[0]
    return np.concatenate([np.arange(n), n + inband, n + npair + inband])


def band_complement_constraints(n: int, b: int) -> ConstraintSet:
    """Constraints removing every matrix element outside the band ``|m - n| <= b``."""
    if not 1 <= b <= n:
        raise InvalidArgumentError("band width must satisfy 1 <= b <= n")
    return ConstraintSet(n, p_indices=band_indices(n, b), generator="band-complement",
                         params={"b": b})


def conjugate_constraints(cs: ConstraintSet, u: np.ndarray) -> ConstraintSet:
    """The set ``{U B_q U^dagger}``; spans are mapped isometrically."""
    u = np.asarray(u)
    mats = cs.q_matrices()
    rotated = u @ mats @ u.conj().T
    rows = np.stack([to_coefficients(m) for m in rotated]) if len(mats) else cs.q_rows.copy()
    return ConstraintSet(cs.dim, q_coeffs=rows, generator="explicit")


# ---------------------------------------------------------------------------
# traceless reduction
# ---------------------------------------------------------------------------

def traceless_reduce(cs: ConstraintSet) -> tuple[ConstraintSet, TracelessReduction]:
    """Rotate the constraints so that only the first one keeps a trace.

    The orthogonal mixing is a single Householder reflection in constraint
    space sending the vector of traces to the first axis; the span (and
    therefore the Q projector) is unchanged.
    """
    if cs.n_q < 1:
        raise InvalidArgumentError("traceless reduction needs at least one constraint")
    n = cs.dim
    rows = cs.q_rows
    t = rows[:, :n].sum(axis=1)
    norm = float(np.linalg.norm(t))
    if norm < 1e-13:
        b1 = rows[0]
        return cs, TracelessReduction(1.0, 0.0, b1.copy())

    u = t / norm
    k = len(u)
    w = u.copy()
    if u[0] > 0:
        w[0] += 1.0
        o = np.eye(k) - 2.0 * np.outer(w, w) / (w @ w)
        o[0] *= -1.0
    else:
        w[0] -= 1.0
        o = np.eye(k) - 2.0 * np.outer(w, w) / (w @ w)
    new = o @ rows
    # remove rounding residue of the traces of the rotated tail
    e = identity_coefficients(n)
    new[1:] -= np.outer(new[1:] @ e, e)
    trace_b1 = float(new[0, :n].sum())
    alpha2 = min(1.0, max(0.0, 1.0 - trace_b1 ** 2 / n))
    alpha = float(np.sqrt(alpha2))
    if alpha > 1e-12:
        b1_hat = new[0] - trace_b1 * np.sqrt(n) / n * e
        b1_hat = b1_hat / alpha
    else:
        b1_hat = None
    reduced = ConstraintSet(n, q_coeffs=new, generator=cs.generator, seed=cs.seed,
                            params={**cs.params, "reduced": True})
    return reduced, TracelessReduction(alpha, trace_b1, b1_hat)


# ---------------------------------------------------------------------------
# projectors and degeneracy analysis
# ---------------------------------------------------------------------------

def projectors(cs: ConstraintSet):
    """Superoperators ``(P, Q)`` acting on Hermitian matrices."""
    n = cs.dim

    def p_op(h):
        return from_coefficients(cs.project_p(to_coefficients(np.asarray(h))), n)

    def q_op(h):
        return from_coefficients(cs.project_q(to_coefficients(np.asarray(h))), n)

    return p_op, q_op


def combination(cs: ConstraintSet, s) -> np.ndarray:
    """``B(s) = sum_q s_q B_q``."""
    return from_coefficients(np.asarray(s, dtype=float) @ cs.q_rows, cs.dim)


def _cluster(values: np.ndarray, tol: float) -> tuple:
    scale = max(float(np.max(np.abs(values))), np.finfo(float).tiny)
    breaks = np.nonzero(np.diff(values) > tol * scale)[0]
    sizes = np.diff(np.concatenate([[-1], breaks, [len(values) - 1]]))
    return tuple(sorted((int(x) for x in sizes), reverse=True))


def degeneracy_profile(cs: ConstraintSet, n_directions: int = 8,
                       magnitudes=(1e3, 1e4, 1e5), cluster_tol: float = 1e-6,
                       seed: int = 0) -> DegeneracyProfile:
    """Asymptotic eigenvalue-degeneracy pattern of ``B(s)`` and the critical count.

    Directions are drawn from per-direction seed streams so the result does
    not depend on evaluation order.  Every (direction, magnitude) pair must
    give the same multiplicity pattern; otherwise :class:`AmbiguityError`.
    """
    if cs.n_q < 1:
        raise InvalidArgumentError("degeneracy profile needs at least one constraint")
    rows = cs.q_rows
    patterns = {}
    for i in range(n_directions):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        omega = rng.standard_normal(cs.n_q)
        omega /= np.linalg.norm(omega)
        for mag in magnitudes:
            b = from_coefficients((mag * omega) @ rows, cs.dim)
            w = np.linalg.eigvalsh(b)
            patterns.setdefault(_cluster(w, cluster_tol), []).append((i, mag))
    if len(patterns) != 1:
        raise AmbiguityError(
            f"degeneracy pattern depends on direction: {sorted(patterns)}", patterns)
    (mult,) = patterns
    return DegeneracyProfile(mult, critical_count(mult))
