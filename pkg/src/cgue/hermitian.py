"""Dense Hermitian matrices, the trace scalar product and basis expansions.

Coefficient vectors always refer to the *standard basis* of Hermitian
matrices, ordered as

* ``n`` diagonal units ``E_mm``,
* ``n(n-1)/2`` symmetric pairs ``(E_mn + E_nm)/sqrt(2)`` for ``m < n``,
* ``n(n-1)/2`` antisymmetric pairs ``i(E_mn - E_nm)/sqrt(2)`` for ``m < n``,

with the pairs enumerated in ``numpy.triu_indices(n, 1)`` order.  The map
between a matrix and its ``n**2`` real coefficients is an isometry from the
trace scalar product to the Euclidean one, which is what the constraint and
sampling code relies on.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from .errors import InvalidArgumentError, NumericFailure

HERMITIAN_TOL = 1e-12
_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class HermitianMatrix:
    """An ``N x N`` complex Hermitian matrix.

    Construction checks Hermiticity to ``tol`` (relative to the largest entry)
    and then stores the exactly symmetrised array, so later arithmetic never
    sees a non-Hermitian residue.
    """

    entries: np.ndarray

    def __init__(self, entries, tol: float = 1e-10):
        a = np.array(entries, dtype=np.complex128)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InvalidArgumentError(f"expected a non-empty square matrix, got shape {a.shape}")
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - a.conj().T)) > tol * scale:
            raise InvalidArgumentError("matrix is not Hermitian")
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def digest(self) -> str:
        return matrix_hash(self.entries)


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def _as_array(h) -> np.ndarray:
    if isinstance(h, HermitianMatrix):
        return h.entries
    return np.asarray(h)


def matrix_hash(a) -> str:
    a = np.ascontiguousarray(_as_array(a), dtype="<c16")
    return hashlib.sha256(a.tobytes()).hexdigest()


def trace_inner_product(a, b) -> float:
    """Tr(ab) for Hermitian a, b; real by Hermiticity."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"dimension mismatch: {a.shape} vs {b.shape}")
    # Tr(ab) = sum_ij a_ij b_ji = sum_ij a_ij conj(b_ij) for Hermitian b
    return float(np.vdot(b, a).real)


def center(h) -> HermitianMatrix:
    """Remove the trace part: ``h - 1 <h>/N``."""
    a = np.array(_as_array(h), dtype=np.complex128)
    n = a.shape[0]
    a[np.diag_indices(n)] -= np.trace(a).real / n
    return HermitianMatrix(a)


def eigendecompose(h) -> EigenDecomposition:
    a = _as_array(h)
    try:
        w, v = linalg.eigh(a, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericFailure(f"eigendecomposition failed: {exc}", matrix_hash(a)) from exc
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], v[:, order])


def eigenvalues(h) -> np.ndarray:
    """Ascending eigenvalues only (cheaper than a full decomposition)."""
    a = _as_array(h)
    try:
        w = linalg.eigvalsh(a, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericFailure(f"eigenvalue solver failed: {exc}", matrix_hash(a)) from exc
    return np.sort(w)


@lru_cache(maxsize=64)
def _pair_indices(n: int):
    iu, ju = np.triu_indices(n, 1)
    iu.setflags(write=False)
    ju.setflags(write=False)
    return iu, ju


def to_coefficients(h) -> np.ndarray:
    """Real coefficients of ``h`` in the standard basis (length ``N**2``)."""
    a = _as_array(h)
    n = a.shape[0]
    iu, ju = _pair_indices(n)
    upper = a[iu, ju]
    return np.concatenate([a.diagonal().real, _SQRT2 * upper.real, _SQRT2 * upper.imag])


def from_coefficients(c, n: int | None = None) -> np.ndarray:
    """Inverse of :func:`to_coefficients`.

    ``c`` may carry leading batch dimensions; the result then has shape
    ``c.shape[:-1] + (n, n)``.
    """
    c = np.asarray(c, dtype=np.float64)
    if n is None:
        n = int(round(np.sqrt(c.shape[-1])))
    if c.shape[-1] != n * n:
        raise InvalidArgumentError(f"expected {n * n} coefficients, got {c.shape[-1]}")
    iu, ju = _pair_indices(n)
    npair = len(iu)
    out = np.zeros(c.shape[:-1] + (n, n), dtype=np.complex128)
    d = np.arange(n)
    out[..., d, d] = c[..., :n]
    upper = (c[..., n:n + npair] + 1j * c[..., n + npair:]) / _SQRT2
    out[..., iu, ju] = upper
    out[..., ju, iu] = upper.conj()
    return out


def expand(h, basis) -> np.ndarray:
    """Coefficients ``h_a = <B_a|H>`` in an arbitrary complete basis."""
    a = _as_array(h)
    mats = basis.matrices
    if mats.shape[1:] != a.shape:
        raise InvalidArgumentError("basis dimension does not match matrix")
    if not basis.is_complete():
        raise InvalidArgumentError("basis is incomplete")
    return np.einsum("kij,ij->k", mats.conj(), a).real


def reconstruct(coeffs, basis) -> HermitianMatrix:
    mats = basis.matrices
    c = np.asarray(coeffs, dtype=np.float64)
    if c.shape != (mats.shape[0],):
        raise InvalidArgumentError("coefficient count does not match basis")
    return HermitianMatrix(np.tensordot(c, mats, axes=1))


# ---------------------------------------------------------------------------
# binary matrix files: one JSON header line, then 2*N*N little-endian float64
# ---------------------------------------------------------------------------

def write_matrix(fh, h) -> None:
    a = np.ascontiguousarray(_as_array(h), dtype="<c16")
    header = {"dim": int(a.shape[0]), "layout": "row-major", "scalar": "complex-f64-interleaved"}
    fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
    fh.write(a.tobytes())


def read_matrix(fh) -> HermitianMatrix:
    line = fh.readline()
    if not line:
        raise EOFError("no matrix record")
    header = json.loads(line)
    if header.get("layout") != "row-major" or header.get("scalar") != "complex-f64-interleaved":
        raise InvalidArgumentError(f"unsupported matrix header {header}")
    n = int(header["dim"])
    payload = fh.read(16 * n * n)
    if len(payload) != 16 * n * n:
        raise InvalidArgumentError("truncated matrix payload")
    return HermitianMatrix(np.frombuffer(payload, dtype="<c16").reshape(n, n))


def read_matrices(fh) -> list[HermitianMatrix]:
    out = []
    while True:
        try:
            out.append(read_matrix(fh))
        except EOFError:
            return out
