"""Dense complex matrix helpers.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. The functions
here wrap LAPACK/BLAS with the shape, domain and capacity checks the rest of
the package relies on.
"""

from __future__ import annotations

import numpy as np

from .errors import CapacityError, DomainError, NumericError, ShapeError

#: Maximum number of entries in any dense matrix (2^13 x 2^13).
DENSE_ENTRY_CAP = 1 << 26

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9


def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a finite 2-D complex128 array."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    return a


def check_capacity(rows: int, cols: int, cap: int | None = None) -> None:
    cap = DENSE_ENTRY_CAP if cap is None else cap
    if rows * cols > cap:
        raise CapacityError(
            f"dense matrix of shape ({rows}, {cols}) exceeds the cap of {cap} entries"
        )


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def kron(a, b, cap: int | None = None) -> np.ndarray:
    """Kronecker product ``a (x) b`` with the block layout of ``np.kron``."""
    a, b = as_matrix(a), as_matrix(b)
    check_capacity(a.shape[0] * b.shape[0], a.shape[1] * b.shape[1], cap)
    return np.kron(a, b)


def kron_all(factors, cap: int | None = None) -> np.ndarray:
    """Left-to-right Kronecker product of a sequence of matrices."""
    factors = [as_matrix(f) for f in factors]
    if not factors:
        raise ShapeError("kron_all needs at least one factor")
    rows = int(np.prod([f.shape[0] for f in factors], dtype=object))
    cols = int(np.prod([f.shape[1] for f in factors], dtype=object))
    check_capacity(rows, cols, cap)
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def dagger(m) -> np.ndarray:
    return np.conj(np.asarray(m)).T


def hermitian_part(m) -> np.ndarray:
    m = as_matrix(m)
    return 0.5 * (m + m.conj().T)


def _check_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {m.shape}")
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if dev > tol:
        raise DomainError(f"matrix is not Hermitian (max deviation {dev:.3g})")


def hermitian_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix.

    Returns ascending real eigenvalues and a unitary matrix whose columns are
    the matching eigenvectors, so that ``m = V diag(w) V^dagger``.
    """
    m = as_matrix(m)
    _check_hermitian(m)
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    return w, v


def psd_sqrt(m, tol: float = PSD_TOL) -> np.ndarray:
    """Principal square root of a positive semidefinite Hermitian matrix.

    Eigenvalues in ``[-tol, 0)``, and positive ones below round-off level, are
    treated as zero; anything more negative raises :class:`DomainError`.
    """
    w, v = hermitian_eig(m)
    if w.size and w[0] < -tol:
        raise DomainError(f"matrix is not positive semidefinite (eigenvalue {w[0]:.3g})")
    # eigenvalues below the solver's accuracy floor are zero, not sqrt(1e-16)
    floor = w.size * np.finfo(float).eps * (np.max(np.abs(w)) if w.size else 0.0)
    root = np.sqrt(np.where(w > floor, w, 0.0))
    s = (v * root) @ v.conj().T
    return 0.5 * (s + s.conj().T)
