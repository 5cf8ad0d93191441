"""Dense complex-matrix primitives shared by the precoding stack.

Everything here operates on plain ``numpy.ndarray`` values with
``complex128`` entries.  Inputs are validated once at this layer so the
numerical code above it can assume finite, well-shaped matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HermEig",
    "as_cmatrix",
    "fix_column_phases",
    "herm_eig",
    "svd",
    "numerical_rank",
    "logdet_psd",
    "logdet_eye_plus_psd",
    "psd_sqrt_factor",
]

# Rank rule: sigma_i counts as nonzero iff sigma_i > REL_RANK_TOL * sigma_1,
# with an absolute fallback when sigma_1 is exactly zero.
REL_RANK_TOL = 1e-10
ABS_RANK_TOL = 1e-12

# Eigenvalues in [-PSD_EIG_TOL * max(1, lambda_max), 0] are round-off and get
# clamped to zero; anything more negative is treated as a genuine indefinite
# input.
PSD_EIG_TOL = 1e-9

# Admissible relative deviation from Hermitian symmetry before symmetrizing.
HERM_INPUT_TOL = 1e-8

_LN2 = float(np.log(2.0))


def as_cmatrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite complex128 2-D array, validating on entry."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D array, got ndim={m.ndim}")
    if not np.isfinite(m).all():
        raise ValueError(f"{name}: entries must be finite (no NaN/Inf)")
    return m


def fix_column_phases(v: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real nonnegative.

    Resolves the unit-phase ambiguity of eigenvectors and singular vectors,
    making decompositions deterministic for golden tests.  Zero columns are
    left untouched.  Returns a new array.
    """
    out = np.array(v, dtype=np.complex128, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        i = int(np.argmax(np.abs(col)))
        pivot = col[i]
        mag = abs(pivot)
        if mag > 0.0:
            col *= pivot.conjugate() / mag
    return out


@dataclass(frozen=True)
class HermEig:
    """Eigendecomposition of a Hermitian matrix.

    ``values`` are real and sorted descending; ``vectors`` has orthonormal,
    phase-fixed columns so that ``vectors @ diag(values) @ vectors.conj().T``
    reconstructs the (symmetrized) input.
    """

    values: np.ndarray
    vectors: np.ndarray


def herm_eig(a) -> HermEig:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    The input is symmetrized before decomposition; a relative deviation from
    Hermitian symmetry beyond ``HERM_INPUT_TOL`` raises ``ValueError``.
    """
    m = as_cmatrix(a, "herm_eig input")
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"herm_eig: matrix must be square, got {m.shape}")
    nrm = np.linalg.norm(m)
    dev = np.linalg.norm(m - m.conj().T)
    if dev > HERM_INPUT_TOL * max(nrm, ABS_RANK_TOL):
        raise ValueError("herm_eig: input is not Hermitian within tolerance")
    s = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(s)
    w = np.ascontiguousarray(w[::-1])
    v = np.ascontiguousarray(v[:, ::-1])
    return HermEig(values=w, vectors=fix_column_phases(v))


def svd(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full singular value decomposition ``A = U diag(s) V^H``.

    Returns ``(U, s, V)`` with singular values descending and ``V`` holding
    the right singular vectors as columns.  Paired singular vectors are
    phase-fixed jointly (phase taken from the V column) so the factorization
    is deterministic without breaking the reconstruction; surplus columns
    (null-space directions) are phase-fixed independently.
    """
    m = as_cmatrix(a, "svd input")
    u, s, vh = np.linalg.svd(m, full_matrices=True)
    v = np.ascontiguousarray(vh.conj().T)
    u = np.ascontiguousarray(u)
    npair = int(s.size)
    for j in range(npair):
        if s[j] <= 0.0:
            npair = j
            break
        col = v[:, j]
        i = int(np.argmax(np.abs(col)))
        pivot = col[i]
        mag = abs(pivot)
        if mag > 0.0:
            ph = pivot.conjugate() / mag
            v[:, j] *= ph
            u[:, j] *= ph
    if npair < v.shape[1]:
        v[:, npair:] = fix_column_phases(v[:, npair:])
    if npair < u.shape[1]:
        u[:, npair:] = fix_column_phases(u[:, npair:])
    return u, s, v


def numerical_rank(singular_values: np.ndarray) -> int:
    """Numerical rank from descending singular values."""
    s = np.asarray(singular_values, dtype=np.float64)
    if s.size == 0:
        return 0
    s0 = float(s[0])
    tol = REL_RANK_TOL * s0 if s0 > 0.0 else ABS_RANK_TOL
    return int(np.count_nonzero(s > tol))


def logdet_psd(a) -> float:
    """``log2 det(A)`` for Hermitian positive definite ``A`` via Cholesky.

    Raises ``ValueError`` for inputs that are indefinite beyond the clamp
    tolerance, and signals a -inf log-determinant (singular input) as an
    error since callers of this routine require strict positivity.
    """
    m = as_cmatrix(a, "logdet_psd input")
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"logdet_psd: matrix must be square, got {m.shape}")
    s = 0.5 * (m + m.conj().T)
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(s)
        scale = max(1.0, float(w[-1]) if w.size else 0.0)
        if w.size and float(w[0]) < -PSD_EIG_TOL * scale:
            raise ValueError("logdet_psd: input is indefinite beyond tolerance") from None
        raise ValueError("logdet_psd: input is singular (log-det is -inf)") from None
    return float(2.0 * np.sum(np.log2(np.real(np.diag(chol)))))


def logdet_eye_plus_psd(p: np.ndarray) -> float:
    """``log2 det(I + P)`` for Hermitian PSD ``P``, robust to round-off.

    Fast path is a Cholesky of ``I + P``; if that fails, eigenvalues of ``P``
    are clamped at zero (rejecting anything below the clamp window) and the
    determinant is formed from ``1 + lambda_i``.
    """
    s = 0.5 * (p + p.conj().T)
    n = s.shape[0]
    try:
        chol = np.linalg.cholesky(np.eye(n) + s)
        return float(2.0 * np.sum(np.log2(np.real(np.diag(chol)))))
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(s)
        scale = max(1.0, float(w[-1]) if w.size else 0.0)
        if w.size and float(w[0]) < -PSD_EIG_TOL * scale:
            raise ValueError("logdet_eye_plus_psd: input is not PSD within tolerance") from None
        return float(np.sum(np.log2(1.0 + np.clip(w, 0.0, None))))


def psd_sqrt_factor(x, r: int) -> np.ndarray:
    """Rectangular square-root factor of a Hermitian PSD matrix.

    Returns ``F`` with exactly ``r`` columns ordered by descending
    eigenvalue, such that ``F @ F.conj().T`` is the best rank-``r`` PSD
    approximation of ``X`` (exact whenever ``rank(X) <= r``).  Eigenvalues in
    the round-off window below zero are clamped; more negative spectra raise
    ``ValueError``.
    """
    if r <= 0:
        raise ValueError(f"psd_sqrt_factor: rank bound must be positive, got {r}")
    eig = herm_eig(x)
    w = eig.values
    scale = max(1.0, float(w[0]) if w.size else 0.0)
    if w.size and float(w[-1]) < -PSD_EIG_TOL * scale:
        raise ValueError("psd_sqrt_factor: input is not PSD within tolerance")
    w = np.clip(w, 0.0, None)
    n = eig.vectors.shape[0]
    k = min(r, n)
    f = eig.vectors[:, :k] * np.sqrt(w[:k])[np.newaxis, :]
    if r > n:
        f = np.hstack([f, np.zeros((n, r - n), dtype=np.complex128)])
    return f
