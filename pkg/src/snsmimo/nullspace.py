"""Successive null-space bases and the precoder factors built on them.

User ``i`` (by decode position) gets a semi-unitary basis spanning the null
space of the stacked channels of all earlier positions, so its transmission
is invisible to them; position 0 spans the whole transmit space.  Precoders
are ``basis @ factor`` with a rectangular PSD square-root factor, which keeps
the radiated power equal to the trace of the covariance block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .channel import ChannelSet

__all__ = ["NullBasisSet", "successive_null_bases", "sns_precoder"]

# Orthonormality of computed bases / leakage into protected rows, relative.
_BASIS_ORTHO_TOL = 1e-10
_LEAKAGE_TOL = 1e-9

# Reconstruction slack allowed when factoring a covariance block whose rank
# must not exceed the user's antenna count.
_FACTOR_RECON_TOL = 1e-8


@dataclass(frozen=True)
class NullBasisSet:
    """Per-position null-space bases for one user ordering.

    ``bases[i]`` has orthonormal columns spanning the null space of the
    stacked channels of positions ``0..i-1``; ``bases[0]`` is the identity.
    ``order[i]`` is the user label decoded at position ``i``.
    """

    bases: tuple[np.ndarray, ...]
    order: tuple[int, ...]

    @property
    def n_tx(self) -> int:
        return self.bases[0].shape[0]

    def dim(self, i: int) -> int:
        """Column count of the basis at position ``i``."""
        return self.bases[i].shape[1]


def successive_null_bases(channels: ChannelSet, order) -> NullBasisSet:
    """Build the per-position null-space bases for a given user ordering.

    Position ``i`` receives a basis of the null space of the augmented matrix
    stacking the channels of positions ``0..i-1``; full-row-rank channels
    guarantee its dimension is ``n_tx - sum`` of the earlier antenna counts.
    Output is deterministic: basis columns come from the SVD in fixed order
    with fixed phases.
    """
    order = tuple(int(v) for v in order)
    k = channels.n_users
    if sorted(order) != list(range(k)):
        raise ValueError(f"successive_null_bases: order must permute 0..{k - 1}, got {order}")
    n = channels.n_tx
    h_pos = [channels.H[u] for u in order]
    bases: list[np.ndarray] = [np.eye(n, dtype=np.complex128)]
    rows_so_far = 0
    for i in range(1, k):
        rows_so_far += h_pos[i - 1].shape[0]
        stacked = np.vstack(h_pos[:i])
        _, s, v = linalg.svd(stacked)
        rank = linalg.numerical_rank(s)
        if rank != rows_so_far:
            raise ArithmeticError(
                "successive_null_bases: augmented matrix lost row rank "
                f"({rank} < {rows_so_far}); channels must be full row rank"
            )
        basis = np.ascontiguousarray(v[:, rank:])
        _check_basis(basis, h_pos[:i], n - rows_so_far)
        bases.append(basis)
    return NullBasisSet(bases=tuple(bases), order=order)


def _check_basis(basis, protected, want_cols):
    if basis.shape[1] != want_cols:
        raise ArithmeticError(
            f"successive_null_bases: null space has {basis.shape[1]} columns, expected {want_cols}"
        )
    gram = basis.conj().T @ basis
    if np.max(np.abs(gram - np.eye(basis.shape[1]))) > _BASIS_ORTHO_TOL:
        raise ArithmeticError("successive_null_bases: basis lost orthonormality")
    for h in protected:
        leak = np.linalg.norm(h @ basis)
        if leak > _LEAKAGE_TOL * max(np.linalg.norm(h), 1e-30):
            raise ArithmeticError("successive_null_bases: basis leaks into protected rows")


def sns_precoder(basis: np.ndarray, x: np.ndarray, rank_bound: int) -> np.ndarray:
    """Assemble the precoder ``basis @ x^(1/2)`` for one user.

    ``x`` must be Hermitian PSD with numerical rank at most ``rank_bound``
    (the user's antenna count); the factor then reproduces ``x`` exactly and
    the precoder satisfies ``tr(P P^H) = tr(x)``.
    """
    basis = linalg.as_cmatrix(basis, "basis")
    factor = linalg.psd_sqrt_factor(x, rank_bound)
    if basis.shape[1] != factor.shape[0]:
        raise ValueError(
            f"sns_precoder: basis columns {basis.shape[1]} != block size {factor.shape[0]}"
        )
    x = linalg.as_cmatrix(x, "covariance block")
    recon = np.linalg.norm(factor @ factor.conj().T - 0.5 * (x + x.conj().T))
    if recon > _FACTOR_RECON_TOL * max(1.0, np.linalg.norm(x)):
        raise ValueError(
            f"sns_precoder: covariance rank exceeds the bound {rank_bound} beyond tolerance"
        )
    return basis @ factor
