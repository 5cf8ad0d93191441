"""Reference schemes: block diagonalization and the DPC sum capacity.

Block diagonalization confines each user's precoder to the null space of
every other user's channel, removing all inter-user interference; power is
then water-filled jointly across the eigenmodes of all users' effective
channels.  The DPC bound is the broadcast sum capacity, computed in the dual
multiple-access domain (where the objective is jointly concave) with the
same solver machinery the optimizer uses: spectral projected gradient
ascent over the PSD trace simplex, terminated on the conditional-gradient
optimality gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .channel import ChannelSet
from .optimizer import _herm, _ld2, _project_trace_simplex

__all__ = ["BaselineResult", "water_filling", "bd_sum_rate", "bd_design", "dpc_sum_capacity"]

_LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class BaselineResult:
    """Outcome of one baseline on one channel realization."""

    scheme: str
    per_user_rates: np.ndarray | None
    sum_rate: float
    power: float


def water_filling(gains, p_t: float, noise: float) -> tuple[np.ndarray, float]:
    """Optimal power allocation across parallel channels.

    ``gains`` are the channel power gains of the parallel subchannels; the
    allocation maximizes ``sum log2(1 + p_i g_i / noise)`` under
    ``sum p_i <= p_t``.  Returns ``(powers, capacity_bits)``.
    """
    g = np.asarray(gains, dtype=np.float64)
    if np.any(g < 0.0):
        raise ValueError("water_filling: gains must be nonnegative")
    if noise <= 0.0:
        raise ValueError("water_filling: noise must be positive")
    if p_t < 0.0:
        raise ValueError("water_filling: power budget must be nonnegative")
    powers = np.zeros_like(g)
    usable = g > 0.0
    if p_t == 0.0 or not np.any(usable):
        return powers, 0.0
    inv = noise / g[usable]
    order = np.argsort(inv)
    inv_sorted = inv[order]
    # Largest active set m whose common water level stays above its worst
    # inverse gain.
    m = inv_sorted.size
    while m > 0:
        level = (p_t + inv_sorted[:m].sum()) / m
        if level > inv_sorted[m - 1]:
            break
        m -= 1
    alloc = np.zeros_like(inv_sorted)
    alloc[:m] = level - inv_sorted[:m]
    back = np.zeros_like(inv_sorted)
    back[order] = alloc
    powers[usable] = back
    capacity = float(np.sum(np.log2(1.0 + powers[usable] * g[usable] / noise)))
    return powers, capacity


def _others_null_basis(channels: ChannelSet, k: int) -> np.ndarray:
    rows = [channels.H[j] for j in range(channels.n_users) if j != k]
    n = channels.n_tx
    if not rows:
        return np.eye(n, dtype=np.complex128)
    stacked = np.vstack(rows)
    _, s, v = linalg.svd(stacked)
    rank = linalg.numerical_rank(s)
    if rank >= n:
        raise ValueError(
            "bd: no interference-free subspace left for user "
            f"{k}; the system is overloaded for block diagonalization"
        )
    return np.ascontiguousarray(v[:, rank:])


def bd_design(channels: ChannelSet, p_t: float, sigma2: float):
    """Block-diagonalization precoders plus the resulting rates.

    Returns ``(precoders, result)``: per-user precoding matrices whose
    columns live in the null space of all other users' channels, with power
    water-filled jointly across every user's eigenmodes under the total
    budget.
    """
    if sigma2 <= 0.0:
        raise ValueError("bd: noise power must be positive")
    k = channels.n_users
    mode_dirs, mode_gain, mode_user = [], [], []
    for u in range(k):
        basis = _others_null_basis(channels, u)
        eff = channels.H[u] @ basis
        w_l, s, w_r = linalg.svd(eff)
        r = linalg.numerical_rank(s)
        for j in range(r):
            mode_dirs.append(basis @ w_r[:, j])
            mode_gain.append(float(s[j] ** 2))
            mode_user.append(u)
    gains = np.asarray(mode_gain)
    powers, _ = water_filling(gains, p_t, sigma2)
    per_user = np.zeros(k)
    precoders = []
    for u in range(k):
        cols, mods = [], []
        for d, g, pu, p in zip(mode_dirs, mode_gain, mode_user, powers):
            if pu == u:
                cols.append(np.sqrt(p) * d)
                mods.append(np.log2(1.0 + p * g / sigma2))
        per_user[u] = float(np.sum(mods))
        precoders.append(np.column_stack(cols) if cols else np.zeros((channels.n_tx, 0)))
    result = BaselineResult(
        scheme="BD",
        per_user_rates=per_user,
        sum_rate=float(per_user.sum()),
        power=float(powers.sum()),
    )
    return precoders, result


def bd_sum_rate(channels: ChannelSet, p_t: float, sigma2: float) -> BaselineResult:
    """Sum rate of interference-free block-diagonalization precoding."""
    _, result = bd_design(channels, p_t, sigma2)
    return result


def dpc_sum_capacity(
    channels: ChannelSet,
    p_t: float,
    sigma2: float,
    gap_tol: float = 1e-4,
    max_iter: int = 2000,
) -> BaselineResult:
    """Broadcast sum capacity under a total power budget.

    Maximizes the dual multiple-access objective
    ``log2 det(I + sum_k H_k^H S_k H_k / sigma2)`` over PSD uplink
    covariances with ``sum tr(S_k) <= p_t`` by conditional gradient: the
    linear oracle is the leading eigenpair of the per-user gradient blocks,
    the step a batched backtracking line search, terminating once the
    optimality gap falls below ``gap_tol`` bits (or at ``max_iter``).
    """
    if sigma2 <= 0.0:
        raise ValueError("dpc: noise power must be positive")
    if p_t < 0.0:
        raise ValueError("dpc: power budget must be nonnegative")
    k = channels.n_users
    n = channels.n_tx
    if p_t == 0.0:
        return BaselineResult(scheme="DPC", per_user_rates=None, sum_rate=0.0, power=0.0)
    # Uplink maps, noise-normalized: received covariance is I + sum B S B^H.
    bmaps = [channels.H[u].conj().T / np.sqrt(sigma2) for u in range(k)]
    blocks = [np.zeros((channels.H[u].shape[0],) * 2, dtype=np.complex128) for u in range(k)]

    def received_at(blks):
        acc = np.eye(n, dtype=np.complex128)
        for b, s in zip(bmaps, blks):
            acc += b @ s @ b.conj().T
        return _herm(acc)

    received = received_at(blocks)
    value = _ld2(received)
    alpha = None
    prev_z = prev_g = None
    for _ in range(max_iter):
        inv = np.linalg.inv(received)
        grads = [_herm(b.conj().T @ inv @ b) / _LN2 for b in bmaps]
        lam_best = max(0.0, max(float(np.linalg.eigvalsh(g)[-1]) for g in grads))
        cur_ip = sum(np.vdot(blocks[j], grads[j]).real for j in range(k))
        gap = p_t * lam_best - cur_ip
        if gap <= gap_tol:
            break
        z_flat = np.concatenate([b.ravel() for b in blocks])
        g_flat = np.concatenate([g.ravel() for g in grads])
        if alpha is None:
            alpha = p_t / max(float(np.linalg.norm(g_flat)), 1e-12)
        elif prev_z is not None:
            s = z_flat - prev_z
            y = g_flat - prev_g
            sy = -float(np.vdot(s, y).real)
            if sy > 1e-30 and np.isfinite(sy):
                alpha = float(np.vdot(s, s).real) / sy
        prev_z, prev_g = z_flat, g_flat
        step = float(np.clip(alpha, 1e-16, 1e16))
        accepted = False
        for _ in range(60):
            cand = _project_trace_simplex(
                [blocks[j] + step * grads[j] for j in range(k)], p_t
            )
            cand_received = received_at(cand)
            cand_value = _ld2(cand_received)
            if cand_value > value + 1e-14:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        alpha = step
        blocks = cand
        received = cand_received
        value = cand_value
    power = float(sum(np.trace(b).real for b in blocks))
    return BaselineResult(scheme="DPC", per_user_rates=None, sum_rate=value, power=power)
