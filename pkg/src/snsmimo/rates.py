"""Exact achievable-rate evaluation for candidate covariance solutions.

All rates are in bits per channel use, computed in the numerically stable
log-det difference form

    R = log2 det(I + (S + Q_signal) / sigma2) - log2 det(I + S / sigma2),

which avoids explicit matrix inversion.  The decode position ``i`` of a
solution sees interference from the private streams of positions ``<= i``
when decoding the common stream (its own private stream is not yet removed)
and from positions ``< i`` when decoding its private stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, SystemConfig
from .linalg import logdet_eye_plus_psd
from .nullspace import NullBasisSet

__all__ = [
    "CovarianceSolution",
    "RateReport",
    "effective_covariances",
    "private_rate",
    "common_rate_at_user",
    "evaluate",
]

_POWER_SLACK = 1e-8


@dataclass(frozen=True)
class CovarianceSolution:
    """Transmit covariances of one candidate design, indexed by position.

    ``Qc`` is the transmit-side common covariance (n_tx x n_tx) in both
    modes.  In ``"relaxed"`` mode ``X[i]`` is the full covariance block
    acting on the null-space basis of position ``i``.  In ``"reformulated"``
    mode ``X[i]`` is the small core acting inside the column space of
    ``U[i]`` (and ``Qc`` was assembled inside ``Uc``), which caps the
    effective covariance ranks by construction.
    """

    order: tuple[int, ...]
    mode: str
    Qc: np.ndarray
    X: tuple[np.ndarray, ...]
    Uc: np.ndarray | None = None
    U: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if self.mode not in ("relaxed", "reformulated"):
            raise ValueError(f"CovarianceSolution: unknown mode {self.mode!r}")
        if self.mode == "reformulated" and (self.Uc is None or self.U is None):
            raise ValueError("CovarianceSolution: reformulated mode needs eigenbases")
        object.__setattr__(self, "order", tuple(int(v) for v in self.order))
        object.__setattr__(self, "X", tuple(np.asarray(x, dtype=np.complex128) for x in self.X))

    def common_cov(self) -> np.ndarray:
        """Transmit-side common covariance (n_tx x n_tx, both modes)."""
        return self.Qc

    def private_block(self, i: int) -> np.ndarray:
        """Covariance block in the null-space coordinates of position ``i``."""
        if self.mode == "relaxed":
            return self.X[i]
        u = self.U[i]
        return u @ self.X[i] @ u.conj().T

    def total_power(self) -> float:
        """Radiated power: trace of the common plus all private covariances."""
        p = float(np.trace(self.common_cov()).real)
        for i in range(len(self.X)):
            p += float(np.trace(self.private_block(i)).real)
        return p


@dataclass(frozen=True)
class RateReport:
    """Achievable rates of one solution, indexed by user label.

    ``R_c`` is the common rate (the minimum of the per-user common rates
    ``R_kc``); ``R_wsr`` applies the configured weights with the common rate
    weighted by the sum of squared weights; ``R_sum = R_c + sum(R_k)``.
    """

    R_k: np.ndarray
    R_kc: np.ndarray
    R_c: float
    R_wsr: float
    R_sum: float


def effective_covariances(
    sol: CovarianceSolution, bases: NullBasisSet
) -> tuple[list[np.ndarray], np.ndarray]:
    """Lift a solution to transmit-side covariances, one per position.

    Returns ``(Q_list, Q_common)`` where ``Q_list[i] = B_i X_i B_i^H`` for
    the position-``i`` basis ``B_i`` (with the rank-capping core expansion in
    reformulated mode).  Traces are preserved: ``tr(Q_list[i]) == tr(X[i])``
    whenever the involved bases are semi-unitary.
    """
    if len(sol.X) != len(bases.bases):
        raise ValueError("effective_covariances: solution and bases disagree on user count")
    qs = []
    for i, basis in enumerate(bases.bases):
        block = sol.private_block(i)
        if block.shape[0] != basis.shape[1]:
            raise ValueError(
                f"effective_covariances: block {i} has size {block.shape[0]}, "
                f"basis expects {basis.shape[1]}"
            )
        qs.append(basis @ block @ basis.conj().T)
    qc = sol.common_cov()
    if qc.shape != (bases.n_tx, bases.n_tx):
        raise ValueError("effective_covariances: common covariance has the wrong shape")
    return qs, qc


def private_rate(i: int, channels_pos, qs, sigma2: float) -> float:
    """Rate of the private stream decoded at position ``i``.

    ``channels_pos`` and ``qs`` are position-ordered channel matrices and
    transmit covariances; interference comes from positions ``< i`` only.
    """
    if sigma2 <= 0.0:
        raise ValueError("private_rate: noise power must be positive")
    h = channels_pos[i]
    interf = _received(h, qs[:i], sigma2)
    total = interf + (h @ qs[i] @ h.conj().T) / sigma2
    r = logdet_eye_plus_psd(total) - logdet_eye_plus_psd(interf)
    return max(0.0, r)


def common_rate_at_user(i: int, channels_pos, qc, qs, sigma2: float) -> float:
    """Rate at which position ``i`` can decode the common stream.

    The common stream is decoded first, so every private stream of positions
    ``<= i`` (including position ``i``'s own) counts as interference.
    """
    if sigma2 <= 0.0:
        raise ValueError("common_rate_at_user: noise power must be positive")
    h = channels_pos[i]
    interf = _received(h, qs[: i + 1], sigma2)
    total = interf + (h @ qc @ h.conj().T) / sigma2
    r = logdet_eye_plus_psd(total) - logdet_eye_plus_psd(interf)
    return max(0.0, r)


def _received(h, q_list, sigma2):
    m = h.shape[0]
    acc = np.zeros((m, m), dtype=np.complex128)
    for q in q_list:
        acc += h @ q @ h.conj().T
    return acc / sigma2


def evaluate(
    sol: CovarianceSolution,
    channels: ChannelSet,
    bases: NullBasisSet,
    config: SystemConfig,
) -> RateReport:
    """Exact rates of a solution under a configuration.

    Rates are reported per user label (not per decode position).  The
    weighted sum rate weighs each private rate by the user's weight and the
    common rate by the sum of squared weights; the plain sum rate adds the
    common rate and all private rates.
    """
    if sol.order != bases.order:
        raise ValueError("evaluate: solution and bases were built for different orderings")
    k = channels.n_users
    qs, qc = effective_covariances(sol, bases)
    power = float(np.trace(qc).real + sum(np.trace(q).real for q in qs))
    if power > config.p_t * (1.0 + _POWER_SLACK) + _POWER_SLACK:
        raise ValueError(f"evaluate: solution radiates {power} mW, budget is {config.p_t} mW")
    h_pos = [channels.H[u] for u in sol.order]
    r_priv_pos = [private_rate(i, h_pos, qs, config.sigma2) for i in range(k)]
    r_com_pos = [common_rate_at_user(i, h_pos, qc, qs, config.sigma2) for i in range(k)]
    r_k = np.zeros(k)
    r_kc = np.zeros(k)
    for i, user in enumerate(sol.order):
        r_k[user] = r_priv_pos[i]
        r_kc[user] = r_com_pos[i]
    r_c = float(min(r_com_pos))
    eta = np.asarray(config.eta)
    r_wsr = float(np.sum(eta**2) * r_c + float(eta @ r_k))
    r_sum = float(r_c + r_k.sum())
    return RateReport(R_k=r_k, R_kc=r_kc, R_c=r_c, R_wsr=r_wsr, R_sum=r_sum)
