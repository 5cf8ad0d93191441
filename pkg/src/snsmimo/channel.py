"""System configuration and MIMO channel generation.

Channels follow the distance-based path-loss model ``H_k = G_k / sqrt(L_k)``
with ``[G_k]_{ij} ~ CN(0, 1)`` i.i.d. and ``L_k = d_k**2`` for a user at
``d_k`` meters.  All powers are linear milliwatts inside the library; dBm
conversions happen at the CLI boundary only.

Randomness is counter-based (Philox) with one stream per ``(trial, user)``
pair, so Monte-Carlo trials are reproducible bit-for-bit and independent of
any parallel scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg

__all__ = ["SystemConfig", "ChannelSet", "generate_channel", "ensure_full_row_rank"]

# Key-schedule tag separating the channel stream from any other consumer of
# the same master seed.
_CHANNEL_STREAM_TAG = 0x534E53_4348414E  # "SNS" "CHAN"

_WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SystemConfig:
    """Static description of one downlink deployment plus solver knobs.

    Parameters
    ----------
    n_tx : int
        Transmit antennas at the base station.
    m_rx : tuple of int
        Receive antennas per user; the system must be under- or critically
        loaded, ``n_tx >= sum(m_rx)``.
    sigma2 : float
        Noise power per receive antenna, linear milliwatts.
    p_t : float
        Transmit power budget, linear milliwatts.
    eta : tuple of float
        Per-user rate weights in [0, 1] summing to one.
    dist : tuple of float
        User distances from the base station in meters (path loss d**2).
    epsilon : float
        Outer (SCA) convergence tolerance on successive surrogate optima.
    inner_gap : float
        Conditional-gradient optimality-gap target of the inner solver, bits.
    inner_cap : int
        Iteration cap of one inner solve.
    outer_cap : int
        Iteration cap of the outer SCA loop.
    seed : int
        Master seed keying the counter-based channel generator.
    """

    n_tx: int
    m_rx: tuple[int, ...]
    sigma2: float
    p_t: float
    eta: tuple[float, ...] = ()
    dist: tuple[float, ...] = ()
    epsilon: float = 1e-5
    inner_gap: float = 1e-4
    inner_cap: int = 2000
    outer_cap: int = 200
    seed: int = 0

    def __post_init__(self):
        m = tuple(int(v) for v in self.m_rx)
        object.__setattr__(self, "m_rx", m)
        k = len(m)
        if k == 0:
            raise ValueError("SystemConfig: need at least one user")
        if any(v < 1 for v in m):
            raise ValueError("SystemConfig: every user needs at least one antenna")
        if self.n_tx < sum(m):
            raise ValueError(
                f"SystemConfig: overloaded system, n_tx={self.n_tx} < sum(m_rx)={sum(m)}"
            )
        eta = tuple(float(v) for v in (self.eta if self.eta else (1.0 / k,) * k))
        object.__setattr__(self, "eta", eta)
        if len(eta) != k:
            raise ValueError("SystemConfig: eta length must match the user count")
        if any(v < 0.0 or v > 1.0 for v in eta):
            raise ValueError("SystemConfig: weights must lie in [0, 1]")
        if abs(sum(eta) - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError("SystemConfig: weights must sum to one")
        dist = tuple(float(v) for v in (self.dist if self.dist else (1.0,) * k))
        object.__setattr__(self, "dist", dist)
        if len(dist) != k:
            raise ValueError("SystemConfig: dist length must match the user count")
        if any(v <= 0.0 for v in dist):
            raise ValueError("SystemConfig: distances must be positive")
        if not self.sigma2 > 0.0:
            raise ValueError("SystemConfig: noise power must be positive")
        if self.p_t < 0.0:
            raise ValueError("SystemConfig: power budget must be nonnegative")
        if self.seed < 0:
            raise ValueError("SystemConfig: seed must be nonnegative")

    @property
    def n_users(self) -> int:
        return len(self.m_rx)

    @property
    def common_dim(self) -> int:
        """Stream count of the common message: the smallest antenna count."""
        return min(self.m_rx)

    @property
    def path_loss(self) -> tuple[float, ...]:
        return tuple(d * d for d in self.dist)


@dataclass(frozen=True)
class ChannelSet:
    """One realization of all user channels.

    ``H[k]`` has shape ``(m_rx[k], n_tx)`` and full row rank; ``L[k]`` is the
    path-loss scalar that was divided out of the unit-variance draw.
    """

    H: tuple[np.ndarray, ...]
    L: tuple[float, ...] = field(default=())

    def __post_init__(self):
        h = tuple(np.asarray(m, dtype=np.complex128) for m in self.H)
        object.__setattr__(self, "H", h)
        if not h:
            raise ValueError("ChannelSet: need at least one channel")
        n = h[0].shape[1]
        if any(m.ndim != 2 or m.shape[1] != n for m in h):
            raise ValueError("ChannelSet: all channels must share the transmit dimension")
        if not self.L:
            object.__setattr__(self, "L", (1.0,) * len(h))
        elif len(self.L) != len(h):
            raise ValueError("ChannelSet: path-loss list must match the user count")

    @property
    def n_users(self) -> int:
        return len(self.H)

    @property
    def n_tx(self) -> int:
        return self.H[0].shape[1]

    @property
    def m_rx(self) -> tuple[int, ...]:
        return tuple(m.shape[0] for m in self.H)


def _user_rng(seed: int, trial: int, user: int) -> np.random.Generator:
    # Philox streams keyed by the master seed; the counter block carries the
    # (trial, user) split so parallel trial order cannot change any draw.
    bits = np.random.Philox(
        key=np.array([seed, _CHANNEL_STREAM_TAG], dtype=np.uint64),
        counter=np.array([0, 0, trial, user], dtype=np.uint64),
    )
    return np.random.Generator(bits)


def generate_channel(config: SystemConfig, trial: int) -> ChannelSet:
    """Draw one channel realization for ``trial``.

    Entries of ``sqrt(L_k) * H_k`` are i.i.d. circular complex Gaussian with
    unit variance (real and imaginary parts N(0, 1/2) each).  The draw is a
    pure function of ``(config.seed, trial, user)``.
    """
    if trial < 0:
        raise ValueError("generate_channel: trial index must be nonnegative")
    chans = []
    for k, (m, loss) in enumerate(zip(config.m_rx, config.path_loss)):
        rng = _user_rng(config.seed, trial, k)
        raw = rng.standard_normal((2, m, config.n_tx))
        g = (raw[0] + 1j * raw[1]) / np.sqrt(2.0)
        h = g / np.sqrt(loss)
        _, rank = ensure_full_row_rank(h)
        if rank != m:
            # Probability-zero event for the Gaussian draw; by contract every
            # generated channel is full row rank.
            raise ArithmeticError(
                f"generate_channel: rank-deficient draw for user {k} (rank {rank} < {m})"
            )
        chans.append(h)
    return ChannelSet(H=tuple(chans), L=config.path_loss)


def ensure_full_row_rank(h) -> tuple[np.ndarray, int]:
    """Return an equivalent full-row-rank channel and its row count.

    A full-row-rank input is passed through unchanged.  A rank-deficient
    input is replaced by ``diag(s_r) @ V_r^H`` built from its top singular
    directions: a receiver-side rotation that preserves the row space (and
    all achievable rates) while dropping the redundant effective antennas.
    """
    m = linalg.as_cmatrix(h, "channel")
    _, s, v = linalg.svd(m)
    rank = linalg.numerical_rank(s)
    if rank == 0:
        raise ValueError("ensure_full_row_rank: degenerate channel (all zero)")
    if rank == m.shape[0]:
        return m, rank
    h_eff = s[:rank, np.newaxis] * v[:, :rank].conj().T
    return h_eff, rank
