"""Successive null-space precoding with rate splitting for downlink MU-MIMO.

Library layout:

- :mod:`snsmimo.linalg` -- complex-matrix primitives (eig/SVD/log-det/factors)
- :mod:`snsmimo.channel` -- system configuration and channel generation
- :mod:`snsmimo.nullspace` -- successive null-space bases and precoder factors
- :mod:`snsmimo.rates` -- exact achievable-rate evaluation
- :mod:`snsmimo.optimizer` -- SCA weighted-sum-rate optimizer and reformulation
- :mod:`snsmimo.baselines` -- block diagonalization and DPC sum capacity
- :mod:`snsmimo.harness` -- Monte-Carlo sweeps, convergence traces, CSV output
- :mod:`snsmimo.cli` -- command line front-end (``snsmimo sweep|converge``)
"""

__version__ = "0.1.0"

from .channel import ChannelSet, SystemConfig, ensure_full_row_rank, generate_channel
from .nullspace import NullBasisSet, sns_precoder, successive_null_bases
from .rates import CovarianceSolution, RateReport, evaluate
from .optimizer import SCATrace, optimize_wsr, sca_relaxed, sca_reformulated
from .baselines import BaselineResult, bd_sum_rate, dpc_sum_capacity, water_filling

__all__ = [
    "__version__",
    "SystemConfig",
    "ChannelSet",
    "generate_channel",
    "ensure_full_row_rank",
    "NullBasisSet",
    "successive_null_bases",
    "sns_precoder",
    "CovarianceSolution",
    "RateReport",
    "evaluate",
    "SCATrace",
    "sca_relaxed",
    "sca_reformulated",
    "optimize_wsr",
    "BaselineResult",
    "water_filling",
    "bd_sum_rate",
    "dpc_sum_capacity",
]
