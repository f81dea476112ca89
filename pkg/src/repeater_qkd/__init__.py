"""Secret key rates of quantum repeaters used for quantum key distribution."""

from .core_states import (
    BellDiagonalState,
    DomainError,
    QberTriple,
    binary_entropy,
    depolarized_state,
    qber_from_bell_diagonal,
    secret_fraction,
    secret_fraction_bb84,
    secret_fraction_six_state,
)
from .ensemble import EnsembleSourceParams, MemoryModel, ensemble_chain, secret_key_rate_ensemble
from .hybrid import DissipativeGate, HybridLinkParams, HybridParams, secret_key_rate_hybrid
from .original import DepolarizingGate, DetectorModel, OriginalParams, secret_key_rate_original
from .rate_engine import ChannelModel, RateBreakdown, RepeaterGeometry, z_average_attempts

__all__ = [
    "BellDiagonalState",
    "ChannelModel",
    "DepolarizingGate",
    "DetectorModel",
    "DissipativeGate",
    "DomainError",
    "EnsembleSourceParams",
    "HybridLinkParams",
    "HybridParams",
    "MemoryModel",
    "OriginalParams",
    "QberTriple",
    "RateBreakdown",
    "RepeaterGeometry",
    "binary_entropy",
    "depolarized_state",
    "ensemble_chain",
    "qber_from_bell_diagonal",
    "secret_fraction",
    "secret_fraction_bb84",
    "secret_fraction_six_state",
    "secret_key_rate_ensemble",
    "secret_key_rate_hybrid",
    "secret_key_rate_original",
    "z_average_attempts",
]
