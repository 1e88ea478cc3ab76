"""porchain - blockchain-arbitrated proof-of-retrievability protocol lab (AuB and PPAuB)."""

from .errors import ChannelError, FormatError, LedgerRejected, ParameterError, PorchainError, ProtocolAbort
from .models import Scheme
from .scenarios import ScenarioConfig, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ChannelError",
    "FormatError",
    "LedgerRejected",
    "ParameterError",
    "PorchainError",
    "ProtocolAbort",
    "ScenarioConfig",
    "Scheme",
    "run_scenario",
]
