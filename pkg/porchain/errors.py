"""
Errors - Exception hierarchy shared by the protocol modules
"""

from typing import Optional


class PorchainError(Exception):
    """Base class for every error raised by porchain"""


class ParameterError(PorchainError, ValueError):
    """Invalid protocol parameters or arguments"""


class FormatError(PorchainError, ValueError):
    """Bytes that do not decode under one of the canonical formats"""


class ChannelError(PorchainError):
    """Channel endpoint driven out of order (closed channel, response pending)"""


class LedgerRejected(PorchainError):
    """A transaction was rejected by the contract; no state was changed"""

    def __init__(self, reason: str, detail: Optional[str] = None):
        self.reason = reason
        self.detail = detail
        message = reason if detail is None else f"{reason}: {detail}"
        super().__init__(message)


class ProtocolAbort(PorchainError):
    """An actor terminated the protocol"""

    def __init__(self, phase: str, reason: str):
        self.phase = phase
        self.reason = reason
        super().__init__(f"protocol aborted during {phase}: {reason}")
