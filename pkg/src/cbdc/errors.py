"""Exception hierarchy shared by every module."""


class CbdcError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDenomination(CbdcError):
    pass


class WeakParameter(CbdcError):
    pass


class KeyMismatch(CbdcError):
    pass


class InvalidCertificate(CbdcError):
    pass


class DecodeError(CbdcError):
    pass


class HeightOutOfRange(CbdcError):
    pass


# consensus
class NotLeader(CbdcError):
    pass


class ValidationFailed(CbdcError):
    def __init__(self, reason, detail=""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


# netsim
class UnknownNode(CbdcError):
    pass


# msb / centralbank / wallet
class UnknownAccount(CbdcError):
    pass


class InsufficientFunds(CbdcError):
    pass


class LimitExceeded(CbdcError):
    def __init__(self, cap, detail=""):
        super().__init__(f"{cap} exceeded" + (f": {detail}" if detail else ""))
        self.cap = cap


class InsufficientReserve(CbdcError):
    pass


class InvalidToken(CbdcError):
    pass


class DoubleSpend(CbdcError):
    pass


class ValueMismatch(CbdcError):
    pass


class IdentificationRequired(CbdcError):
    pass


class AlreadyClaimed(CbdcError):
    pass


class VintageExists(CbdcError):
    pass


class UnknownKeyId(CbdcError):
    pass


class NotCommitted(CbdcError):
    pass


class AlreadyRedeemed(CbdcError):
    pass


class UnrepresentableAmount(CbdcError):
    pass


class BadSignature(CbdcError):
    pass


class InsufficientBalance(CbdcError):
    pass


# regulator
class GapDetected(CbdcError):
    pass


class HashMismatch(CbdcError):
    pass


# harness
class ConfigError(CbdcError):
    """Configuration or scenario problem; ``where`` names the line or field."""

    def __init__(self, message, where=None):
        super().__init__(f"{where}: {message}" if where else message)
        self.message = message
        self.where = where


class AssertionFailed(CbdcError):
    pass
