"""Domain rejections. Each carries a stable machine-readable ``code``."""

from __future__ import annotations


class LedgerError(Exception):
    code = "E_LEDGER"
    message = "ledger rejection"

    def __init__(self, detail: str = "") -> None:
        self.detail = detail
        super().__init__(f"{self.message}: {detail}" if detail else self.message)


class InvalidTransaction(LedgerError):
    code = "E_INVALID_TX"
    message = "invalid transaction"


class InvalidSignature(LedgerError):
    code = "E_INVALID_SIGNATURE"
    message = "invalid signature"


class DoubleSpend(LedgerError):
    code = "E_DOUBLE_SPEND"
    message = "double spend"


class UnknownRingMember(LedgerError):
    code = "E_UNKNOWN_RING_MEMBER"
    message = "unknown ring member"


class InsufficientDecoys(LedgerError):
    code = "E_INSUFFICIENT_DECOYS"
    message = "insufficient decoys"


class DenominationMismatch(LedgerError):
    code = "E_DENOMINATION"
    message = "denomination mismatch"


class UnknownContract(LedgerError):
    code = "E_UNKNOWN_CONTRACT"
    message = "unknown contract"


class DuplicateContract(LedgerError):
    code = "E_DUPLICATE_CONTRACT"
    message = "duplicate contract"


class DuplicateDepositKey(LedgerError):
    code = "E_DUPLICATE_DEPOSIT_KEY"
    message = "duplicate deposit key"


class ContractSealed(LedgerError):
    code = "E_CONTRACT_SEALED"
    message = "contract sealed"


class ContractClosed(LedgerError):
    code = "E_CONTRACT_CLOSED"
    message = "contract closed"


class NotADepositor(LedgerError):
    code = "E_NOT_A_DEPOSITOR"
    message = "not a depositor"


class DoubleWithdraw(LedgerError):
    code = "E_DOUBLE_WITHDRAW"
    message = "double withdraw"


class DepletedRefused(LedgerError):
    code = "E_DEPLETED_REFUSED"
    message = "depleted tumbler refused withdrawal"


class ProfileMismatch(LedgerError):
    code = "E_PROFILE_MISMATCH"
    message = "profile mismatch"


class CorruptLog(LedgerError):
    code = "E_CORRUPT_LOG"
    message = "corrupt block log"
