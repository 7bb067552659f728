"""Deterministic single-writer ledger simulator."""

from .errors import LedgerError
from .model import OutputSpec, Policy, PolicyHint, Transaction, TxKind, Utxo
from .state import LedgerState, Receipt, Status, TumblerContract, replay

__all__ = [
    "LedgerError",
    "LedgerState",
    "OutputSpec",
    "Policy",
    "PolicyHint",
    "Receipt",
    "Status",
    "Transaction",
    "TumblerContract",
    "TxKind",
    "Utxo",
    "replay",
]
