"""What a passive observer can infer about who spent what.

The observer sees each sender-hiding spend as a ring of output ids plus a key
image. Every spend consumes exactly one member of its ring and no output is
spent twice, so side knowledge ("this output was spent elsewhere", "this one
is still unspent") can shrink other rings' candidate sets, sometimes to one.

Storage metrics live here too: signature bytes per transaction, the exact
affine fit of size against ring size, and per-contract tumbler totals.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .ledger.model import TxKind
from .ledger.state import LedgerState
from .ring import signature_size


class InconsistentKnowledgeError(ValueError):
    """No assignment of spenders agrees with the view and its side knowledge."""


class Status(str, enum.Enum):
    SPENT = "spent"
    UNSPENT = "unspent"


@dataclass(frozen=True)
class ObservedTx:
    tx_id: str
    ring: tuple[str, ...]
    key_image: str


@dataclass(frozen=True)
class Knowledge:
    """Side information about one output.

    ``SPENT`` with a ``tx_id`` says that transaction spent it; ``SPENT``
    without one says it was spent outside the observed transactions.
    ``UNSPENT`` says no transaction has spent it.
    """

    utxo_id: str
    status: Status
    tx_id: str | None = None

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> Knowledge:
        return cls(d["utxo"], Status(d["status"]), d.get("tx"))


@dataclass
class ObserverView:
    transactions: list[ObservedTx] = field(default_factory=list)
    knowledge: set[Knowledge] = field(default_factory=set)

    @classmethod
    def from_ledger(cls, state: LedgerState, knowledge: Iterable[Knowledge] = ()) -> ObserverView:
        txs = []
        for block in state.blocks:
            tx = block.tx
            if tx.kind in (TxKind.CN_TRANSFER, TxKind.TUMBLER_DEPOSIT) and tx.signature is not None:
                txs.append(ObservedTx(tx.tx_id(), tuple(tx.ring_utxo_ids), tx.signature.key_image.hex()))
        return cls(txs, set(knowledge))


@dataclass
class AnonymityReport:
    candidates: dict[str, frozenset[str]]
    resolved: dict[str, str]
    effective_set_sizes: list[int]

    def to_json(self) -> dict[str, Any]:
        return {
            "transactions": [
                {"tx": t, "candidates": sorted(c), "size": len(c), "resolved": self.resolved.get(t)}
                for t, c in self.candidates.items()
            ],
            "effective_set_sizes": self.effective_set_sizes,
        }


def _initial_candidates(view: ObserverView) -> dict[str, set[str]]:
    ids = [t.tx_id for t in view.transactions]
    if len(set(ids)) != len(ids):
        raise InconsistentKnowledgeError("transaction listed twice")
    cands = {t.tx_id: set(t.ring) for t in view.transactions}
    status: dict[str, Knowledge] = {}
    for k in view.knowledge:
        prior = status.setdefault(k.utxo_id, k)
        if prior != k:
            raise InconsistentKnowledgeError(f"conflicting side knowledge about {k.utxo_id}")
        if k.tx_id is not None and k.tx_id not in cands:
            raise InconsistentKnowledgeError(f"knowledge names unknown transaction {k.tx_id}")
    for k in status.values():
        for t, c in cands.items():
            if t != k.tx_id:
                c.discard(k.utxo_id)
            elif k.utxo_id not in c:
                raise InconsistentKnowledgeError(f"{k.utxo_id} is not in the ring of {t}")
            else:
                c.intersection_update({k.utxo_id})
    return cands


def _eliminate(order: Sequence[str], cands: dict[str, set[str]]) -> None:
    """Singleton propagation to a fixpoint, one pass per round in log order."""
    changed = True
    while changed:
        changed = False
        for t in order:
            if len(cands[t]) == 0:
                raise InconsistentKnowledgeError(f"no candidate spender left for {t}")
            if len(cands[t]) != 1:
                continue
            (u,) = cands[t]
            for other in order:
                if other != t and u in cands[other]:
                    cands[other].discard(u)
                    changed = True


def _has_matching(txs: Sequence[str], cands: Mapping[str, set[str]], banned: str | None = None) -> bool:
    """Can every tx in ``txs`` get a distinct candidate (avoiding ``banned``)?"""
    match: dict[str, str] = {}

    def augment(t: str, seen: set[str]) -> bool:
        for u in sorted(cands[t]):
            if u == banned or u in seen:
                continue
            seen.add(u)
            if u not in match or augment(match[u], seen):
                match[u] = t
                return True
        return False

    return all(augment(t, set()) for t in txs)


def _prune_infeasible(order: Sequence[str], cands: dict[str, set[str]]) -> bool:
    """Drop (tx, output) pairs that fit no complete assignment.

    Singleton propagation alone misses some forced deductions: with rings
    {A,B}, {A,B}, {A,B,C} the third must have spent C, yet no ring is a
    singleton. A pair survives iff the remaining transactions can still be
    matched to distinct outputs once it is fixed.
    """
    changed = False
    for t in order:
        rest = [o for o in order if o != t]
        for u in sorted(cands[t]):
            if not _has_matching(rest, cands, banned=u):
                cands[t].discard(u)
                changed = True
    return changed


def chain_reaction_deanon(view: ObserverView) -> AnonymityReport:
    order = [t.tx_id for t in view.transactions]
    cands = _initial_candidates(view)
    if not _has_matching(order, cands):
        raise InconsistentKnowledgeError("no consistent assignment of spenders exists")
    while True:
        _eliminate(order, cands)
        if not _prune_infeasible(order, cands):
            break
    frozen = {t: frozenset(cands[t]) for t in order}
    resolved = {t: next(iter(c)) for t, c in frozen.items() if len(c) == 1}
    return AnonymityReport(frozen, resolved, [len(frozen[t]) for t in order])


def anonymity_set_size(report: AnonymityReport, tx_id: str) -> int:
    return len(report.candidates[tx_id])


# -- storage ---------------------------------------------------------------


@dataclass(frozen=True)
class LinearFit:
    intercept: Fraction
    slope: Fraction
    residual: Fraction

    @property
    def exact(self) -> bool:
        return self.residual == 0


def fit_line(points: Sequence[tuple[int, int]]) -> LinearFit:
    """Ordinary least squares in exact rational arithmetic."""
    if len({x for x, _ in points}) < 2:
        raise ValueError("need at least two distinct x values")
    n = len(points)
    sx = sum(Fraction(x) for x, _ in points)
    sy = sum(Fraction(y) for _, y in points)
    sxx = sum(Fraction(x * x) for x, _ in points)
    sxy = sum(Fraction(x * y) for x, y in points)
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    intercept = (sy - slope * sx) / n
    residual = sum((y - (intercept + slope * x)) ** 2 for x, y in points)
    return LinearFit(intercept, slope, residual)


@dataclass
class StorageMetrics:
    per_tx_bytes: list[tuple[str, int, int]]  # (tx id, ring size, bytes)
    tumbler_total_bytes: dict[str, int]
    fitted: LinearFit | None

    def to_json(self) -> dict[str, Any]:
        fit = None
        if self.fitted is not None:
            fit = {
                "a": str(self.fitted.intercept),
                "b": str(self.fitted.slope),
                "residual": str(self.fitted.residual),
            }
        return {
            "per_tx_bytes": [{"tx": t, "ring_size": n, "bytes": b} for t, n, b in self.per_tx_bytes],
            "tumbler_total_bytes": self.tumbler_total_bytes,
            "fitted": fit,
        }


def storage_metrics(state: LedgerState) -> StorageMetrics:
    per_tx = []
    tumbler: dict[str, int] = {}
    for block in state.blocks:
        tx = block.tx
        if tx.signature is None:
            continue
        size = signature_size(tx.signature)
        per_tx.append((tx.tx_id(), len(tx.signature.responses), size))
        if tx.kind is TxKind.TUMBLER_WITHDRAW and tx.contract_id is not None:
            tumbler[tx.contract_id] = tumbler.get(tx.contract_id, 0) + size
    points = sorted({(n, b) for _, n, b in per_tx})
    fit = fit_line(points) if len({n for n, _ in points}) >= 2 else None
    return StorageMetrics(per_tx, tumbler, fit)
