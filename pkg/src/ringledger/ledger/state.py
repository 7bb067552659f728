"""The ledger state machine.

One writer applies transactions one at a time; each accepted transaction
becomes one block. A transaction is either applied completely or rejected
with a :class:`~ringledger.ledger.errors.LedgerError` and no state change.

Spends are sender-hiding, so the ledger never learns which output a ring
spent. ``utxos`` therefore holds every output ever created (the decoy pool),
and spent value is tracked as a running total: each accepted key image
removes exactly one ring denomination from circulation.

Signature checks always run before key-image lookups. A transaction with a bad
signature never touches a registry, not even to read it; ``link_calls``
counts registry lookups so tests can assert that.
"""

from __future__ import annotations

import copy
import enum
import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

from ..group import Group, GroupElement, Profile, get_group
from ..ring import KeyImage, Link, Ring, RingSignature, TagMode, link, ring_verify
from . import errors as E
from .model import (
    Block,
    OutputSpec,
    Policy,
    PolicyHint,
    Transaction,
    TxKind,
    Utxo,
    canonical_json,
    genesis_hash,
    sha256_hex,
    utxo_id,
)


class Status(str, enum.Enum):
    APPLIED = "applied"
    QUEUED = "queued"


@dataclass(frozen=True)
class Receipt:
    height: int
    tx_id: str
    kind: TxKind
    status: Status = Status.APPLIED
    created: tuple[str, ...] = ()
    key_image: str | None = None
    ticket: int | None = None
    released: bool = False


@dataclass
class PendingWithdrawal:
    destination: OutputSpec
    claimed: bool = False


@dataclass
class TumblerContract:
    contract_id: str
    denomination: int
    ring_size_n: int
    policy: Policy
    noncanonical: bool = False
    deposits: list[GroupElement] = field(default_factory=list)
    refund_outputs: list[OutputSpec] = field(default_factory=list)
    used_images: set[KeyImage] = field(default_factory=set)
    queued_images: set[KeyImage] = field(default_factory=set)
    pending: list[PendingWithdrawal] = field(default_factory=list)
    withdrawn: int = 0
    sealed: bool = False
    closed: bool = False

    @property
    def depleted(self) -> bool:
        return len(self.deposits) < self.ring_size_n

    @property
    def full(self) -> bool:
        return len(self.deposits) >= self.ring_size_n

    @property
    def custody(self) -> int:
        if self.closed:
            return 0
        return self.denomination * (len(self.deposits) - self.withdrawn)

    def withdrawal_ring(self, order: Sequence[int] | None = None) -> Ring:
        keys = self.deposits
        if order is not None:
            if sorted(order) != list(range(len(keys))):
                raise E.InvalidTransaction("ring_order is not a permutation of the deposit list")
            keys = [keys[i] for i in order]
        return Ring(keys, canonical=not self.noncanonical)

    def to_json(self) -> dict[str, Any]:
        return {
            "contract_id": self.contract_id,
            "denomination": self.denomination,
            "ring_size": self.ring_size_n,
            "policy": self.policy.value,
            "noncanonical": self.noncanonical,
            "deposits": [d.hex() for d in self.deposits],
            "refunds": [o.to_json() for o in self.refund_outputs],
            "used_images": sorted(i.hex() for i in self.used_images),
            "queued_images": sorted(i.hex() for i in self.queued_images),
            "pending": [
                {"destination": p.destination.to_json(), "claimed": p.claimed} for p in self.pending
            ],
            "withdrawn": self.withdrawn,
            "sealed": self.sealed,
            "closed": self.closed,
        }


class LedgerState:
    def __init__(self, profile: Profile | str) -> None:
        self.profile = Profile(profile)
        self.group: Group = get_group(self.profile)
        self.blocks: list[Block] = []
        self.utxos: dict[str, Utxo] = {}
        self.spent_images: set[KeyImage] = set()
        self.contracts: dict[str, TumblerContract] = {}
        self.minted = 0
        self.spent_value = 0
        # instrumentation, not part of the state hash
        self.link_calls = 0

    # -- queries ------------------------------------------------------------

    @property
    def height(self) -> int:
        return len(self.blocks)

    @property
    def head_hash(self) -> str:
        return self.blocks[-1].hash if self.blocks else genesis_hash(self.profile.value)

    def circulating(self) -> int:
        return sum(u.denomination for u in self.utxos.values()) - self.spent_value

    def custodial(self) -> int:
        return sum(c.custody for c in self.contracts.values())

    def conserved(self) -> bool:
        return self.minted == self.circulating() + self.custodial()

    def registry_sizes(self) -> tuple[int, int]:
        """(global per-key images, per-contract images incl. queued)."""
        per_contract = sum(len(c.used_images) + len(c.queued_images) for c in self.contracts.values())
        return len(self.spent_images), per_contract

    def outputs_of_denomination(self, denomination: int) -> list[Utxo]:
        return sorted(
            (u for u in self.utxos.values() if u.denomination == denomination), key=lambda u: u.id
        )

    def contract(self, contract_id: str) -> TumblerContract:
        try:
            return self.contracts[contract_id]
        except KeyError:
            raise E.UnknownContract(contract_id) from None

    def ring_for(self, ids: Sequence[str]) -> tuple[Ring, int]:
        """The canonical ring over the output keys of ``ids`` and its denomination."""
        if not ids:
            raise E.InvalidTransaction("empty ring")
        if len(set(ids)) != len(ids):
            raise E.InvalidTransaction("ring lists an output twice")
        members = []
        for i in ids:
            if i not in self.utxos:
                raise E.UnknownRingMember(i)
            members.append(self.utxos[i])
        denominations = {u.denomination for u in members}
        if len(denominations) != 1:
            raise E.DenominationMismatch("ring members have different denominations")
        try:
            ring = Ring([u.output_public for u in members])
        except ValueError as exc:
            raise E.InvalidTransaction(str(exc)) from exc
        return ring, denominations.pop()

    def state_hash(self) -> str:
        doc = {
            "profile": self.profile.value,
            "height": self.height,
            "head": self.head_hash,
            "minted": self.minted,
            "spent_value": self.spent_value,
            "utxos": [self.utxos[k].to_json() for k in sorted(self.utxos)],
            "spent_images": sorted(i.hex() for i in self.spent_images),
            "contracts": [self.contracts[k].to_json() for k in sorted(self.contracts)],
        }
        return sha256_hex(b"ringledger-state", canonical_json(doc))

    def snapshot(self) -> LedgerState:
        """A deep copy that can be read (or mutated) without affecting this state."""
        return copy.deepcopy(self)

    # -- validation helpers ---------------------------------------------------

    def _check_outputs(self, outputs: Sequence[OutputSpec], height: int) -> list[Utxo]:
        created = []
        seen: set[str] = set()
        for spec in outputs:
            if spec.denomination <= 0:
                raise E.InvalidTransaction("output denomination must be positive")
            for key in (spec.output_public, spec.nonce_public):
                if key.group is not self.group or key.is_identity or not self.group.is_member(key):
                    raise E.InvalidTransaction("output keys must be non-identity group elements")
            u = Utxo.create(spec, height)
            if u.id in self.utxos or u.id in seen:
                raise E.InvalidTransaction("duplicate output")
            seen.add(u.id)
            created.append(u)
        return created

    def _link(self, image: KeyImage, registry: set[KeyImage]) -> Link:
        self.link_calls += 1
        return link(image, registry)

    def _verify_spend(self, tx: Transaction, mode: TagMode, ring: Ring) -> RingSignature:
        sig = tx.signature
        if sig is None:
            raise E.InvalidSignature("missing signature")
        if sig.key_image.image.group is not self.group:
            raise E.InvalidSignature("key image from another group")
        if not ring_verify(tx.digest(), ring, sig, mode):
            raise E.InvalidSignature("ring signature does not verify")
        return sig

    # -- apply --------------------------------------------------------------

    def apply(self, tx: Transaction) -> Receipt:
        handler = {
            TxKind.MINT: self._apply_mint,
            TxKind.CN_TRANSFER: self._apply_cn_transfer,
            TxKind.TUMBLER_NEW: self._apply_tumbler_new,
            TxKind.TUMBLER_DEPOSIT: self._apply_deposit,
            TxKind.TUMBLER_WITHDRAW: self._apply_withdraw,
            TxKind.TUMBLER_REFUND: self._apply_refund,
        }[tx.kind]
        return handler(tx)

    def _append(self, tx: Transaction) -> int:
        height = self.height
        prev = self.head_hash
        self.blocks.append(Block(height, prev, tx, Block.compute_hash(height, prev, tx)))
        return height

    def _apply_mint(self, tx: Transaction) -> Receipt:
        if not tx.outputs:
            raise E.InvalidTransaction("mint without outputs")
        created = self._check_outputs(tx.outputs, self.height)
        for u in created:
            self.utxos[u.id] = u
        self.minted += sum(u.denomination for u in created)
        height = self._append(tx)
        return Receipt(height, tx.tx_id(), tx.kind, created=tuple(u.id for u in created))

    def _apply_cn_transfer(self, tx: Transaction) -> Receipt:
        ring, denomination = self.ring_for(tx.ring_utxo_ids)
        if not tx.outputs:
            raise E.InvalidTransaction("transfer without outputs")
        if sum(o.denomination for o in tx.outputs) != denomination:
            raise E.InvalidTransaction("outputs do not sum to the ring denomination")
        created = self._check_outputs(tx.outputs, self.height)
        sig = self._verify_spend(tx, TagMode.PER_KEY, ring)
        if self._link(sig.key_image, self.spent_images) is Link.DUPLICATE:
            raise E.DoubleSpend(f"key image {sig.key_image.hex()} already spent")
        self.spent_images.add(sig.key_image)
        self.spent_value += denomination
        for u in created:
            self.utxos[u.id] = u
        height = self._append(tx)
        return Receipt(
            height, tx.tx_id(), tx.kind, created=tuple(u.id for u in created), key_image=sig.key_image.hex()
        )

    def _apply_tumbler_new(self, tx: Transaction) -> Receipt:
        if not tx.contract_id:
            raise E.InvalidTransaction("contract id required")
        if tx.contract_id in self.contracts:
            raise E.DuplicateContract(tx.contract_id)
        if not tx.denomination or tx.denomination <= 0:
            raise E.InvalidTransaction("denomination must be positive")
        if not tx.ring_size or tx.ring_size < 1:
            raise E.InvalidTransaction("ring size must be at least 1")
        if tx.policy is None:
            raise E.InvalidTransaction("policy required")
        self.contracts[tx.contract_id] = TumblerContract(
            tx.contract_id, tx.denomination, tx.ring_size, tx.policy, noncanonical=tx.noncanonical
        )
        height = self._append(tx)
        return Receipt(height, tx.tx_id(), tx.kind)

    def _apply_deposit(self, tx: Transaction) -> Receipt:
        contract = self.contract(tx.contract_id or "")
        if contract.closed:
            raise E.ContractClosed(contract.contract_id)
        if contract.sealed or contract.full:
            raise E.ContractSealed(f"{contract.contract_id} accepts no further deposits")
        ring, denomination = self.ring_for(tx.ring_utxo_ids)
        if denomination != contract.denomination:
            raise E.DenominationMismatch(
                f"contract takes {contract.denomination}, input is {denomination}"
            )
        key = tx.deposit_public
        if key is None or key.group is not self.group or key.is_identity or not self.group.is_member(key):
            raise E.InvalidTransaction("deposit key must be a non-identity group element")
        if key in contract.deposits:
            raise E.DuplicateDepositKey(key.hex())
        if len(tx.outputs) != 1 or tx.outputs[0].denomination != contract.denomination:
            raise E.InvalidTransaction("deposit needs exactly one refund destination of the contract denomination")
        self._check_outputs(tx.outputs, self.height)
        sig = self._verify_spend(tx, TagMode.PER_KEY, ring)
        if self._link(sig.key_image, self.spent_images) is Link.DUPLICATE:
            raise E.DoubleSpend(f"key image {sig.key_image.hex()} already spent")
        self.spent_images.add(sig.key_image)
        self.spent_value += denomination
        contract.deposits.append(key)
        contract.refund_outputs.append(tx.outputs[0])
        height = self._append(tx)
        released = contract.full and any(not p.claimed for p in contract.pending)
        return Receipt(height, tx.tx_id(), tx.kind, key_image=sig.key_image.hex(), released=released)

    def _withdraw_action(self, contract: TumblerContract, tx: Transaction) -> str:
        """'execute', 'queue', or raise DepletedRefused."""
        if not contract.depleted:
            return "execute"
        if contract.policy is Policy.PER_TX:
            if tx.policy_hint is None:
                raise E.InvalidTransaction("per-tx contract needs a policy_hint")
            choice = {
                PolicyHint.PROCESS_ANYWAY: Policy.PROCESS_ANYWAY,
                PolicyHint.FAIL: Policy.REFUSE,
                PolicyHint.DELAY: Policy.DELAY,
            }[tx.policy_hint]
        else:
            choice = contract.policy
        if choice is Policy.PROCESS_ANYWAY:
            return "execute"
        if choice is Policy.DELAY and not contract.sealed:
            return "queue"
        raise E.DepletedRefused(
            f"{contract.contract_id} holds {len(contract.deposits)} of {contract.ring_size_n} deposits"
            + ("; refund available" if not contract.sealed else "")
        )

    def _apply_withdraw(self, tx: Transaction) -> Receipt:
        contract = self.contract(tx.contract_id or "")
        if contract.closed:
            raise E.ContractClosed(contract.contract_id)
        if not contract.deposits:
            raise E.InvalidTransaction("contract has no deposits")
        if len(tx.outputs) != 1 or tx.outputs[0].denomination != contract.denomination:
            raise E.InvalidTransaction("withdrawal needs one destination of the contract denomination")
        created = self._check_outputs(tx.outputs, self.height)
        ticket = None
        if tx.ticket is not None:
            # a sealed ring can no longer grow, so waiting longer gains nothing
            if contract.depleted and not contract.sealed:
                raise E.InvalidTransaction("queued withdrawals are released only at the threshold")
            if not 0 <= tx.ticket < len(contract.pending) or contract.pending[tx.ticket].claimed:
                raise E.InvalidTransaction(f"no open ticket {tx.ticket}")
            if contract.pending[tx.ticket].destination != tx.outputs[0]:
                raise E.InvalidTransaction("ticket destination mismatch")
            ticket = tx.ticket
        ring = contract.withdrawal_ring(tx.ring_order)
        sig = self._verify_spend(tx, TagMode.PER_RING, ring)
        if self._link(sig.key_image, contract.used_images) is Link.DUPLICATE:
            raise E.DoubleWithdraw(f"key image {sig.key_image.hex()} already used in {contract.contract_id}")
        # a ticket was already admitted by the policy when it was queued
        action = "execute" if ticket is not None else self._withdraw_action(contract, tx)
        if action == "queue":
            if self._link(sig.key_image, contract.queued_images) is Link.DUPLICATE:
                raise E.DoubleWithdraw(f"withdrawal already queued in {contract.contract_id}")
            contract.queued_images.add(sig.key_image)
            contract.pending.append(PendingWithdrawal(tx.outputs[0]))
            height = self._append(tx)
            return Receipt(
                height,
                tx.tx_id(),
                tx.kind,
                status=Status.QUEUED,
                key_image=sig.key_image.hex(),
                ticket=len(contract.pending) - 1,
            )
        if contract.withdrawn >= len(contract.deposits):
            raise E.InvalidTransaction("contract custody exhausted")
        contract.used_images.add(sig.key_image)
        contract.withdrawn += 1
        contract.sealed = True
        if ticket is not None:
            contract.pending[ticket].claimed = True
        for u in created:
            self.utxos[u.id] = u
        height = self._append(tx)
        return Receipt(
            height,
            tx.tx_id(),
            tx.kind,
            created=tuple(u.id for u in created),
            key_image=sig.key_image.hex(),
            ticket=ticket,
        )

    def _apply_refund(self, tx: Transaction) -> Receipt:
        contract = self.contract(tx.contract_id or "")
        if contract.closed:
            raise E.ContractClosed(contract.contract_id)
        if contract.sealed or contract.withdrawn:
            raise E.InvalidTransaction("refund unavailable once withdrawals have been processed")
        if not contract.depleted:
            raise E.InvalidTransaction("refund is only for depleted contracts")
        created = self._check_outputs(contract.refund_outputs, self.height)
        for u in created:
            self.utxos[u.id] = u
        contract.closed = True
        for p in contract.pending:
            p.claimed = True
        height = self._append(tx)
        return Receipt(height, tx.tx_id(), tx.kind, created=tuple(u.id for u in created))


def replay(log: Iterable[Block | Transaction], profile: Profile | str) -> LedgerState:
    """Rebuild state from genesis by re-applying every logged transaction.

    Blocks carry their hash; a block whose recomputed hash or height differs
    from the logged one raises :class:`CorruptLog`.
    """
    state = LedgerState(profile)
    for entry in log:
        tx = entry.tx if isinstance(entry, Block) else entry
        try:
            state.apply(tx)
        except E.LedgerError as exc:
            raise E.CorruptLog(f"block {state.height} no longer applies: {exc}") from exc
        if isinstance(entry, Block) and (entry.hash, entry.height) != (state.head_hash, state.height - 1):
            raise E.CorruptLog(f"block {entry.height} hash mismatch")
    return state


def dumps_state_summary(state: LedgerState) -> str:
    return json.dumps(
        {
            "profile": state.profile.value,
            "height": state.height,
            "minted": state.minted,
            "circulating": state.circulating(),
            "custodial": state.custodial(),
            "state_hash": state.state_hash(),
        },
        indent=2,
    )
