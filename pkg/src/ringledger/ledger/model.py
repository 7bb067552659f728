"""Ledger data types and their canonical JSON form.

Every on-ledger object serializes to a JSON object with a fixed key order and
hex-encoded group elements, so that one transaction has exactly one byte
representation. Transaction digests and block hashes are taken over that
representation.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, replace
from typing import Any

from ..group import Group, GroupElement
from ..ring import RingSignature


class TxKind(str, enum.Enum):
    MINT = "mint"
    CN_TRANSFER = "cn-transfer"
    TUMBLER_NEW = "tumbler-new"
    TUMBLER_DEPOSIT = "tumbler-deposit"
    TUMBLER_WITHDRAW = "tumbler-withdraw"
    TUMBLER_REFUND = "tumbler-refund"


class Policy(str, enum.Enum):
    """What a tumbler does with a withdrawal while it holds too few deposits."""

    PROCESS_ANYWAY = "process"
    REFUSE = "refuse"
    DELAY = "delay"
    PER_TX = "per-tx"


class PolicyHint(str, enum.Enum):
    """Per-transaction choice, consulted only by ``Policy.PER_TX`` contracts."""

    PROCESS_ANYWAY = "process"
    FAIL = "fail"
    DELAY = "delay"


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True).encode()


def sha256_hex(*parts: bytes) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return h.hexdigest()


@dataclass(frozen=True)
class OutputSpec:
    """An output before it lands in a block (no height, no id yet)."""

    output_public: GroupElement
    nonce_public: GroupElement
    denomination: int

    def to_json(self) -> dict[str, Any]:
        return {
            "output_public": self.output_public.hex(),
            "nonce_public": self.nonce_public.hex(),
            "denomination": self.denomination,
        }

    @classmethod
    def from_json(cls, group: Group, d: dict[str, Any]) -> OutputSpec:
        return cls(
            group.decode_hex(d["output_public"]),
            group.decode_hex(d["nonce_public"]),
            int(d["denomination"]),
        )


def utxo_id(spec: OutputSpec, height: int) -> str:
    return sha256_hex(
        b"ringledger-utxo",
        spec.output_public.encode(),
        spec.nonce_public.encode(),
        spec.denomination.to_bytes(8, "big"),
        height.to_bytes(8, "big"),
    )


@dataclass(frozen=True)
class Utxo:
    id: str
    output_public: GroupElement
    nonce_public: GroupElement
    denomination: int
    height: int

    @classmethod
    def create(cls, spec: OutputSpec, height: int) -> Utxo:
        return cls(utxo_id(spec, height), spec.output_public, spec.nonce_public, spec.denomination, height)

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "output_public": self.output_public.hex(),
            "nonce_public": self.nonce_public.hex(),
            "denomination": self.denomination,
            "height": self.height,
        }


@dataclass(frozen=True)
class Transaction:
    """One ledger transaction; which fields are meaningful depends on ``kind``.

    ================  ==========================================================
    mint              outputs
    cn-transfer       ring_utxo_ids, signature (per-key), outputs
    tumbler-new       contract_id, denomination, ring_size, policy, noncanonical
    tumbler-deposit   contract_id, ring_utxo_ids, signature (per-key),
                      deposit_public, outputs[0] = refund destination
    tumbler-withdraw  contract_id, signature (per-ring), outputs[0] =
                      destination, policy_hint, ring_order, ticket
    tumbler-refund    contract_id
    ================  ==========================================================
    """

    kind: TxKind
    ring_utxo_ids: tuple[str, ...] = ()
    signature: RingSignature | None = None
    outputs: tuple[OutputSpec, ...] = ()
    contract_id: str | None = None
    denomination: int | None = None
    ring_size: int | None = None
    policy: Policy | None = None
    noncanonical: bool = False
    deposit_public: GroupElement | None = None
    policy_hint: PolicyHint | None = None
    ring_order: tuple[int, ...] | None = None
    ticket: int | None = None

    def body(self) -> dict[str, Any]:
        """Canonical JSON object without the signature."""
        d: dict[str, Any] = {"kind": self.kind.value}
        if self.contract_id is not None:
            d["contract_id"] = self.contract_id
        if self.ring_utxo_ids:
            d["ring"] = list(self.ring_utxo_ids)
        if self.denomination is not None:
            d["denomination"] = self.denomination
        if self.ring_size is not None:
            d["ring_size"] = self.ring_size
        if self.policy is not None:
            d["policy"] = self.policy.value
        if self.noncanonical:
            d["noncanonical"] = True
        if self.deposit_public is not None:
            d["deposit_public"] = self.deposit_public.hex()
        if self.policy_hint is not None:
            d["policy_hint"] = self.policy_hint.value
        if self.ring_order is not None:
            d["ring_order"] = list(self.ring_order)
        if self.ticket is not None:
            d["ticket"] = self.ticket
        if self.outputs:
            d["outputs"] = [o.to_json() for o in self.outputs]
        return d

    def digest(self) -> bytes:
        """The signed message: a hash of everything except the signature."""
        return hashlib.sha256(b"ringledger-tx" + canonical_json(self.body())).digest()

    def to_json(self) -> dict[str, Any]:
        d = self.body()
        if self.signature is not None:
            d["signature"] = self.signature.hex()
        return d

    def tx_id(self) -> str:
        return sha256_hex(b"ringledger-txid", canonical_json(self.to_json()))

    def with_signature(self, signature: RingSignature) -> Transaction:
        return replace(self, signature=signature)

    @classmethod
    def from_json(cls, group: Group, d: dict[str, Any]) -> Transaction:
        sig = d.get("signature")
        return cls(
            kind=TxKind(d["kind"]),
            ring_utxo_ids=tuple(d.get("ring", ())),
            signature=RingSignature.from_bytes(group, bytes.fromhex(sig)) if sig else None,
            outputs=tuple(OutputSpec.from_json(group, o) for o in d.get("outputs", ())),
            contract_id=d.get("contract_id"),
            denomination=d.get("denomination"),
            ring_size=d.get("ring_size"),
            policy=Policy(d["policy"]) if "policy" in d else None,
            noncanonical=bool(d.get("noncanonical", False)),
            deposit_public=group.decode_hex(d["deposit_public"]) if "deposit_public" in d else None,
            policy_hint=PolicyHint(d["policy_hint"]) if "policy_hint" in d else None,
            ring_order=tuple(d["ring_order"]) if "ring_order" in d else None,
            ticket=d.get("ticket"),
        )


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: str
    tx: Transaction
    hash: str

    @staticmethod
    def compute_hash(height: int, prev_hash: str, tx: Transaction) -> str:
        return sha256_hex(
            b"ringledger-block",
            height.to_bytes(8, "big"),
            bytes.fromhex(prev_hash),
            canonical_json(tx.to_json()),
        )

    def to_json(self) -> dict[str, Any]:
        return {"height": self.height, "prev": self.prev_hash, "hash": self.hash, "tx": self.tx.to_json()}


def genesis_hash(profile: str) -> str:
    return sha256_hex(b"ringledger-genesis", profile.encode())
