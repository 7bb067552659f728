"""Client-side key holding: dual-key identities, contacts, Mobius counters.

Wallet files are plain text: a warning banner of ``#`` lines followed by a
JSON document. Secrets are stored unencrypted as hex.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .group import Group, GroupElement, KeyPair, Profile, get_group
from .ledger.model import Utxo
from .ledger.state import LedgerState, TumblerContract
from .ring import KeyImage, Ring, TagMode, key_image
from .stealth import (
    DualKeyStealthAddress,
    SharedSecret,
    dualkey_matches,
    dualkey_recover,
    mobius_ckd_next,
    mobius_ckd_secret,
)

BANNER = (
    "# !!! WARNING: PLAINTEXT SECRET KEYS !!!\n"
    "# This wallet file holds unencrypted private keys. Anyone who reads it can\n"
    "# spend every coin it controls. Simulation use only.\n"
)

MOBIUS_SCAN_LIMIT = 64


@dataclass(frozen=True)
class Identity:
    name: str
    scan: KeyPair
    spend: KeyPair

    @property
    def group(self) -> Group:
        return self.spend.public.group

    @property
    def address(self) -> DualKeyStealthAddress:
        return DualKeyStealthAddress(self.scan.public, self.spend.public)

    @classmethod
    def generate(cls, name: str, group: Group, rng=None) -> Identity:
        return cls(name, group.keygen(rng), group.keygen(rng))

    def owns(self, utxo: Utxo) -> bool:
        return dualkey_matches(self.scan.secret, self.spend.public, utxo.output_public, utxo.nonce_public)

    def secret_for(self, utxo: Utxo) -> int:
        sk = dualkey_recover(self.scan.secret, self.spend.secret, utxo.nonce_public)
        if self.group.base_mul(sk) != utxo.output_public:
            raise ValueError(f"{self.name} does not own output {utxo.id}")
        return sk

    def spend_image(self, utxo: Utxo) -> KeyImage:
        return key_image(self.secret_for(utxo), utxo.output_public, Ring([utxo.output_public]), TagMode.PER_KEY)

    def owned_outputs(self, state: LedgerState) -> list[Utxo]:
        return [u for u in sorted(state.utxos.values(), key=lambda u: (u.height, u.id)) if self.owns(u)]

    def unspent_outputs(self, state: LedgerState) -> list[Utxo]:
        return [u for u in self.owned_outputs(state) if self.spend_image(u) not in state.spent_images]

    def mobius_shared(self, other_public: GroupElement) -> SharedSecret:
        # S = a*B = b*A between the two parties' spend keys
        return SharedSecret(self.spend.secret * other_public)

    def find_deposits(
        self, contract: TumblerContract, senders: list[GroupElement], limit: int = MOBIUS_SCAN_LIMIT
    ) -> list[tuple[int, int]]:
        """``(deposit index, secret)`` for every deposit in ``contract`` paying us."""
        found = []
        positions = {key: i for i, key in enumerate(contract.deposits)}
        for sender in senders:
            shared = self.mobius_shared(sender)
            for counter in range(limit):
                key = mobius_ckd_next(self.spend.public, shared, counter)
                if key in positions:
                    found.append((positions[key], mobius_ckd_secret(self.spend.secret, shared, counter)))
        return sorted(found)

    def to_json(self) -> dict[str, Any]:
        return {"scan": self.group.encode_scalar(self.scan.secret).hex(), "spend": self.group.encode_scalar(self.spend.secret).hex()}


@dataclass
class Wallet:
    profile: Profile
    identities: dict[str, Identity] = field(default_factory=dict)
    contacts: dict[str, DualKeyStealthAddress] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    claims: list[dict[str, Any]] = field(default_factory=list)

    @property
    def group(self) -> Group:
        return get_group(self.profile)

    def identity(self, name: str) -> Identity:
        try:
            return self.identities[name]
        except KeyError:
            raise KeyError(f"no identity named {name!r} in wallet") from None

    def address_of(self, name: str) -> DualKeyStealthAddress:
        if name in self.contacts:
            return self.contacts[name]
        return self.identity(name).address

    def next_counter(self, sender: str, recipient: str) -> int:
        key = f"{sender}->{recipient}"
        n = self.counters.get(key, 0)
        self.counters[key] = n + 1
        return n

    def known_spend_keys(self) -> list[GroupElement]:
        keys = {i.spend.public for i in self.identities.values()}
        keys.update(a.spend_public for a in self.contacts.values())
        return sorted(keys, key=lambda k: k.encode())

    def to_text(self) -> str:
        doc = {
            "profile": self.profile.value,
            "identities": {n: i.to_json() for n, i in sorted(self.identities.items())},
            "contacts": {
                n: {"scan_public": a.scan_public.hex(), "spend_public": a.spend_public.hex()}
                for n, a in sorted(self.contacts.items())
            },
            "counters": dict(sorted(self.counters.items())),
            "claims": self.claims,
        }
        return BANNER + json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Wallet:
        body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
        doc = json.loads(body)
        profile = Profile(doc["profile"])
        group = get_group(profile)
        wallet = cls(profile)
        for name, keys in doc.get("identities", {}).items():
            scan = group.keypair(int(keys["scan"], 16))
            spend = group.keypair(int(keys["spend"], 16))
            wallet.identities[name] = Identity(name, scan, spend)
        for name, a in doc.get("contacts", {}).items():
            wallet.contacts[name] = DualKeyStealthAddress(
                group.decode_hex(a["scan_public"]), group.decode_hex(a["spend_public"])
            )
        wallet.counters = dict(doc.get("counters", {}))
        wallet.claims = list(doc.get("claims", []))
        return wallet

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> Wallet:
        return cls.from_text(Path(path).read_text())
