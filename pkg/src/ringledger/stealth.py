"""Stealth address schemes.

Basic
    Sender ``(a, A)``, recipient ``(b, B)``. Both compute ``S = a*B = b*A`` and
    the one-time key ``c = H(S)``, ``C = c*G``. Both can spend ``C``, and a
    sender reusing ``A`` makes every payment to the same recipient share ``S``.
Improved
    One-time nonce ``(r, R)``. ``P = H(r*B)*G + B``; only the holder of ``b``
    can compute ``sk = H(b*R) + b``.
Dual-key
    Recipient publishes ``(V, B)``. ``P = H(r*V)*G + B``. ``(v, B)`` is enough to
    detect payments but not to spend them.
Mobius CKD
    Additive child-key derivation from a master public key, indexed by a
    shared secret and an incrementing counter.

Every hash here uses the ``stealth-shared`` domain (``ckd-add`` for the
Mobius variant).
"""

from __future__ import annotations

import enum
import random
from collections.abc import Iterable
from dataclasses import dataclass

from .group import Group, GroupElement, KeyPair
from .keyderive import ckd_private_add, ckd_public_add
from .ring import Ring, TagMode, ring_sign, ring_verify
from . import schnorr


class Scheme(str, enum.Enum):
    BASIC = "basic"
    IMPROVED = "improved"
    DUAL_KEY = "dualkey"
    MOBIUS_CKD = "mobius-ckd"


class AttackOutcome(str, enum.Enum):
    SUCCEEDED = "AttackSucceeded"
    BLOCKED = "AttackBlocked"


@dataclass(frozen=True)
class SharedSecret:
    point: GroupElement


@dataclass(frozen=True)
class OneTimeOutput:
    output_public: GroupElement
    nonce_public: GroupElement
    scheme: Scheme


@dataclass(frozen=True)
class DualKeyStealthAddress:
    scan_public: GroupElement
    spend_public: GroupElement

    def __post_init__(self) -> None:
        for key in (self.scan_public, self.spend_public):
            if key.is_identity or not key.group.is_member(key):
                raise ValueError("stealth address keys must be non-identity group elements")
        if self.scan_public.group is not self.spend_public.group:
            raise ValueError("scan and spend keys belong to different groups")

    @property
    def group(self) -> Group:
        return self.spend_public.group

    def signing_payload(self) -> bytes:
        return b"stealth-address" + self.scan_public.encode() + self.spend_public.encode()


def _shared_scalar(point: GroupElement) -> int:
    return point.group.hash_to_scalar("stealth-shared", point.encode())


# -- basic -------------------------------------------------------------------


def basic_onetime(sender: KeyPair, recipient_public: GroupElement) -> tuple[SharedSecret, KeyPair]:
    """Sender side: ``S = a*B``, ephemeral ``c = H(S)``.

    Called as ``basic_onetime(recipient, sender_public)`` it is also the
    receiver side, which is the whole problem with this scheme.
    """
    if recipient_public.is_identity:
        raise ValueError("recipient key must not be the identity")
    S = sender.secret * recipient_public
    c = _shared_scalar(S)
    group = recipient_public.group
    return SharedSecret(S), KeyPair(c, group.base_mul(c))


def basic_output(sender: KeyPair, recipient_public: GroupElement) -> OneTimeOutput:
    _, ephemeral = basic_onetime(sender, recipient_public)
    return OneTimeOutput(ephemeral.public, sender.public, Scheme.BASIC)


# -- improved ----------------------------------------------------------------


def improved_onetime(
    recipient_spend_public: GroupElement,
    rng: random.Random | None = None,
    nonce: int | None = None,
) -> tuple[OneTimeOutput, int]:
    group = recipient_spend_public.group
    r = nonce % group.q if nonce is not None else group.random_scalar(rng)
    R = group.base_mul(r)
    P = group.base_mul(_shared_scalar(r * recipient_spend_public)) + recipient_spend_public
    return OneTimeOutput(P, R, Scheme.IMPROVED), r


def improved_recover(secret_b: int, R: GroupElement) -> int:
    group = R.group
    return (_shared_scalar(secret_b * R) + secret_b) % group.q


# -- dual key ----------------------------------------------------------------


def dualkey_onetime(
    addr: DualKeyStealthAddress,
    rng: random.Random | None = None,
    sender_key: KeyPair | None = None,
) -> tuple[OneTimeOutput, int]:
    """Build ``P = H(r*V)*G + B`` with a fresh nonce ``r``.

    Passing ``sender_key`` uses a permanent sender key pair instead of a fresh
    nonce, so ``R`` is the sender's long-term public key. Outputs from one
    sender to one address then share ``R`` and ``P``; callers must vary the
    address (or accept the linkage).
    """
    group = addr.group
    r = sender_key.secret if sender_key is not None else group.random_scalar(rng)
    R = group.base_mul(r)
    P = group.base_mul(_shared_scalar(r * addr.scan_public)) + addr.spend_public
    return OneTimeOutput(P, R, Scheme.DUAL_KEY), r


def dualkey_matches(scan_secret: int, spend_public: GroupElement, P: GroupElement, R: GroupElement) -> bool:
    group = spend_public.group
    return group.base_mul(_shared_scalar(scan_secret * R)) + spend_public == P


def dualkey_scan(
    scan_secret: int,
    spend_public: GroupElement,
    candidates: Iterable[tuple[GroupElement, GroupElement]],
) -> list[tuple[GroupElement, GroupElement]]:
    """Return the ``(P, R)`` pairs paying to ``(V, B)``.

    Needs the scan secret and the spend *public* key only; the result tells
    the caller which outputs exist, not how to spend them.
    """
    return [(P, R) for P, R in candidates if dualkey_matches(scan_secret, spend_public, P, R)]


def dualkey_recover(v: int, b: int, R: GroupElement) -> int:
    return (_shared_scalar(v * R) + b) % R.group.q


# -- Mobius simple CKD ---------------------------------------------------------


def mobius_index(shared: SharedSecret, counter: int) -> bytes:
    if counter < 0:
        raise ValueError("counter must be non-negative")
    return shared.point.encode() + counter.to_bytes(8, "big")


def mobius_ckd_next(master_public: GroupElement, shared: SharedSecret, counter: int) -> GroupElement:
    return ckd_public_add(master_public, mobius_index(shared, counter))


def mobius_ckd_secret(master_secret: int, shared: SharedSecret, counter: int) -> int:
    group = shared.point.group
    return ckd_private_add(group, master_secret, mobius_index(shared, counter))


# -- sender-spend demonstration -------------------------------------------------


@dataclass(frozen=True)
class SenderView:
    """Everything the sender of an output knows.

    ``sender_secret`` is ``a`` for the basic scheme and the nonce ``r``
    otherwise. ``recipient_public`` is ``B``; ``scan_public`` is ``V`` for
    dual-key outputs.
    """

    sender_secret: int
    recipient_public: GroupElement
    scan_public: GroupElement | None = None


def sender_spend_candidate(output: OneTimeOutput, view: SenderView) -> int:
    """The spend scalar a sender would try: the shared hash without ``b``."""
    if output.scheme is Scheme.BASIC or output.scheme is Scheme.IMPROVED:
        return _shared_scalar(view.sender_secret * view.recipient_public)
    if output.scheme is Scheme.DUAL_KEY:
        if view.scan_public is None:
            raise ValueError("dual-key view needs the scan public key")
        return _shared_scalar(view.sender_secret * view.scan_public)
    raise ValueError(f"no sender-spend model for scheme {output.scheme.value}")


def demo_sender_spend(output: OneTimeOutput, view: SenderView, rng: random.Random | None = None) -> bool:
    """True when the sender alone can produce a valid spend of ``output``.

    The sender computes its best candidate key and signs a spend over the
    one-member ring ``[P]``. For the basic scheme the candidate is exactly the
    output key; for the other schemes it is off by the recipient's ``b`` and
    fails ``sk*G == P`` before any signing happens.
    """
    group = output.output_public.group
    sk = sender_spend_candidate(output, view)
    if group.base_mul(sk) != output.output_public:
        return False
    ring = Ring([output.output_public])
    msg = b"sender-spend:" + output.output_public.encode()
    sig = ring_sign(msg, ring, 0, sk, TagMode.PER_KEY, rng)
    return ring_verify(msg, ring, sig, TagMode.PER_KEY)


# -- address files -------------------------------------------------------------


def sign_address(addr: DualKeyStealthAddress, spend_secret: int, rng: random.Random | None = None) -> schnorr.Signature:
    return schnorr.sign(addr.group, spend_secret, addr.signing_payload(), rng)


def verify_address(addr: DualKeyStealthAddress, sig: schnorr.Signature) -> bool:
    return schnorr.verify(addr.spend_public, addr.signing_payload(), sig)


def format_address_file(addr: DualKeyStealthAddress, sig: schnorr.Signature) -> str:
    return (
        f"scan_public={addr.scan_public.hex()}\n"
        f"spend_public={addr.spend_public.hex()}\n"
        f"sig={sig.to_bytes(addr.group).hex()}\n"
    )


class AddressFileError(ValueError):
    pass


def parse_address_file(group: Group, text: str) -> DualKeyStealthAddress:
    """Parse and authenticate an address file. Raises if the signature is bad."""
    fields: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise AddressFileError(f"malformed line {line!r}")
        fields[key.strip()] = value.strip()
    try:
        addr = DualKeyStealthAddress(
            group.decode_hex(fields["scan_public"]), group.decode_hex(fields["spend_public"])
        )
        sig = schnorr.Signature.from_bytes(group, bytes.fromhex(fields["sig"]))
    except (KeyError, ValueError) as exc:
        raise AddressFileError(f"bad address file: {exc}") from exc
    if not verify_address(addr, sig):
        raise AddressFileError("address signature does not verify")
    return addr
