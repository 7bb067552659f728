"""Child-key derivation, multiplicative and additive.

Both methods come in a private flavour (master secret in, child secret out)
and a public flavour (master public key in, child public key out) such that::

    ckd_public(k * G, x) == ckd_private(k, x) * G

The public functions never see a secret, which is what gives an auditor the
ability to enumerate child public keys. Derivation is also assumed to be
one-way; that is a property of the hash and is not something we test.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass

from .group import Group, GroupElement, KeyPair


class DerivedZeroError(ValueError):
    """The derived key is zero (or the identity); pick a different index."""

    def __init__(self, message: str, depth: int | None = None) -> None:
        super().__init__(message)
        self.depth = depth


class Method(str, enum.Enum):
    ADD = "add"
    MULT = "mult"


@dataclass(frozen=True)
class MasterKeyPair:
    group: Group
    master_secret: int
    master_public: GroupElement

    @classmethod
    def from_secret(cls, group: Group, secret: int) -> MasterKeyPair:
        kp = group.keypair(secret)
        return cls(group, kp.secret, kp.public)


def _check_index(x: bytes) -> bytes:
    if not isinstance(x, (bytes, bytearray)) or not x:
        raise ValueError("derivation index must be a non-empty byte string")
    return bytes(x)


def _tweak(domain: str, master_public: GroupElement, x: bytes) -> int:
    return master_public.group.hash_to_scalar(domain, master_public.encode() + _check_index(x))


def ckd_private_mult(group: Group, k_hat: int, x: bytes) -> int:
    k_hat %= group.q
    if k_hat == 0:
        raise ValueError("master secret must be non-zero")
    child = k_hat * _tweak("ckd-mult", group.base_mul(k_hat), x) % group.q
    if child == 0:
        raise DerivedZeroError(f"multiplicative derivation of index {x.hex()} is zero")
    return child


def ckd_public_mult(K_hat: GroupElement, x: bytes) -> GroupElement:
    if K_hat.is_identity:
        raise ValueError("master public key must not be the identity")
    child = _tweak("ckd-mult", K_hat, x) * K_hat
    if child.is_identity:
        raise DerivedZeroError(f"multiplicative derivation of index {x.hex()} is the identity")
    return child


def ckd_private_add(group: Group, k_hat: int, x: bytes) -> int:
    k_hat %= group.q
    if k_hat == 0:
        raise ValueError("master secret must be non-zero")
    child = (k_hat + _tweak("ckd-add", group.base_mul(k_hat), x)) % group.q
    if child == 0:
        raise DerivedZeroError(f"additive derivation of index {x.hex()} is zero")
    return child


def ckd_public_add(K_hat: GroupElement, x: bytes) -> GroupElement:
    if K_hat.is_identity:
        raise ValueError("master public key must not be the identity")
    group = K_hat.group
    child = K_hat + group.base_mul(_tweak("ckd-add", K_hat, x))
    if child.is_identity:
        raise DerivedZeroError(f"additive derivation of index {x.hex()} is the identity")
    return child


_PRIVATE = {Method.ADD: ckd_private_add, Method.MULT: ckd_private_mult}
_PUBLIC = {Method.ADD: ckd_public_add, Method.MULT: ckd_public_mult}


def derive_chain(master: MasterKeyPair, path: Sequence[bytes], method: Method | str) -> KeyPair:
    """Fold the private CKD along ``path``; each level's child is the next master."""
    method = Method(method)
    if not path:
        raise ValueError("derivation path must be non-empty")
    step = _PRIVATE[method]
    k = master.master_secret
    for depth, x in enumerate(path, start=1):
        try:
            k = step(master.group, k, x)
        except DerivedZeroError as exc:
            raise DerivedZeroError(str(exc), depth=depth) from None
    return KeyPair(k, master.group.base_mul(k))


def derive_public_chain(
    master_public: GroupElement, path: Sequence[bytes], method: Method | str
) -> GroupElement:
    method = Method(method)
    if not path:
        raise ValueError("derivation path must be non-empty")
    step = _PUBLIC[method]
    K = master_public
    for depth, x in enumerate(path, start=1):
        try:
            K = step(K, x)
        except DerivedZeroError as exc:
            raise DerivedZeroError(str(exc), depth=depth) from None
    return K
