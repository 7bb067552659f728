"""Plain Schnorr signatures, used to authenticate exported stealth addresses."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .group import DecodeError, Group, GroupElement


@dataclass(frozen=True)
class Signature:
    challenge: int
    response: int

    def to_bytes(self, group: Group) -> bytes:
        return group.encode_scalar(self.challenge) + group.encode_scalar(self.response)

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> Signature:
        n = group.scalar_size
        if len(data) != 2 * n:
            raise DecodeError("bad signature length")
        return cls(group.decode_scalar(data[:n]), group.decode_scalar(data[n:]))


def _challenge(public: GroupElement, message: bytes, commitment: GroupElement) -> int:
    return public.group.hash_to_scalar(
        "schnorr-sig", public.encode() + commitment.encode() + message
    )


def sign(group: Group, secret: int, message: bytes, rng: random.Random | None = None) -> Signature:
    public = group.base_mul(secret)
    u = group.random_scalar(rng)
    c = _challenge(public, message, group.base_mul(u))
    return Signature(c, (u - c * secret) % group.q)


def verify(public: GroupElement, message: bytes, sig: Signature) -> bool:
    group = public.group
    if public.is_identity or not group.is_member(public):
        return False
    commitment = group.base_mul(sig.response) + sig.challenge * public
    return _challenge(public, message, commitment) == sig.challenge
