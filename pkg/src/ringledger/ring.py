"""Back-linked Schnorr ring signatures with a key image.

The key image is ``I = a * base`` for the signer's secret ``a``. What goes into
``base`` decides how far linking reaches:

* ``TagMode.PER_KEY``  -- base depends on the signer's public key only, so one
  key produces the same image in every ring (a spent coin stays spent).
* ``TagMode.PER_RING`` -- base is hashed from the whole ring description, so the
  same key links only when it signs again over the same ring.

PER_RING makes the byte encoding of the ring security-relevant: two orderings
of the same set must hash identically. :class:`Ring` sorts its members for
that reason. ``Ring(..., canonical=False)`` keeps insertion order and exists
only to reproduce the multiple-withdrawal bug in tests and demos.

Signing walks the ring in encoding order::

    c[i+1] = H(ring || I || m || s[i]*G + c[i]*A[i] || s[i]*B[i] + c[i]*I)

and the signature is ``(I, c[0], s[0..N-1])``.
"""

from __future__ import annotations

import enum
import random
from collections.abc import Collection, Sequence
from dataclasses import dataclass, field

from .group import DecodeError, Group, GroupElement


class RingError(ValueError):
    pass


class DuplicateRingMemberError(RingError):
    pass


class SignerNotInRingError(RingError):
    pass


class TagMode(str, enum.Enum):
    PER_KEY = "per-key"
    PER_RING = "per-ring"


class Link(str, enum.Enum):
    FRESH = "fresh"
    DUPLICATE = "duplicate"


def canonical_ring_encode(members: Sequence[GroupElement]) -> bytes:
    """Sorted concatenation of member encodings; independent of member order."""
    encoded = [m.encode() for m in members]
    if len(set(encoded)) != len(encoded):
        raise DuplicateRingMemberError("ring contains a duplicate public key")
    return b"".join(sorted(encoded))


def noncanonical_ring_encode(members: Sequence[GroupElement]) -> bytes:
    # Insertion order. Deliberately wrong for PER_RING images; demo use only.
    encoded = [m.encode() for m in members]
    if len(set(encoded)) != len(encoded):
        raise DuplicateRingMemberError("ring contains a duplicate public key")
    return b"".join(encoded)


@dataclass(frozen=True)
class Ring:
    """An ordered set of public keys.

    ``ordered`` is the walk order used by signatures: sorted by encoding for a
    canonical ring, insertion order otherwise.
    """

    members: tuple[GroupElement, ...]
    canonical: bytes = field(init=False)
    ordered: tuple[GroupElement, ...] = field(init=False, repr=False)
    is_canonical: bool = True

    def __init__(self, members: Sequence[GroupElement], canonical: bool = True) -> None:
        members = tuple(members)
        if not members:
            raise RingError("ring must have at least one member")
        group = members[0].group
        for m in members:
            if m.group is not group or m.is_identity or not group.is_member(m):
                raise RingError("ring members must be non-identity elements of one group")
        if canonical:
            encoding = canonical_ring_encode(members)
            ordered = tuple(sorted(members, key=lambda m: m.encode()))
        else:
            encoding = noncanonical_ring_encode(members)
            ordered = members
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "canonical", encoding)
        object.__setattr__(self, "ordered", ordered)
        object.__setattr__(self, "is_canonical", canonical)

    @property
    def group(self) -> Group:
        return self.members[0].group

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, key: object) -> bool:
        return key in self.members

    def position(self, key: GroupElement) -> int:
        """Index of ``key`` in walk order."""
        try:
            return self.ordered.index(key)
        except ValueError:
            raise SignerNotInRingError("public key is not a ring member") from None


@dataclass(frozen=True)
class KeyImage:
    image: GroupElement

    def encode(self) -> bytes:
        return self.image.encode()

    def hex(self) -> str:
        return self.image.hex()


@dataclass(frozen=True)
class RingSignature:
    key_image: KeyImage
    seed_challenge: int
    responses: tuple[int, ...]

    def to_bytes(self) -> bytes:
        group = self.key_image.image.group
        return (
            self.key_image.encode()
            + group.encode_scalar(self.seed_challenge)
            + b"".join(group.encode_scalar(s) for s in self.responses)
        )

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> RingSignature:
        e, s = group.element_size, group.scalar_size
        body = len(data) - e
        if body < 2 * s or body % s:
            raise DecodeError("ring signature has a malformed length")
        image = KeyImage(group.decode(data[:e]))
        scalars = [group.decode_scalar(data[i : i + s]) for i in range(e, len(data), s)]
        return cls(image, scalars[0], tuple(scalars[1:]))


def tag_base(member: GroupElement, ring: Ring, mode: TagMode) -> GroupElement:
    group = member.group
    if TagMode(mode) is TagMode.PER_KEY:
        return group.hash_to_element("keyimage-base-fs", member.encode())
    return group.hash_to_element("keyimage-base-fz", ring.canonical)


def key_image(secret: int, public: GroupElement, ring: Ring, mode: TagMode) -> KeyImage:
    if public not in ring:
        raise SignerNotInRingError("public key is not a ring member")
    return KeyImage(secret * tag_base(public, ring, mode))


def _challenge(ring: Ring, image: GroupElement, message: bytes, L: GroupElement, R: GroupElement) -> int:
    return ring.group.hash_to_scalar(
        "ring-challenge", ring.canonical + image.encode() + message + L.encode() + R.encode()
    )


def _bases(ring: Ring, mode: TagMode) -> list[GroupElement]:
    if TagMode(mode) is TagMode.PER_RING:
        return [tag_base(ring.ordered[0], ring, mode)] * len(ring)
    return [tag_base(m, ring, mode) for m in ring.ordered]


def ring_sign(
    message: bytes,
    ring: Ring,
    signer_index: int,
    secret: int,
    mode: TagMode,
    rng: random.Random | None = None,
) -> RingSignature:
    """Sign ``message`` as member ``ring.members[signer_index]``.

    ``signer_index`` indexes the caller's member list; the walk itself uses
    ``ring.ordered`` so the output does not depend on how the caller listed
    the members.
    """
    group = ring.group
    if not 0 <= signer_index < len(ring):
        raise IndexError("signer index out of range")
    secret %= group.q
    public = ring.members[signer_index]
    if group.base_mul(secret) != public:
        raise SignerNotInRingError("secret does not match the ring member at signer_index")
    n = len(ring)
    j = ring.position(public)
    bases = _bases(ring, mode)
    image = secret * bases[j]

    c = [0] * n
    s = [0] * n
    u = group.random_scalar(rng)
    c[(j + 1) % n] = _challenge(ring, image, message, group.base_mul(u), u * bases[j])
    for step in range(1, n):
        i = (j + step) % n
        s[i] = group.random_scalar(rng)
        L = group.base_mul(s[i]) + c[i] * ring.ordered[i]
        R = s[i] * bases[i] + c[i] * image
        c[(i + 1) % n] = _challenge(ring, image, message, L, R)
    s[j] = (u - c[j] * secret) % group.q
    return RingSignature(KeyImage(image), c[0], tuple(s))


def ring_verify(message: bytes, ring: Ring, sig: RingSignature, mode: TagMode) -> bool:
    group = ring.group
    image = sig.key_image.image
    n = len(ring)
    if len(sig.responses) != n:
        return False
    if image.group is not group or image.is_identity or not group.is_member(image):
        return False
    if not all(0 <= s < group.q for s in sig.responses) or not 0 <= sig.seed_challenge < group.q:
        return False
    bases = _bases(ring, mode)
    c = sig.seed_challenge
    for i in range(n):
        L = group.base_mul(sig.responses[i]) + c * ring.ordered[i]
        R = sig.responses[i] * bases[i] + c * image
        c = _challenge(ring, image, message, L, R)
    return c == sig.seed_challenge


def link(image: KeyImage, registry: Collection[KeyImage]) -> Link:
    return Link.DUPLICATE if image in registry else Link.FRESH


def signature_size(sig: RingSignature) -> int:
    return len(sig.to_bytes())


def size_constants(group: Group) -> tuple[int, int]:
    """``(a, b)`` such that a signature over N keys is ``a + b*N`` bytes."""
    return group.element_size + group.scalar_size, group.scalar_size
