"""Prime-order groups used by every other module.

Three instantiations share one interface:

* ``toy``       -- order-11 subgroup of Z_23^*, small enough to check by hand.
* ``toy-large`` -- order-1000151 subgroup of Z_2000303^* (safe prime), for
                   statistical property tests. Discrete logs are brute-forceable.
* ``full``      -- NIST P-256, cofactor 1, compressed 33-byte encoding.

Group elements are written additively (``X + Y``, ``k * X``) regardless of the
underlying representation. Scalars are plain ints, always reduced mod ``q``.

The toy groups map hashes to elements as ``g^h`` so the discrete log of every
hashed element is known. That is fine for functional tests (linking,
verification) and useless for security; do not use them for anything else.
"""

from __future__ import annotations

import enum
import hashlib
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

# Registered hash domains. Every hash use gets its own tag so outputs from one
# purpose never collide with another; "schnorr-sig" backs address-file signatures.
DOMAINS = frozenset(
    {
        b"ckd-mult",
        b"ckd-add",
        b"stealth-shared",
        b"ring-challenge",
        b"keyimage-base-fs",
        b"keyimage-base-fz",
        b"schnorr-sig",
    }
)

_HASH_TO_ELEMENT_TRIES = 256


class GroupError(ValueError):
    """Base class for group-level failures."""


class UnknownDomainError(GroupError):
    pass


class DecodeError(GroupError):
    pass


class HashToElementError(GroupError):
    pass


class Profile(str, enum.Enum):
    TOY = "toy"
    TOY_LARGE = "toy-large"
    FULL = "full"


def is_probable_prime(n: int) -> bool:
    """Miller-Rabin with fixed bases; deterministic below 3.3e24."""
    if n < 2:
        return False
    bases = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53)
    for b in bases:
        if n % b == 0:
            return n == b
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for b in bases:
        x = pow(b, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _domain_bytes(domain: bytes | str) -> bytes:
    tag = domain.encode("ascii") if isinstance(domain, str) else bytes(domain)
    if tag not in DOMAINS:
        raise UnknownDomainError(f"unregistered hash domain {tag!r}")
    return tag


class GroupElement:
    """Immutable element of a prime-order group, written additively."""

    __slots__ = ("group", "value")

    def __init__(self, group: Group, value: Any) -> None:
        object.__setattr__(self, "group", group)
        object.__setattr__(self, "value", value)

    def __setattr__(self, name: str, value: Any) -> None:
        raise AttributeError("GroupElement is immutable")

    def __copy__(self) -> GroupElement:
        return self

    def __deepcopy__(self, memo: dict) -> GroupElement:
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.group is other.group and self.value == other.value

    def __hash__(self) -> int:
        return hash((self.group.name, self.value))

    def __add__(self, other: GroupElement) -> GroupElement:
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.group.add(self, other)

    def __neg__(self) -> GroupElement:
        return self.group.neg(self)

    def __sub__(self, other: GroupElement) -> GroupElement:
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.group.add(self, self.group.neg(other))

    def __rmul__(self, k: int) -> GroupElement:
        if not isinstance(k, int):
            return NotImplemented
        return self.group.scalar_mul(k, self)

    __mul__ = __rmul__

    @property
    def is_identity(self) -> bool:
        return self == self.group.identity

    def encode(self) -> bytes:
        return self.group.encode(self)

    def hex(self) -> str:
        return self.encode().hex()

    def __repr__(self) -> str:
        return f"GroupElement({self.group.name}, {self.hex()})"


@dataclass(frozen=True)
class KeyPair:
    secret: int
    public: GroupElement


class Group(ABC):
    """Cyclic group of prime order ``q`` generated by ``g``."""

    name: str
    profile: Profile
    p: int
    q: int
    element_size: int
    scalar_size: int

    # groups are cached singletons; copies must keep sharing them
    def __copy__(self) -> Group:
        return self

    def __deepcopy__(self, memo: dict) -> Group:
        return self

    # --- representation hooks -------------------------------------------
    @abstractmethod
    def _mul(self, k: int, value: Any) -> Any: ...

    @abstractmethod
    def _add(self, a: Any, b: Any) -> Any: ...

    @abstractmethod
    def _neg(self, a: Any) -> Any: ...

    @abstractmethod
    def _encode(self, value: Any) -> bytes: ...

    @abstractmethod
    def _decode(self, data: bytes) -> Any: ...

    @abstractmethod
    def _contains(self, value: Any) -> bool: ...

    @abstractmethod
    def hash_to_element(self, domain: bytes | str, data: bytes) -> GroupElement: ...

    # --- shared API -----------------------------------------------------
    @property
    def g(self) -> GroupElement:
        return self._g

    @property
    def identity(self) -> GroupElement:
        return self._identity

    def element(self, value: Any) -> GroupElement:
        if not self._contains(value):
            raise DecodeError(f"value is not in the order-{self.q} subgroup")
        return GroupElement(self, value)

    def scalar_mul(self, k: int, X: GroupElement) -> GroupElement:
        return GroupElement(self, self._mul(k % self.q, X.value))

    def base_mul(self, k: int) -> GroupElement:
        return self.scalar_mul(k, self._g)

    def add(self, X: GroupElement, Y: GroupElement) -> GroupElement:
        return GroupElement(self, self._add(X.value, Y.value))

    def neg(self, X: GroupElement) -> GroupElement:
        return GroupElement(self, self._neg(X.value))

    def encode(self, X: GroupElement) -> bytes:
        return self._encode(X.value)

    def decode(self, data: bytes) -> GroupElement:
        if len(data) != self.element_size:
            raise DecodeError(f"expected {self.element_size} bytes, got {len(data)}")
        return self.element(self._decode(bytes(data)))

    def decode_hex(self, text: str) -> GroupElement:
        try:
            raw = bytes.fromhex(text)
        except ValueError as exc:
            raise DecodeError(f"bad hex element {text!r}") from exc
        return self.decode(raw)

    def is_member(self, X: GroupElement) -> bool:
        return X.group is self and self._contains(X.value)

    def encode_scalar(self, k: int) -> bytes:
        if not 0 <= k < self.q:
            raise ValueError("scalar out of range")
        return k.to_bytes(self.scalar_size, "big")

    def decode_scalar(self, data: bytes) -> int:
        if len(data) != self.scalar_size:
            raise DecodeError(f"expected {self.scalar_size} scalar bytes")
        k = int.from_bytes(data, "big")
        if k >= self.q:
            raise DecodeError("non-canonical scalar")
        return k

    def hash_to_scalar(self, domain: bytes | str, data: bytes) -> int:
        tag = _domain_bytes(domain)
        return int.from_bytes(hashlib.sha256(tag + data).digest(), "big") % self.q

    def random_scalar(self, rng: random.Random | None = None) -> int:
        rng = rng or random.SystemRandom()
        while True:
            k = rng.randrange(self.q)
            if k:
                return k

    def keypair(self, secret: int) -> KeyPair:
        secret %= self.q
        if secret == 0:
            raise ValueError("secret reduces to zero")
        return KeyPair(secret, self.base_mul(secret))

    def keygen(self, rng: random.Random | None = None) -> KeyPair:
        return self.keypair(self.random_scalar(rng))

    def _check_params(self) -> None:
        if not is_probable_prime(self.q):
            raise GroupError(f"{self.name}: order is not prime")
        if not is_probable_prime(self.p):
            raise GroupError(f"{self.name}: modulus is not prime")
        if self._g == self._identity or not self._contains(self._g.value):
            raise GroupError(f"{self.name}: bad generator")
        # raw exponent: scalar_mul would reduce q to 0
        if self._mul(self.q, self._g.value) != self._identity.value:
            raise GroupError(f"{self.name}: generator order mismatch")

    def __repr__(self) -> str:
        return f"<Group {self.name}>"


class SchnorrGroup(Group):
    """Order-q subgroup of Z_p^* with p = 2q + 1."""

    def __init__(self, name: str, profile: Profile, p: int, q: int, g: int) -> None:
        self.name = name
        self.profile = profile
        self.p, self.q = p, q
        self.element_size = (p.bit_length() + 7) // 8
        self.scalar_size = (q.bit_length() + 7) // 8
        self._identity = GroupElement(self, 1)
        self._g = GroupElement(self, g)
        self._check_params()

    def _mul(self, k: int, value: int) -> int:
        return pow(value, k, self.p)

    def _add(self, a: int, b: int) -> int:
        return a * b % self.p

    def _neg(self, a: int) -> int:
        return pow(a, -1, self.p)

    def _encode(self, value: int) -> bytes:
        return value.to_bytes(self.element_size, "big")

    def _decode(self, data: bytes) -> int:
        return int.from_bytes(data, "big")

    def _contains(self, value: Any) -> bool:
        return isinstance(value, int) and 0 < value < self.p and pow(value, self.q, self.p) == 1

    def hash_to_element(self, domain: bytes | str, data: bytes) -> GroupElement:
        # g^h with h != 0; the redraw only matters for the order-11 group
        h = self.hash_to_scalar(domain, data)
        for ctr in range(1, _HASH_TO_ELEMENT_TRIES + 1):
            if h:
                return self.base_mul(h)
            h = self.hash_to_scalar(domain, data + ctr.to_bytes(2, "big"))
        raise HashToElementError("no non-identity element found")


class CurveGroup(Group):
    """Short Weierstrass curve y^2 = x^3 + ax + b with prime order (cofactor 1).

    Points are affine ``(x, y)`` tuples, ``None`` is the point at infinity.
    Scalar multiplication runs in Jacobian coordinates.
    """

    def __init__(
        self,
        name: str,
        profile: Profile,
        p: int,
        a: int,
        b: int,
        q: int,
        gx: int,
        gy: int,
    ) -> None:
        self.name = name
        self.profile = profile
        self.p, self.a, self.b, self.q = p, a % p, b, q
        self.field_size = (p.bit_length() + 7) // 8
        self.element_size = self.field_size + 1
        self.scalar_size = (q.bit_length() + 7) // 8
        if p % 4 != 3:
            raise GroupError("square roots assume p = 3 mod 4")
        self._identity = GroupElement(self, None)
        self._g = GroupElement(self, (gx, gy))
        self._check_params()

    def _on_curve(self, x: int, y: int) -> bool:
        p = self.p
        return 0 <= x < p and 0 <= y < p and (y * y - (x * x * x + self.a * x + self.b)) % p == 0

    def _contains(self, value: Any) -> bool:
        if value is None:
            return True
        return isinstance(value, tuple) and len(value) == 2 and self._on_curve(*value)

    # Jacobian arithmetic: (X, Y, Z) represents (X/Z^2, Y/Z^3); Z == 0 is infinity.
    def _jdouble(self, P: tuple[int, int, int]) -> tuple[int, int, int]:
        X, Y, Z = P
        p = self.p
        if Y == 0 or Z == 0:
            return (1, 1, 0)
        YY = Y * Y % p
        S = 4 * X * YY % p
        ZZ = Z * Z % p
        M = (3 * X * X + self.a * ZZ * ZZ) % p
        X3 = (M * M - 2 * S) % p
        Y3 = (M * (S - X3) - 8 * YY * YY) % p
        Z3 = 2 * Y * Z % p
        return (X3, Y3, Z3)

    def _jadd(self, P: tuple[int, int, int], Q: tuple[int, int, int]) -> tuple[int, int, int]:
        if P[2] == 0:
            return Q
        if Q[2] == 0:
            return P
        p = self.p
        X1, Y1, Z1 = P
        X2, Y2, Z2 = Q
        Z1Z1 = Z1 * Z1 % p
        Z2Z2 = Z2 * Z2 % p
        U1 = X1 * Z2Z2 % p
        U2 = X2 * Z1Z1 % p
        S1 = Y1 * Z2 * Z2Z2 % p
        S2 = Y2 * Z1 * Z1Z1 % p
        if U1 == U2:
            if S1 != S2:
                return (1, 1, 0)
            return self._jdouble(P)
        H = (U2 - U1) % p
        R = (S2 - S1) % p
        HH = H * H % p
        HHH = H * HH % p
        V = U1 * HH % p
        X3 = (R * R - HHH - 2 * V) % p
        Y3 = (R * (V - X3) - S1 * HHH) % p
        Z3 = H * Z1 * Z2 % p
        return (X3, Y3, Z3)

    def _to_affine(self, P: tuple[int, int, int]) -> tuple[int, int] | None:
        X, Y, Z = P
        if Z == 0:
            return None
        p = self.p
        zinv = pow(Z, -1, p)
        zinv2 = zinv * zinv % p
        return (X * zinv2 % p, Y * zinv2 * zinv % p)

    def _mul(self, k: int, value: tuple[int, int] | None) -> tuple[int, int] | None:
        if value is None or k == 0:
            return None
        base = (value[0], value[1], 1)
        acc = (1, 1, 0)
        for bit in bin(k)[2:]:
            acc = self._jdouble(acc)
            if bit == "1":
                acc = self._jadd(acc, base)
        return self._to_affine(acc)

    def _add(self, a: Any, b: Any) -> Any:
        if a is None:
            return b
        if b is None:
            return a
        return self._to_affine(self._jadd((a[0], a[1], 1), (b[0], b[1], 1)))

    def _neg(self, a: Any) -> Any:
        if a is None:
            return None
        return (a[0], (-a[1]) % self.p)

    def _encode(self, value: Any) -> bytes:
        if value is None:
            return bytes(self.element_size)
        x, y = value
        return bytes([2 + (y & 1)]) + x.to_bytes(self.field_size, "big")

    def _sqrt(self, n: int) -> int | None:
        r = pow(n, (self.p + 1) // 4, self.p)
        return r if r * r % self.p == n % self.p else None

    def _decode(self, data: bytes) -> Any:
        if data == bytes(self.element_size):
            return None
        prefix = data[0]
        if prefix not in (2, 3):
            raise DecodeError("bad point prefix")
        x = int.from_bytes(data[1:], "big")
        if x >= self.p:
            raise DecodeError("x coordinate out of range")
        y = self._sqrt((x * x * x + self.a * x + self.b) % self.p)
        if y is None:
            raise DecodeError("x is not on the curve")
        if (y & 1) != (prefix & 1):
            y = self.p - y
        return (x, y)

    def hash_to_element(self, domain: bytes | str, data: bytes) -> GroupElement:
        tag = _domain_bytes(domain)
        for ctr in range(_HASH_TO_ELEMENT_TRIES):
            digest = hashlib.sha256(tag + data + ctr.to_bytes(1, "big")).digest()
            try:
                value = self._decode(b"\x02" + digest)
            except DecodeError:
                continue
            if value is not None:
                return GroupElement(self, value)
        raise HashToElementError(f"no curve point after {_HASH_TO_ELEMENT_TRIES} candidates")


P256 = dict(
    p=0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF,
    a=-3,
    b=0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B,
    q=0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551,
    gx=0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296,
    gy=0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5,
)


def get_group(profile: Profile | str) -> Group:
    """Return the process-wide group instance for ``profile``."""
    return _build_group(Profile(profile))


@lru_cache(maxsize=None)
def _build_group(profile: Profile) -> Group:
    if profile is Profile.TOY:
        return SchnorrGroup("toy", profile, p=23, q=11, g=4)
    if profile is Profile.TOY_LARGE:
        return SchnorrGroup("toy-large", profile, p=2000303, q=1000151, g=4)
    return CurveGroup("p256", profile, **P256)
