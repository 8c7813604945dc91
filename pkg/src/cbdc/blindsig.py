"""Chaum-style RSA full-domain-hash blind signatures.

One issuer keypair exists per (denomination, vintage). A wallet blinds the
SHA-256 full-domain hash of a token id, the issuer signs the blinded value
without learning it, and the wallet strips the blinding factor to obtain an
ordinary RSA-FDH signature on the token id.
"""
import hashlib
import secrets
from dataclasses import dataclass
from functools import lru_cache
from math import gcd

from cbdc import kernels
from cbdc.drbg import HashDrbg
from cbdc.encoding import encode
from cbdc.errors import InvalidDenomination, KeyMismatch, WeakParameter
from cbdc.rsakeys import PUBLIC_EXPONENT, generate_rsa

DEFAULT_DENOMINATIONS = tuple(1 << i for i in range(13))
TEST_MIN_BITS = 512
PRODUCTION_MIN_BITS = 2048

_FDH_TAG = b"cbdc-fdh-sha256\x00"


def compute_key_id(n, e, denomination, vintage):
    width = (n.bit_length() + 7) // 8
    return hashlib.sha256(
        encode(("issuer-key", n.to_bytes(width, "big"), e, denomination, vintage))
    ).digest()


@dataclass(frozen=True)
class IssuerPublicKey:
    key_id: bytes
    denomination: int
    vintage: int
    n: int
    e: int

    @property
    def width(self):
        return (self.n.bit_length() + 7) // 8

    def to_wire(self):
        return (self.key_id, self.denomination, self.vintage, self.n.to_bytes(self.width, "big"), self.e)

    @classmethod
    def from_wire(cls, wire):
        key_id, denomination, vintage, n_raw, e = wire
        key = cls(key_id, denomination, vintage, int.from_bytes(n_raw, "big"), e)
        if compute_key_id(key.n, key.e, denomination, vintage) != key_id:
            raise KeyMismatch("key_id does not match key material")
        return key


@dataclass(frozen=True, repr=False)
class IssuerKeyPair:
    key_id: bytes
    denomination: int
    vintage: int
    n: int
    e: int
    d: int
    security_param: int
    p: int
    q: int
    dp: int
    dq: int
    qinv: int

    def __repr__(self):
        return (
            f"IssuerKeyPair(denomination={self.denomination}, vintage={self.vintage}, "
            f"bits={self.security_param}, key_id={self.key_id.hex()[:16]})"
        )

    @property
    def public(self):
        return IssuerPublicKey(self.key_id, self.denomination, self.vintage, self.n, self.e)


@dataclass(frozen=True)
class BlindedMessage:
    value: int
    key_id: bytes
    width: int

    def to_wire(self):
        return (self.key_id, self.value.to_bytes(self.width, "big"))

    @classmethod
    def from_wire(cls, wire):
        key_id, raw = wire
        return cls(int.from_bytes(raw, "big"), key_id, len(raw))


@dataclass(frozen=True, repr=False)
class BlindingFactor:
    r: int
    key_id: bytes

    def __repr__(self):
        return f"BlindingFactor(key_id={self.key_id.hex()[:16]})"


@dataclass(frozen=True)
class TokenSignature:
    s: int
    key_id: bytes
    width: int

    def to_wire(self):
        return (self.key_id, self.s.to_bytes(self.width, "big"))

    @classmethod
    def from_wire(cls, wire):
        key_id, raw = wire
        return cls(int.from_bytes(raw, "big"), key_id, len(raw))


def full_domain_hash(message, n):
    """Map ``message`` uniformly into [0, n).

    SHA-256 in counter mode fills exactly ``n.bit_length()`` bits; outputs
    >= n are rejected and the attempt counter advances.
    """
    bits = n.bit_length()
    nbytes = (bits + 7) // 8
    excess = nbytes * 8 - bits
    blocks = (nbytes + 31) // 32
    attempt = 0
    while True:
        prefix = _FDH_TAG + attempt.to_bytes(4, "big")
        stream = b"".join(
            hashlib.sha256(prefix + block.to_bytes(4, "big") + message).digest()
            for block in range(blocks)
        )
        x = int.from_bytes(stream[:nbytes], "big") >> excess
        if x < n:
            return x
        attempt += 1


def keygen(denomination, vintage, security_param, rng_seed, denominations=DEFAULT_DENOMINATIONS,
           profile="test"):
    if denomination not in denominations:
        raise InvalidDenomination(f"{denomination} not in denomination set")
    if denomination <= 0:
        raise InvalidDenomination("denomination must be positive")
    minimum = PRODUCTION_MIN_BITS if profile == "production" else TEST_MIN_BITS
    if security_param < minimum or security_param % 2:
        raise WeakParameter(f"security_param {security_param} below {minimum} or odd")
    return _derive_keypair(denomination, vintage, security_param, rng_seed)


@lru_cache(maxsize=1024)
def _derive_keypair(denomination, vintage, security_param, rng_seed):
    # deterministic in its arguments, so repeated worlds with one seed share keys
    rng = HashDrbg(rng_seed, ("issuer-key", denomination, vintage, security_param))
    rsa = generate_rsa(security_param, rng, PUBLIC_EXPONENT)
    return IssuerKeyPair(
        key_id=compute_key_id(rsa.n, rsa.e, denomination, vintage),
        denomination=denomination,
        vintage=vintage,
        n=rsa.n,
        e=rsa.e,
        d=rsa.d,
        security_param=security_param,
        p=rsa.p,
        q=rsa.q,
        dp=rsa.dp,
        dq=rsa.dq,
        qinv=rsa.qinv,
    )


_system_rng = secrets.SystemRandom()


def blind(message, issuer_pub, rng=None, *, r=None):
    """Blind ``message`` for ``issuer_pub``.

    ``r`` forces the blinding factor (test hook); otherwise it is drawn from
    ``rng`` and resampled until coprime to n.
    """
    n = issuer_pub.n
    if r is None:
        rng = rng or _system_rng
        while True:
            r = rng.randrange(1, n)
            if gcd(r, n) == 1:
                break
    value = full_domain_hash(message, n) * kernels.powmod(r, issuer_pub.e, n) % n
    return (
        BlindedMessage(value, issuer_pub.key_id, issuer_pub.width),
        BlindingFactor(r, issuer_pub.key_id),
    )


def sign_blinded(blinded, issuer_priv):
    if blinded.key_id != issuer_priv.key_id:
        raise KeyMismatch("blinded message addressed to another issuer key")
    if not 0 <= blinded.value < issuer_priv.n:
        raise ValueError("blinded value out of range")
    return kernels.rsa_crt(
        blinded.value, issuer_priv.p, issuer_priv.q, issuer_priv.dp, issuer_priv.dq, issuer_priv.qinv
    )


def unblind(blind_signature, factor, issuer_pub):
    if factor.key_id != issuer_pub.key_id:
        raise KeyMismatch("blinding factor belongs to another issuer key")
    n = issuer_pub.n
    s = blind_signature * kernels.invert(factor.r, n) % n
    return TokenSignature(s, issuer_pub.key_id, issuer_pub.width)


def verify(message, sig, issuer_pub):
    if sig.key_id != issuer_pub.key_id:
        return False
    if not 0 <= sig.s < issuer_pub.n:
        return False
    return kernels.powmod(sig.s, issuer_pub.e, issuer_pub.n) == full_domain_hash(message, issuer_pub.n)
