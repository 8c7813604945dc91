"""Validator signing keys.

Ledger entries are signed by the submitting MSB with RSA PKCS#1 v1.5 over
SHA-256: signing happens once per entry but every replica verifies, and
RSA verification is the cheaper side. Consensus messages use Ed25519.
Both keys derive deterministically from a seed.
"""
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from cbdc.drbg import HashDrbg
from cbdc.rsakeys import generate_rsa

ENTRY_SCHEME = "rsa-pkcs1v15-sha256"
CONSENSUS_SCHEME = "ed25519"

_PKCS1 = padding.PKCS1v15()
_SHA256 = hashes.SHA256()


@dataclass(frozen=True)
class RsaPublic:
    n: int
    e: int

    def to_wire(self):
        width = (self.n.bit_length() + 7) // 8
        return (self.n.to_bytes(width, "big"), self.e)

    @classmethod
    def from_wire(cls, wire):
        n_raw, e = wire
        return cls(int.from_bytes(n_raw, "big"), e)


class EntrySigner:
    def __init__(self, private):
        self._private = private
        self.public = RsaPublic(private.n, private.e)
        self._key = rsa.RSAPrivateNumbers(
            p=private.p,
            q=private.q,
            d=private.d,
            dmp1=private.dp,
            dmq1=private.dq,
            iqmp=private.qinv,
            public_numbers=rsa.RSAPublicNumbers(private.e, private.n),
        ).private_key()

    @classmethod
    def from_seed(cls, seed, label, bits):
        return cls(generate_rsa(bits, HashDrbg(seed, ("entry-key", label, bits))))

    def sign(self, message):
        return self._key.sign(message, _PKCS1, _SHA256)


@lru_cache(maxsize=4096)
def _rsa_public_key(n, e):
    return rsa.RSAPublicNumbers(e, n).public_key()


def entry_verify(public, signature, message):
    try:
        _rsa_public_key(public.n, public.e).verify(signature, message, _PKCS1, _SHA256)
    except (InvalidSignature, ValueError):
        return False
    return True


class ConsensusSigner:
    def __init__(self, secret):
        self._key = Ed25519PrivateKey.from_private_bytes(secret)
        self.public = self._key.public_key().public_bytes_raw()

    @classmethod
    def from_seed(cls, seed, label):
        return cls(HashDrbg(seed, ("consensus-key", label)).randbytes(32))

    def sign(self, message):
        return self._key.sign(message)


@lru_cache(maxsize=4096)
def _ed_public_key(raw):
    return Ed25519PublicKey.from_public_bytes(raw)


@lru_cache(maxsize=1 << 16)
def consensus_verify(public, signature, message):
    # memoized: view changes carry the same signed votes to every replica, often more than once
    try:
        _ed_public_key(public).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True
