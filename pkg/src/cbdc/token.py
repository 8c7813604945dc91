"""Bearer tokens, spend authorizations and the replicated spent-set.

A token is a fresh Ed25519 keypair whose id, SHA-256 of the verification
key, carries an issuer blind signature. Its value is implied by the issuer
key that certified it. Spending means signing a context that names exactly
one ledger entry; the spent-set catches a second spend.
"""
import hashlib
import secrets
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from cbdc import blindsig
from cbdc.blindsig import DEFAULT_DENOMINATIONS, TokenSignature
from cbdc.encoding import encode
from cbdc.errors import InvalidCertificate, InvalidDenomination

SCHEME = "ed25519"
_system_rng = secrets.SystemRandom()


def token_id_for(verification_key):
    return hashlib.sha256(verification_key).digest()


@dataclass(frozen=True, repr=False)
class TokenKeyPair:
    secret: bytes
    verification_key: bytes

    def __repr__(self):
        return f"TokenKeyPair(vk={self.verification_key.hex()[:16]})"

    @classmethod
    def from_secret(cls, secret):
        vk = Ed25519PrivateKey.from_private_bytes(secret).public_key().public_bytes_raw()
        return cls(secret, vk)

    def sign(self, message):
        return Ed25519PrivateKey.from_private_bytes(self.secret).sign(message)


@dataclass(frozen=True)
class Certificate:
    token_id: bytes
    signature: TokenSignature

    @property
    def key_id(self):
        return self.signature.key_id

    def to_wire(self):
        return (self.token_id, self.signature.to_wire())

    @classmethod
    def from_wire(cls, wire):
        token_id, sig = wire
        return cls(token_id, TokenSignature.from_wire(sig))


@dataclass(frozen=True, repr=False)
class Token:
    keypair: TokenKeyPair
    certificate: Certificate

    def __post_init__(self):
        if token_id_for(self.keypair.verification_key) != self.certificate.token_id:
            raise InvalidCertificate("certificate names a different token id")

    def __repr__(self):
        return f"Token(id={self.token_id.hex()[:16]}, key_id={self.key_id.hex()[:16]})"

    @property
    def token_id(self):
        return self.certificate.token_id

    @property
    def key_id(self):
        return self.certificate.key_id

    @property
    def verification_key(self):
        return self.keypair.verification_key


@dataclass(frozen=True)
class SpendContext:
    dest_msb_id: str
    nonce: int
    amount: int
    logical_time: int

    def to_wire(self):
        return ("spend-context", self.dest_msb_id, self.nonce, self.amount, self.logical_time)

    @classmethod
    def from_wire(cls, wire):
        tag, dest, nonce, amount, logical_time = wire
        if tag != "spend-context":
            raise ValueError("not a spend context")
        return cls(dest, nonce, amount, logical_time)

    def digest(self):
        return hashlib.sha256(encode(self.to_wire())).digest()


@dataclass(frozen=True)
class SpendAuthorization:
    token_id: bytes
    context_hash: bytes
    signature: bytes

    def to_wire(self):
        return (self.token_id, self.context_hash, self.signature)

    @classmethod
    def from_wire(cls, wire):
        return cls(*wire)


@dataclass(frozen=True)
class SpentInput:
    """One token as it appears among the inputs of a ledger entry."""

    token_id: bytes
    verification_key: bytes
    certificate: Certificate
    authorization: SpendAuthorization

    @property
    def key_id(self):
        return self.certificate.key_id

    def to_wire(self):
        return (self.token_id, self.verification_key, self.certificate.to_wire(), self.authorization.to_wire())

    @classmethod
    def from_wire(cls, wire):
        token_id, vk, cert, auth = wire
        return cls(token_id, vk, Certificate.from_wire(cert), SpendAuthorization.from_wire(auth))


def new_pretoken(denomination, vintage, rng=None, denominations=DEFAULT_DENOMINATIONS):
    if denomination not in denominations:
        raise InvalidDenomination(f"{denomination} not in denomination set")
    rng = rng or _system_rng
    keypair = TokenKeyPair.from_secret(rng.randbytes(32))
    return keypair, token_id_for(keypair.verification_key)


def authorize_spend(token, context, issuer_pub):
    if not blindsig.verify(token.token_id, token.certificate.signature, issuer_pub):
        raise InvalidCertificate("token certificate does not verify")
    context_hash = context.digest()
    return SpendAuthorization(token.token_id, context_hash, token.keypair.sign(context_hash))


def ed25519_verify(verification_key, signature, message):
    try:
        Ed25519PublicKey.from_public_bytes(verification_key).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


def verify_spend(token_id, verification_key, certificate, authorization, context, issuer_pub):
    if token_id_for(verification_key) != token_id:
        return False
    if certificate.token_id != token_id or authorization.token_id != token_id:
        return False
    if not blindsig.verify(token_id, certificate.signature, issuer_pub):
        return False
    context_hash = context.digest()
    if authorization.context_hash != context_hash:
        return False
    return ed25519_verify(verification_key, authorization.signature, context_hash)


class SpentSet:
    """Append-only set of consumed token ids.

    ``accumulator`` folds insertions in order, so replicas that applied the
    same log hold the same value.
    """

    def __init__(self):
        self._ids = set()
        self.accumulator = b"\x00" * 32

    def __contains__(self, token_id):
        return token_id in self._ids

    def __len__(self):
        return len(self._ids)

    def __iter__(self):
        return iter(self._ids)

    def add(self, token_id):
        if token_id in self._ids:
            return False
        self._ids.add(token_id)
        self.accumulator = hashlib.sha256(self.accumulator + token_id).digest()
        return True

    def copy(self):
        other = SpentSet()
        other._ids = set(self._ids)
        other.accumulator = self.accumulator
        return other


def record_spent(spent_set, token_id):
    return spent_set.add(token_id)
