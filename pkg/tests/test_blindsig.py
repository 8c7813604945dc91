import hashlib
import random
from math import gcd

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbdc import blindsig
from cbdc.blindsig import (
    BlindingFactor,
    TokenSignature,
    blind,
    full_domain_hash,
    keygen,
    sign_blinded,
    unblind,
    verify,
)
from cbdc.errors import InvalidDenomination, KeyMismatch, WeakParameter


def fdh_oracle(message, n):
    """Independent restatement: SHA-256(tag || attempt || block || m) blocks, top-bit trimmed, reject >= n."""
    bits = n.bit_length()
    size = (bits + 7) // 8
    for attempt in range(1 << 16):
        out = b""
        block = 0
        while len(out) < size:
            out += hashlib.sha256(b"cbdc-fdh-sha256\x00" + attempt.to_bytes(4, "big") + block.to_bytes(4, "big")
                                  + message).digest()
            block += 1
        x = int.from_bytes(out[:size], "big") >> (8 * size - bits)
        if x < n:
            return x
    raise AssertionError("no candidate")


def test_fdh_frozen_values():
    # computed by fdh_oracle; the second modulus forces two rejections
    n = (2**127 - 1) * (2**89 - 1)
    assert full_domain_hash(b"abc", n) == 63335310527795983398488954581388291903735634545563510113263594640
    assert full_domain_hash(b"token", 2**64 + 1) == 10179242729142256939


@given(st.binary(max_size=64), st.integers(2**16, 2**600))
def test_fdh_matches_oracle(message, n):
    assert full_domain_hash(message, n) == fdh_oracle(message, n)


def test_keygen_deterministic_and_frozen(issuer_keys):
    k = issuer_keys[1]
    assert k.key_id.hex() == "b5634b839180ecf9012e1da7f4ea168d6991d52faf674eec189a2d833acb4d78"
    assert keygen(1, 2025, 512, 1234, denominations=(1, 5, 25)).n == k.n
    assert keygen(1, 2025, 512, 1235, denominations=(1, 5, 25)).n != k.n
    assert k.n.bit_length() == 512 and k.e == 65537
    assert (k.e * k.d) % ((k.p - 1) * (k.q - 1) // gcd(k.p - 1, k.q - 1)) == 1


def test_keys_differ_per_denomination(issuer_keys):
    assert len({k.n for k in issuer_keys.values()}) == 3
    assert len({k.key_id for k in issuer_keys.values()}) == 3


@pytest.mark.parametrize("bits,profile", [(510, "test"), (511, "test"), (1024, "production")])
def test_weak_parameters_rejected(bits, profile):
    with pytest.raises(WeakParameter):
        keygen(1, 2025, bits, 1, profile=profile)


def test_unknown_denomination():
    with pytest.raises(InvalidDenomination):
        keygen(3, 2025, 512, 1)


@given(st.binary(min_size=32, max_size=32), st.integers(0, 2))
def test_roundtrip(issuer_keys, message, which):
    key = issuer_keys[(1, 5, 25)[which]]
    blinded, factor = blind(message, key.public, random.Random(message))
    sig = unblind(sign_blinded(blinded, key), factor, key.public)
    assert verify(message, sig, key.public)
    assert not verify(message + b"x", sig, key.public)


def test_signature_is_plain_fdh_rsa(issuer_keys):
    key = issuer_keys[5]
    m = b"m" * 32
    blinded, factor = blind(m, key.public, r=12345)
    sig = unblind(sign_blinded(blinded, key), factor, key.public)
    assert sig.s == pow(fdh_oracle(m, key.n), key.d, key.n)


def test_blinded_value_hides_message(issuer_keys):
    key = issuer_keys[1]
    m = b"\x01" * 32
    a, _ = blind(m, key.public, r=2)
    b, _ = blind(m, key.public, r=3)
    assert a.value != b.value != full_domain_hash(m, key.n)


# Upper 1% point of chi-square with 15 degrees of freedom.
CHI2_15_99 = 30.578


def test_blinded_values_uniform_in_low_bits(issuer_keys):
    key = issuer_keys[1]
    rng = random.Random(2024)
    m = b"\x07" * 32
    counts = [0] * 16
    for _ in range(10_000):
        blinded, _ = blind(m, key.public, rng)
        counts[blinded.value & 0xF] += 1
    expected = 10_000 / 16
    stat = sum((c - expected) ** 2 / expected for c in counts)
    assert stat < CHI2_15_99


def test_signature_under_other_key_rejected(issuer_keys):
    k1, k5 = issuer_keys[1], issuer_keys[5]
    m = b"\x02" * 32
    blinded, factor = blind(m, k1.public, r=7)
    sig = unblind(sign_blinded(blinded, k1), factor, k1.public)
    assert not verify(m, sig, k5.public)
    forged = TokenSignature(sig.s, k5.key_id, sig.width)
    assert not verify(m, forged, k5.public)


def test_key_mismatch_errors(issuer_keys):
    k1, k5 = issuer_keys[1], issuer_keys[5]
    blinded, factor = blind(b"x" * 32, k1.public, r=5)
    with pytest.raises(KeyMismatch):
        sign_blinded(blinded, k5)
    with pytest.raises(KeyMismatch):
        unblind(1, BlindingFactor(5, k1.key_id), k5.public)


def test_out_of_range_signature_rejected(issuer_keys):
    key = issuer_keys[1]
    assert not verify(b"x", TokenSignature(key.n, key.key_id, 64), key.public)


def test_public_key_wire_checks_key_id(issuer_keys):
    pub = issuer_keys[25].public
    assert blindsig.IssuerPublicKey.from_wire(pub.to_wire()) == pub
    key_id, d, v, n, e = pub.to_wire()
    with pytest.raises(KeyMismatch):
        blindsig.IssuerPublicKey.from_wire((key_id, d, v + 1, n, e))
