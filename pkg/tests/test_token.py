import random

import pytest

from cbdc import blindsig
from cbdc.errors import InvalidCertificate, InvalidDenomination
from cbdc.token import (
    Certificate,
    SpendContext,
    SpentSet,
    Token,
    TokenKeyPair,
    authorize_spend,
    new_pretoken,
    token_id_for,
    verify_spend,
)


def issue(key, rng):
    keypair, token_id = new_pretoken(key.denomination, key.vintage, rng, (1, 5, 25))
    blinded, factor = blindsig.blind(token_id, key.public, rng)
    sig = blindsig.unblind(blindsig.sign_blinded(blinded, key), factor, key.public)
    return Token(keypair, Certificate(token_id, sig))


@pytest.fixture
def token(issuer_keys):
    return issue(issuer_keys[5], random.Random(1))


def test_token_id_is_hash_of_verification_key(token):
    assert token.token_id == token_id_for(token.verification_key)
    assert len(token.token_id) == 32


def test_certificate_must_name_the_token(issuer_keys, token):
    other = TokenKeyPair.from_secret(b"\x07" * 32)
    with pytest.raises(InvalidCertificate):
        Token(other, token.certificate)


def test_spend_authorization_binds_context(issuer_keys, token):
    key = issuer_keys[5].public
    ctx = SpendContext("msb1", 17, 5, 1000)
    auth = authorize_spend(token, ctx, key)
    args = (token.token_id, token.verification_key, token.certificate, auth)
    assert verify_spend(*args, ctx, key)
    for altered in (SpendContext("msb2", 17, 5, 1000), SpendContext("msb1", 18, 5, 1000),
                    SpendContext("msb1", 17, 6, 1000), SpendContext("msb1", 17, 5, 1001)):
        assert not verify_spend(*args, altered, key)


def test_spend_with_wrong_issuer_key_fails(issuer_keys, token):
    ctx = SpendContext("msb1", 1, 5, 0)
    auth = authorize_spend(token, ctx, issuer_keys[5].public)
    assert not verify_spend(token.token_id, token.verification_key, token.certificate, auth, ctx,
                            issuer_keys[25].public)


def test_authorize_refuses_bad_certificate(issuer_keys, token):
    with pytest.raises(InvalidCertificate):
        authorize_spend(token, SpendContext("m", 1, 1, 0), issuer_keys[1].public)


def test_pretoken_denomination_checked():
    with pytest.raises(InvalidDenomination):
        new_pretoken(3, 2025, random.Random(0), (1, 5, 25))


def test_certificate_wire_roundtrip(token):
    assert Certificate.from_wire(token.certificate.to_wire()) == token.certificate


def test_spent_set_accumulator_is_order_sensitive():
    a, b = SpentSet(), SpentSet()
    assert a.add(b"x") and a.add(b"y")
    assert not a.add(b"x")
    b.add(b"y")
    b.add(b"x")
    assert len(a) == len(b) == 2 and b"x" in a
    assert a.accumulator != b.accumulator
    c = a.copy()
    c.add(b"z")
    assert b"z" not in a
