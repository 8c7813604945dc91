import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbdc.errors import BadSignature, DecodeError, InsufficientBalance, UnrepresentableAmount
from cbdc.protocol import Invoice
from cbdc.token import verify_spend
from cbdc.wallet import Wallet, greedy_split, minimal_cover
from support import mint


def cover_oracle(groups, amount):
    """Exhaustive search for the least reachable total >= amount."""
    best = None
    for counts in itertools.product(*(range(a + 1) for _, a in groups)):
        total = sum(v * c for (v, _), c in zip(groups, counts))
        if total >= amount and (best is None or total < best):
            best = total
    return best


groups_st = st.lists(
    st.tuples(st.sampled_from([1, 2, 3, 5, 7, 10, 25, 50]), st.integers(min_value=0, max_value=4)),
    min_size=1, max_size=4, unique_by=lambda g: g[0],
)


@given(groups_st, st.integers(min_value=1, max_value=200))
def test_minimal_cover_matches_bruteforce(groups, amount):
    found = minimal_cover(groups, amount)
    expected = cover_oracle(groups, amount)
    if expected is None:
        assert found is None
        return
    total, counts = found
    assert total == expected
    assert all(0 <= c <= a for c, (_, a) in zip(counts, groups))
    assert sum(c * v for c, (v, _) in zip(counts, groups)) == total


def test_minimal_cover_frozen_cases():
    assert minimal_cover([(25, 1), (5, 3), (1, 0)], 12) == (15, [0, 3, 0])
    assert minimal_cover([(4, 2), (3, 1)], 5) == (7, [1, 1])
    assert minimal_cover([(2, 1)], 3) is None


@given(st.integers(min_value=1, max_value=10_000))
def test_greedy_split_sums(amount):
    denoms = (1, 5, 25, 100)
    parts = greedy_split(amount, denoms)
    assert sum(parts) == amount
    assert parts == sorted(parts, reverse=True)
    # canonical coin system: greedy is count-optimal
    assert len(parts) == amount // 100 + (amount % 100) // 25 + (amount % 25) // 5 + amount % 5


def test_greedy_split_errors():
    with pytest.raises(UnrepresentableAmount):
        greedy_split(0, (1,))
    with pytest.raises(UnrepresentableAmount):
        greedy_split(3, (2, 4))


def test_withdraw_and_spend(world):
    w = world.wallets["w1"]
    tokens = mint(world, w, 13)
    assert w.balance == 13 and len(tokens) == 3  # 8 + 4 + 1
    invoice = Invoice("msb2", 7, 10, 0)
    bundle = w.make_payment(10, invoice)
    assert bundle.input_value >= 10
    assert bundle.expected_change == bundle.input_value - 10
    if bundle.expected_change:
        assert len(bundle.change) == len(greedy_split(bundle.expected_change, w.denominations))
    keys = {k.key_id: k for k in world.genesis.issuer_keys}
    ctx = invoice.context(bundle.input_value)
    for spent in bundle.inputs:
        assert verify_spend(spent.token_id, spent.verification_key, spent.certificate, spent.authorization,
                            ctx, keys[spent.certificate.key_id])
    assert w.balance == 13 - bundle.input_value


def test_insufficient_balance(world):
    w = world.wallets["w1"]
    mint(world, w, 5)
    with pytest.raises(InsufficientBalance):
        w.make_payment(6, Invoice("msb2", 1, 6, 0))
    assert w.balance == 5


def test_refund_restores_tokens(world):
    w = world.wallets["w1"]
    mint(world, w, 12)
    bundle = w.make_payment(9, Invoice("msb2", 1, 9, 0))
    w.refund(bundle)
    assert w.balance == 12
    assert bundle.change_handle is None or bundle.change_handle not in w.pending


def test_finalize_is_all_or_nothing(world):
    w = world.wallets["w1"]
    plan = w.plan_withdrawal(7)
    sigs = world.bank.sign_withdrawal("msb0", list(plan.blinded))
    broken = list(sigs)
    broken[-1] = broken[0]
    with pytest.raises(BadSignature):
        w.finalize_withdrawal(plan.handle, broken)
    assert w.balance == 0 and plan.handle in w.pending
    with pytest.raises(BadSignature):
        w.finalize_withdrawal(plan.handle, sigs[:-1])
    w.finalize_withdrawal(plan.handle, sigs)
    assert w.balance == 7 and plan.handle not in w.pending


def test_spend_delay_flags_risk(world):
    w = world._new_wallet("slow", spend_delay_ms=1000)
    mint(world, w, 4)
    bundle = w.make_payment(4, Invoice("msb2", 1, 4, 10))
    assert bundle.risk_flagged and w.risk_log[0]["risk"] == "spend-delay"


def test_save_load_roundtrip(world, tmp_path):
    w = world.wallets["w1"]
    mint(world, w, 21)
    path = tmp_path / "w.bin"
    w.save(path, "hunter2")
    back = Wallet.load(path, "hunter2", world.genesis.issuer_keys)
    assert back.balance == 21
    assert sorted(h.token.token_id for h in back.tokens) == sorted(h.token.token_id for h in w.tokens)
    with pytest.raises(DecodeError):
        Wallet.load(path, "wrong", world.genesis.issuer_keys)
    raw = path.read_bytes()
    path.write_bytes(b"NOTAWALL" + raw[8:])
    with pytest.raises(DecodeError):
        Wallet.load(path, "hunter2", world.genesis.issuer_keys)


def test_import_rejects_forged_certificate(world):
    w = world.wallets["w1"]
    mint(world, w, 1)
    ((secret, cert),) = w.export_token_secrets()
    token_id, (key_id, sig) = cert
    forged = (token_id, (key_id, sig[:-1] + bytes([sig[-1] ^ 1])))
    with pytest.raises(BadSignature):
        world.wallets["w2"].import_tokens([(secret, forged)])
