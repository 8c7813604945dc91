import dataclasses

import pytest

from cbdc.config import DAY_MS, PolicyConfig
from cbdc.errors import (
    AlreadyClaimed, ConfigError, IdentificationRequired, InsufficientFunds, InsufficientReserve,
    InvalidToken, LimitExceeded, UnknownAccount, ValueMismatch,
)
from cbdc.harness import World
from cbdc.ledger import EntryType, LedgerState, execute
from cbdc.protocol import PaymentSubmission
from cbdc.scenario import AccountSpec
from support import deposit, mediate, mint, small_scenario


def quiet_world(**policy):
    w = World(small_scenario(policy=PolicyConfig(**policy)))
    for node in w.nodes.values():
        node.msb.submit = None
    return w


def test_withdrawal_cap_per_day():
    world = quiet_world(withdrawal_cap_daily=100)
    msb = world.nodes["msb0"].msb
    w = world.wallets["w1"]
    msb.request_withdrawal("alice", w.plan_withdrawal(64).blinded, 0)
    with pytest.raises(LimitExceeded):
        msb.request_withdrawal("alice", w.plan_withdrawal(64).blinded, 10)
    # a new day resets the counter
    msb.request_withdrawal("alice", w.plan_withdrawal(64).blinded, DAY_MS)


def test_withdrawal_checks_funds_and_reserve():
    world = quiet_world(withdrawal_cap_daily=10_000)
    msb = world.nodes["msb0"].msb
    w = world.wallets["w1"]
    with pytest.raises(InsufficientFunds):
        msb.request_withdrawal("alice", w.plan_withdrawal(5001).blinded, 0)
    msb.reserve = 10
    with pytest.raises(InsufficientReserve):
        msb.request_withdrawal("alice", w.plan_withdrawal(11).blinded, 0)
    with pytest.raises(UnknownAccount):
        msb.request_withdrawal("nobody", w.plan_withdrawal(1).blinded, 0)


def test_withdrawal_entry_hides_account():
    world = quiet_world()
    msb = world.nodes["msb0"].msb
    entry = msb.request_withdrawal("alice", world.wallets["w1"].plan_withdrawal(3).blinded, 0)
    assert entry.entry_type == EntryType.WITHDRAWAL
    assert b"alice" not in entry.raw
    assert entry.payload.account_commitment == msb.commitment("alice")


def test_deposit_cap_applies_to_basic_tier_only():
    accounts = (AccountSpec("alice", "msb0", 5000), AccountSpec("shop", "msb2", 0),
                AccountSpec("vip", "msb2", 0, tier="verified"))
    world = World(small_scenario(policy=PolicyConfig(deposit_cap_daily=50), accounts=accounts))
    for node in world.nodes.values():
        node.msb.submit = None
    w = world.wallets["w1"]
    mint(world, w, 200)
    deposit(world, w, "shop", 40)
    with pytest.raises(LimitExceeded):
        deposit(world, w, "shop", 20)
    mint(world, w, 100)
    deposit(world, w, "vip", 100)


def test_tampered_invoice_refused(world):
    w = world.wallets["w1"]
    mint(world, w, 20)
    msb = world.nodes["msb2"].msb
    invoice = msb.issue_invoice(10, "shop", 0)
    bundle = w.make_payment(10, invoice)
    altered = dataclasses.replace(invoice, amount=5)
    with pytest.raises(ValueMismatch):
        msb.receive_deposit(PaymentSubmission(altered, bundle.inputs, bundle.change), 0)
    elsewhere = world.nodes["msb1"].msb
    with pytest.raises(ValueMismatch):
        elsewhere.receive_deposit(PaymentSubmission(invoice, bundle.inputs, bundle.change), 0)
    # bundle authorised for another invoice does not verify here
    other = msb.issue_invoice(10, "shop", 0)
    with pytest.raises(ValueMismatch):
        msb.receive_deposit(PaymentSubmission(dataclasses.replace(other, amount=10, nonce=other.nonce),
                                              bundle.inputs[:0], bundle.change), 0)
    with pytest.raises(InvalidToken):
        msb.receive_deposit(PaymentSubmission(other, bundle.inputs, bundle.change), 0)
    entry = msb.receive_deposit(PaymentSubmission(invoice, bundle.inputs, bundle.change), 0)
    assert entry.nonce == invoice.nonce


def test_mediated_id_threshold():
    world = quiet_world(id_threshold=64)
    payer, payee = world.wallets["w1"], world.wallets["w2"]
    # the threshold applies to the value of the inputs, change included
    mint(world, payer, 32)
    entry, _, _ = mediate(world, payer, payee, "msb1", 32)
    assert not entry.payload.id_flag
    mint(world, payer, 64)
    with pytest.raises(IdentificationRequired):
        mediate(world, payer, payee, "msb1", 20)
    mint(world, payer, 64)
    entry, _, _ = mediate(world, payer, payee, "msb1", 64, id_info=b"passport")
    assert entry.payload.id_flag
    assert b"passport" not in entry.raw
    assert world.nodes["msb1"].msb.records[-1]["id_info"] == b"passport".hex()


def test_mediated_fee_deducted():
    world = quiet_world(mediated_fee=2)
    payer, payee = world.wallets["w1"], world.wallets["w2"]
    mint(world, payer, 40)
    entry, bundle, plan = mediate(world, payer, payee, "msb1", 8)
    assert entry.payload.fee == 2
    assert bundle.input_value == 8 + 2 + bundle.expected_change
    assert execute(LedgerState(world.genesis), entry).verdict.accepted


def test_disbursement_rules():
    sc = small_scenario(treasury=("msb3", 1000))
    world = World(sc)
    msb = world.nodes["msb3"].msb
    msb.submit = None
    w = world.wallets["w1"]
    with pytest.raises(IdentificationRequired):
        msb.disburse(b"claim-1", False, w.plan_withdrawal(10).blinded)
    entry = msb.disburse(b"claim-1", True, w.plan_withdrawal(10).blinded)
    assert execute(LedgerState(world.genesis), entry).verdict.accepted
    with pytest.raises(AlreadyClaimed):
        msb.disburse(b"claim-1", True, w.plan_withdrawal(10).blinded)
    with pytest.raises(InsufficientFunds):
        msb.disburse(b"claim-2", True, w.plan_withdrawal(1001).blinded)
    with pytest.raises(UnknownAccount):
        world.nodes["msb0"].msb.disburse(b"claim-3", True, w.plan_withdrawal(1).blinded)


def test_settlement_after_commit(world):
    msb = world.nodes["msb0"].msb
    state = LedgerState(world.genesis)
    entry = msb.request_withdrawal("alice", world.wallets["w1"].plan_withdrawal(30).blinded, 0)
    assert msb.accounts["alice"].held == 30
    record = execute(state, entry)
    msb.on_committed(record)
    acct = msb.accounts["alice"]
    assert (acct.balance, acct.held) == (4970, 0)
    assert msb.on_committed(record) is None


@pytest.mark.parametrize("field,value", [("withdrawal_cap_daily", -1), ("id_threshold", 0),
                                          ("day_ms", 0), ("mediated_fee", True), ("deposit_cap_daily", 1.5)])
def test_policy_validation(field, value):
    with pytest.raises(ConfigError):
        PolicyConfig(**{field: value})
    with pytest.raises(ConfigError):
        PolicyConfig.from_dict({"bogus": 1})
