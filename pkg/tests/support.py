"""Builders shared by the test modules."""
from cbdc.config import PolicyConfig
from cbdc.protocol import MediationRequest, PaymentSubmission
from cbdc.scenario import AccountSpec, Scenario, WalletSpec

SMALL_DENOMS = (1, 2, 4, 8, 16, 32, 64, 128)


def small_scenario(validators=4, policy=None, accounts=None, wallets=("w1", "w2"), **kw):
    accounts = accounts or (
        AccountSpec("alice", "msb0", 5000),
        AccountSpec("bob", "msb1", 5000),
        AccountSpec("shop", "msb2", 0),
    )
    return Scenario(
        name="unit",
        seed=kw.pop("seed", 99),
        validators=validators,
        denominations=kw.pop("denominations", SMALL_DENOMS),
        accounts=tuple(accounts),
        wallets=tuple(WalletSpec(w) for w in wallets),
        policy=policy or PolicyConfig(),
        **kw,
    )


def mint(world, wallet, amount, vintage=None):
    """Issue ``amount`` straight from the central bank into ``wallet`` (no ledger)."""
    plan = wallet.plan_withdrawal(amount, vintage)
    sigs = world.bank.sign_withdrawal("msb0", list(plan.blinded))
    return wallet.finalize_withdrawal(plan.handle, sigs)




def deposit(world, wallet, account, amount, now=0):
    """Signed deposit entry for ``amount`` from ``wallet`` into ``account``; returns (entry, bundle)."""
    msb = world.nodes[world.account_home[account]].msb
    invoice = msb.issue_invoice(amount, account, now)
    bundle = wallet.make_payment(amount, invoice, now)
    return msb.receive_deposit(PaymentSubmission(invoice, bundle.inputs, bundle.change), now), bundle


def mediate(world, payer, payee, msb_id, amount, id_info=None, now=0):
    msb = world.nodes[msb_id].msb
    plan = payee.plan_withdrawal(amount)
    invoice = msb.issue_invoice(amount, None, now)
    bundle = payer.make_payment(amount, invoice, now, fee=world.genesis.policy.mediated_fee)
    request = MediationRequest(invoice, bundle.inputs, plan.blinded, bundle.change, id_info)
    return msb.mediate_transfer(request, now), bundle, plan


def exchange_actions(count, start=0, spacing_ms=10, validators=4):
    """Reserve-exchange entries spread over every MSB; cheap consensus traffic."""
    from cbdc.scenario import Action
    return tuple(
        Action(start + i * spacing_ms, "exchange",
               {"msb": f"msb{i % validators}", "amount": 1 + i, "direction": "to_cbdc"}, i)
        for i in range(count)
    )
