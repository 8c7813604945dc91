"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``. The statistical
and scale checks take a few minutes on one core.
"""
import dataclasses
import logging
import random
import time

import pytest

from cbdc import blindsig
from cbdc.config import PolicyConfig
from cbdc.encoding import decode, encode
from cbdc.harness import World, bench, double_spend_workload, fuzz_scenario, run_scenario
from cbdc.ledger import EntryType, LedgerEntry, MediatedTransfer, Reason, execute, replay
from cbdc.netsim import Partition, SimConfig
from cbdc.regulator import monte_carlo
from cbdc.scenario import Action, ConsensusParams, Scenario, bundled_scenarios, load_scenario
from cbdc.token import new_pretoken
from support import mint, small_scenario


@pytest.fixture
def verdict(pytestconfig):
    reporter = pytestconfig.pluginmanager.getplugin("terminalreporter")

    def emit(number, ok, detail):
        line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}"
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)
        assert ok, line

    return emit


@pytest.fixture(autouse=True)
def quiet_logs():
    # byzantine runs log every detected equivocation
    logging.disable(logging.WARNING)
    yield
    logging.disable(logging.NOTSET)


# -- 1 -------------------------------------------------------------------------------


def test_1_blind_signature_roundtrip(verdict):
    start = time.perf_counter()
    denoms = (1, 5, 25)
    rng = random.Random(2025)
    verified = total = 0
    forged_accepts = 0
    keys = [blindsig.keygen(d, 2025, 512, 77, denominations=denoms) for d in denoms]
    for kp in keys:
        for _ in range(1000):
            _, message = new_pretoken(kp.denomination, 2025, rng, denoms)
            blinded, factor = blindsig.blind(message, kp.public, rng)
            sig = blindsig.unblind(blindsig.sign_blinded(blinded, kp), factor, kp.public)
            verified += blindsig.verify(message, sig, kp.public)
            total += 1
    for i in range(10_000):
        kp = keys[i % 3]
        forged = blindsig.TokenSignature(rng.randrange(kp.n), kp.key_id, kp.public.width)
        forged_accepts += blindsig.verify(rng.randbytes(32), forged, kp.public)
    elapsed = time.perf_counter() - start
    ok = verified == total == 3000 and forged_accepts == 0 and elapsed < 30
    verdict(1, ok, f"{verified}/{total} verified, {forged_accepts}/10000 forgeries accepted, {elapsed:.1f}s")


# -- 2 -------------------------------------------------------------------------------


def test_2_double_spend(verdict):
    scenario, duplicates = double_spend_workload(deposits=10_000, duplicate_rate=0.05, seed=11)
    world = World(scenario).run()
    ledger = world.reference().replica.ledger
    deposits = [r for r in ledger.records if r.entry.entry_type == EntryType.DEPOSIT]

    bad_pairs = 0
    for index in duplicates:
        outcomes = sorted((world.outcomes.get(index, "missing"), world.outcomes.get(-index - 1, "missing")))
        if outcomes[0] != "Accept" or not outcomes[1].startswith(f"Reject:{Reason.DOUBLE_SPEND}"):
            bad_pairs += 1

    spent_by = {}
    reused = 0
    for record in ledger.records:
        if record.verdict.accepted:
            for item in record.entry.payload.inputs:
                reused += item.token_id in spent_by
                spent_by[item.token_id] = record.height

    credited = {}
    for record in deposits:
        if record.verdict.accepted:
            key = (record.entry.submitting_msb_id, record.entry.payload.account_commitment)
            credited[key] = credited.get(key, 0) + record.entry.payload.amount
    mismatched = 0
    for spec in scenario.accounts:
        if spec.account_id.startswith("shop"):
            msb = world.nodes[spec.msb].msb
            expected = credited.get((spec.msb, msb.commitment(spec.account_id)), 0)
            mismatched += msb.accounts[spec.account_id].balance != expected

    submitted = sum(1 for a in scenario.script if a.kind == "pay") + 2 * len(duplicates)
    rejects = sum(1 for r in deposits if r.verdict.reason == Reason.DOUBLE_SPEND)
    ok = (submitted == 10_000 and len(deposits) == 10_000 and bad_pairs == 0 and reused == 0
          and mismatched == 0 and rejects >= len(duplicates) and not world.flows)
    verdict(2, ok, f"{len(deposits)} deposits, {len(duplicates)} duplicate pairs, {bad_pairs} bad pairs, "
                   f"{rejects} DoubleSpend rejects, {reused} tokens spent twice, {mismatched} mis-credited accounts")


# -- 3 -------------------------------------------------------------------------------


def conservation_gaps(world):
    """Per (denomination, vintage): ledger and issuer issued-minus-redeemed vs wallet holdings."""
    ledger = world.reference().replica.ledger
    slots = set(ledger.issued) | set(ledger.redeemed)
    bank = world.bank
    holdings = world.wallet_holdings()
    gaps = []
    for slot in sorted(slots | set(holdings)):
        on_ledger = ledger.issued.get(slot, 0) - ledger.redeemed.get(slot, 0)
        at_bank = bank.issued.get(slot, 0) - bank.redeemed.get(slot, 0)
        held = holdings.get(slot, 0)
        if not on_ledger == at_bank == held:
            gaps.append((slot, on_ledger, at_bank, held))
    if world.flows:
        gaps.append(("unsettled", len(world.flows)))
    return gaps


def test_3_conservation(verdict):
    problems = {}
    for path in bundled_scenarios():
        world, _ = run_scenario(load_scenario(path))
        gaps = conservation_gaps(world)
        if gaps:
            problems[path.stem] = gaps
    fuzz = fuzz_scenario(10_000, seed=3)
    world = World(fuzz).run()
    gaps = conservation_gaps(world)
    if gaps:
        problems["fuzz"] = gaps
    accepted = sum(1 for o in world.outcomes.values() if o == "Accept")
    verdict(3, not problems, f"{len(bundled_scenarios())} bundled scenarios + 10000-action fuzz "
                            f"({accepted} committed), violations: {problems or 'none'}")


# -- 4 -------------------------------------------------------------------------------


def adversarial_run(n, seed):
    rng = random.Random(seed)
    ids = [f"msb{i}" for i in range(n)]
    mute = rng.choice(ids[1:])
    isolated = rng.choice([v for v in ids if v != mute])
    start = rng.randrange(0, 400)
    partition = Partition(start, start + rng.randrange(100, 800), frozenset({isolated}),
                          frozenset(set(ids) - {isolated}))
    sc = Scenario(name=f"safety-{n}-{seed}", seed=1, validators=n,
                  network=SimConfig(seed=seed, byzantine={"msb0": "equivocate", mute: "mute"},
                                    partitions=(partition,)),
                  consensus=ConsensusParams(timeout_ms=100, batch_size=4, window=4), settle_ms=2000)
    actions = tuple(Action(5 * i, "exchange", {"msb": ids[i % n], "amount": 1 + i, "direction": "to_cbdc"}, i)
                    for i in range(6))
    return World(sc).run(actions)


def crash_run(n, seed):
    rng = random.Random(seed)
    ids = [f"msb{i}" for i in range(n)]
    crash_at = rng.randrange(0, 150)
    # the timeout must exceed one commit round (about three 50 ms hops) for liveness to hold
    sc = Scenario(name=f"crash-{n}-{seed}", seed=1, validators=n, network=SimConfig(seed=seed),
                  consensus=ConsensusParams(timeout_ms=300, batch_size=4, window=4), settle_ms=5000)
    actions = [Action(crash_at, "crash", {"node": "msb0"}, 0)]
    actions += [Action(10 * i, "exchange", {"msb": ids[1 + i % (n - 1)], "amount": 1 + i, "direction": "to_cbdc"},
                       i + 1) for i in range(12)]
    world = World(sc).run(tuple(actions))
    live = [world.nodes[v] for v in ids[1:]]
    heights = {node.replica.ledger.height for node in live}
    views = max(node.replica.view for node in live)
    return heights == {12} and views <= 3, views


def test_4_consensus_safety_and_liveness(verdict):
    conflicts = {}
    caught = 0
    for n in (4, 5):
        for seed in range(1000):
            world = adversarial_run(n, seed)
            if world.safety_violations():
                conflicts[(n, seed)] = world.safety_violations()
            caught += any(world.nodes[v].replica.evidence for v in world.honest)
    stalled = []
    worst_view = 0
    for n in (4, 5):
        for seed in range(1000):
            live, views = crash_run(n, seed)
            worst_view = max(worst_view, views)
            if not live:
                stalled.append((n, seed, views))
    ok = not conflicts and not stalled and caught > 0
    verdict(4, ok, f"2000 adversarial runs: {len(conflicts)} with conflicting commits, equivocation proven in "
                   f"{caught}; 2000 leader-crash runs: {len(stalled)} failed to resume within 3 view changes "
                   f"(worst view {worst_view})")


# -- 5 -------------------------------------------------------------------------------


def test_5_unlinkability(verdict):
    wallets, trials = 100, 1000
    uniform = monte_carlo("timing", wallets=wallets, trials=trials, seed=5)
    zero = monte_carlo("timing", wallets=wallets, trials=trials, seed=6, discipline="zero")
    chance, sigma = uniform["chance"], uniform["sigma"]
    within = abs(uniform["accuracy"] - chance) <= 3 * sigma
    control = zero["accuracy"] > 5 / wallets
    verdict(5, within and control, f"uniform delays: accuracy {uniform['accuracy']:.5f} vs 1/W={chance:.4f} "
                                   f"+/- 3*{sigma:.4f}; zero-delay control {zero['accuracy']:.3f} > {5 / wallets}")


# -- 6 -------------------------------------------------------------------------------


def test_6_throughput(verdict):
    start = time.perf_counter()
    result = bench(duration_ms=5000, batch=64, validators=4, seed=0)
    runtime = time.perf_counter() - start
    ok = result.rate >= 1000 and runtime <= 60
    verdict(6, ok, f"{result.rate:.0f} committed entries/s ({result.committed} entries, "
                   f"{result.sequences} sequences), runtime {runtime:.1f}s")


# -- 7 -------------------------------------------------------------------------------


def test_7_determinism(verdict):
    differing = []
    for path in bundled_scenarios():
        runs = []
        for _ in range(2):
            world = World(load_scenario(path)).run()
            runs.append((world.reference().replica.ledger.state_hash(), world.sim.export_trace()))
        if runs[0] != runs[1]:
            differing.append(path.stem)
    verdict(7, not differing, f"{len(bundled_scenarios())} scenarios run twice, differing: {differing or 'none'}")


# -- 8 -------------------------------------------------------------------------------


def leaves(value):
    if isinstance(value, tuple):
        for item in value:
            yield from leaves(item)
    else:
        yield value


def privacy_findings(world, scenario):
    names = {a.account_id for a in scenario.accounts} | {w.wallet_id for w in scenario.wallets} | {"treasury"}
    name_bytes = {n.encode() for n in names}
    factors = set(world.blinding_factors)
    factor_bytes = set()
    for r in factors:
        for width in (64, 128, 256, 512):
            if r.bit_length() <= 8 * width:
                factor_bytes.add(r.to_bytes(width, "big"))
    findings = []

    def scan(label, raw):
        for needle in name_bytes:
            if needle in raw:
                findings.append((label, needle.decode()))
        for needle in factor_bytes:
            if needle in raw:
                findings.append((label, "blinding factor bytes"))
        # field enumeration over the decoded structure
        for leaf in leaves(decode(raw)):
            if isinstance(leaf, str) and leaf in names:
                findings.append((label, f"field {leaf}"))
            elif isinstance(leaf, int) and not isinstance(leaf, bool) and leaf in factors:
                findings.append((label, "blinding factor field"))
            elif isinstance(leaf, bytes) and leaf in factor_bytes:
                findings.append((label, "blinding factor field"))

    for session, origin, raw in world.transcripts:
        if origin == "wallet":
            scan(f"message {session}", raw)
    for record in world.reference().replica.ledger.records:
        scan(f"entry {record.height}", record.entry.raw)
    messages = sum(1 for t in world.transcripts if t[1] == "wallet")
    return findings, messages, len(factors)


def test_privacy_scan_catches_planted_leaks():
    scenario = load_scenario(bundled_scenarios()[0])
    world = World(scenario).run()

    account = scenario.accounts[0].account_id
    world.transcripts.append((0, "wallet", encode(("note", account))))
    world.transcripts.append((0, "wallet", encode(("blob", world.blinding_factors[0]))))
    found, _, _ = privacy_findings(world, scenario)
    kinds = {what for _, what in found}
    assert account in kinds and "blinding factor field" in kinds


def test_8_structural_privacy(verdict):
    findings = {}
    messages = entries = factors = 0
    for path in bundled_scenarios():
        scenario = load_scenario(path)
        world = World(scenario).run()
        found, n_msgs, n_factors = privacy_findings(world, scenario)
        messages += n_msgs
        factors += n_factors
        entries += world.reference().replica.ledger.height
        if found:
            findings[path.stem] = found[:5]
    ok = not findings and messages > 0 and factors > 0
    verdict(8, ok, f"scanned {messages} wallet messages and {entries} ledger entries against {factors} "
                   f"blinding factors and all account/wallet ids: {findings or 'nothing found'}")


# -- 9 -------------------------------------------------------------------------------


def test_9_policy_gate(verdict):
    checks = {}

    sc = small_scenario(policy=PolicyConfig(withdrawal_cap_daily=100))
    world = World(sc).run((Action(0, "withdraw", {"wallet": "w1", "account": "alice", "amount": 64}, 0),
                           Action(10, "withdraw", {"wallet": "w1", "account": "alice", "amount": 64}, 1)))
    checks["withdrawal cap"] = (world.outcomes[0], world.outcomes[1]) == ("Accept", "Refused:LimitExceeded")

    sc = small_scenario(policy=PolicyConfig(deposit_cap_daily=50))
    world = World(sc).run((Action(0, "withdraw", {"wallet": "w1", "account": "alice", "amount": 120}, 0),
                           Action(2000, "pay", {"wallet": "w1", "account": "shop", "amount": 40}, 1),
                           Action(4000, "pay", {"wallet": "w1", "account": "shop", "amount": 20}, 2)))
    checks["deposit cap"] = (world.outcomes[1], world.outcomes[2]) == ("Accept", "Refused:LimitExceeded")

    sc = small_scenario(policy=PolicyConfig(id_threshold=64))
    world = World(sc).run((Action(0, "withdraw", {"wallet": "w1", "account": "alice", "amount": 200}, 0),
                           Action(2000, "mediate", {"wallet": "w1", "payee": "w2", "msb": "msb1", "amount": 100}, 1),
                           Action(4000, "mediate", {"wallet": "w1", "payee": "w2", "msb": "msb1", "amount": 90,
                                                    "id": True}, 2)))
    front_office = (world.outcomes[1], world.outcomes[2]) == ("Refused:IdentificationRequired", "Accept")
    # an MSB that skips its own check is stopped by the ledger rule
    quiet = World(sc)
    for node in quiet.nodes.values():
        node.msb.submit = None
    payer = quiet.wallets["w1"]
    mint(quiet, payer, 64)
    invoice = quiet.nodes["msb1"].msb.issue_invoice(64, None, 0)
    bundle = payer.make_payment(64, invoice, 0)
    outputs = quiet.wallets["w2"].plan_withdrawal(64).blinded
    unflagged = LedgerEntry(EntryType.MEDIATED_TRANSFER, "msb1", invoice.nonce, 0,
                            MediatedTransfer(bundle.inputs, outputs, 0, False)).signed(quiet.signers["msb1"][0])
    ledger_verdict = execute(quiet.reference().replica.ledger, unflagged).verdict
    checks["id threshold"] = front_office and ledger_verdict.reason == Reason.POLICY_VIOLATION

    base = fuzz_scenario(600, seed=9)
    world = World(base).run()
    baseline = world.reference().replica.ledger
    accepted = {r.entry.digest for r in baseline.records if r.verdict.accepted}
    withdrawn = max(baseline.withdrawn.values())
    tight_policy = dataclasses.replace(world.genesis.policy, id_threshold=20,
                                       msb_withdrawal_velocity_cap=withdrawn // 2)
    tightened = replay(dataclasses.replace(world.genesis, policy=tight_policy), [r.entry for r in baseline.records])
    tight_accepted = {r.entry.digest for r in tightened.records if r.verdict.accepted}
    checks["tightened replay subset"] = tight_accepted < accepted

    ok = all(checks.values())
    verdict(9, ok, ", ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in checks.items())
            + f" (tightened replay kept {len(tight_accepted)}/{len(accepted)} entries)")
