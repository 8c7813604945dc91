"""Scenario execution on a simulated network.

:class:`World` builds every participant deterministically from a scenario
and its seed: the central bank and its issuer keys, one MSB per validator,
the genesis record, wallets, and the simulator wiring. Consensus traffic
and commit certificates travel through the simulator; wallet, MSB and
issuer interactions run in-process at the simulated time of the action
that triggers them.

After the script finishes the run settles, then global invariants are
checked: no two honest replicas disagree on any sequence, honest state
hashes agree, and issued minus redeemed equals the value of unspent tokens
held by wallets for every (denomination, vintage), on the ledger and at the
central bank alike. The regulator replays the audit stream and must reach
the same state hash.
"""
import hashlib
import logging
import random
import time
from dataclasses import dataclass, field
from functools import lru_cache

from cbdc.centralbank import CentralBank
from cbdc.consensus import EquivocatingReplica, Replica, ValidatorSet, commit_cert_from_wire
from cbdc.drbg import HashDrbg, derive_seed
from cbdc.encoding import decode, encode
from cbdc.errors import CbdcError, ConfigError
from cbdc.blindsig import BlindedMessage
from cbdc.config import PolicyConfig
from cbdc.genesis import Genesis, ValidatorInfo
from cbdc.ledger import EntryType, LedgerEntry, LedgerState, Reason, Withdrawal, audit_stream
from cbdc.msb import Msb
from cbdc.netsim import SimConfig, Simulator
from cbdc.protocol import MediationRequest, PaymentSubmission, WithdrawalRequest, WithdrawalResponse
from cbdc.protocol import encode_message as encode_protocol
from cbdc.regulator import AuditReplica
from cbdc.scenario import AccountSpec, Action, ConsensusParams, Scenario, WalletSpec
from cbdc.signing import ConsensusSigner, EntrySigner
from cbdc.wallet import Wallet

log = logging.getLogger(__name__)

CB_NODE = "cb"
SETTLE_STEP_MS = 1000


@lru_cache(maxsize=256)
def validator_keys(seed, validator_id, entry_bits):
    return (EntrySigner.from_seed(seed, validator_id, entry_bits), ConsensusSigner.from_seed(seed, validator_id))


@dataclass
class Flow:
    kind: str
    action: int
    wallet: object = None
    handle: object = None
    payee: object = None
    payee_handle: object = None
    bundle: object = None
    split: int = 0
    tokens: tuple = ()


@dataclass
class RunResult:
    name: str
    failures: list
    state_hash: str
    trace_hash: str
    report: dict
    alerts: list
    stats: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.failures

    @property
    def exit_code(self):
        return 0 if self.ok else 1


class ValidatorNode:
    def __init__(self, world, node_id, replica, msb):
        self.world = world
        self.id = node_id
        self.replica = replica
        self.msb = msb
        self.crashed = False
        self.timer_at = None
        self.commits = {}  # seq -> batch digest

    def on_message(self, src, data, now):
        if self.crashed:
            return
        self.world.dispatch(self, self.replica.handle_message(data, now), now)

    def on_timer(self, tag, now):
        if self.crashed or self.replica.deadline != tag:
            return
        self.timer_at = None
        self.world.dispatch(self, self.replica.on_timer(now), now)

    def submit(self, entry):
        if self.crashed:
            return
        now = self.world.sim.now
        self.world.dispatch(self, self.replica.submit(entry.raw, now), now)


class World:
    def __init__(self, scenario, record_dir=None):
        self.scenario = sc = scenario
        seed = sc.seed
        self.bank = CentralBank(sc.issuer_label, derive_seed(seed, "central-bank"), sc.security_bits,
                                denominations=sc.denominations)
        for vintage in sc.vintages:
            self.bank.provision_vintage(vintage)

        ids = sc.validator_ids
        self.signers = {v: validator_keys(seed, v, sc.entry_key_bits) for v in ids}
        salts = {v: HashDrbg(seed, ("account-salt", v)).randbytes(16) for v in ids}
        registry = []
        for spec in sc.accounts:
            if spec.registered:
                registry.append(_commit(salts[spec.msb], spec.account_id))
        if sc.treasury:
            registry.append(_commit(salts[sc.treasury[0]], TREASURY))
        self.genesis = Genesis(
            validators=tuple(ValidatorInfo(v, self.signers[v][1].public, self.signers[v][0].public) for v in ids),
            issuer_keys=self.bank.public_keys(),
            denominations=sc.denominations,
            policy=sc.policy,
            reserves=tuple((v, sc.reserves.get(v, sc.default_reserve)) for v in ids),
            account_registry=tuple(sorted(registry)),
            issuer_label=sc.issuer_label,
            vintages=sc.vintages,
        )
        self.validators = ValidatorSet(ids, tuple(self.signers[v][1].public for v in ids))

        self.sim = Simulator(sc.network)
        self.nodes = {}
        byz = sc.network.byzantine
        for v in ids:
            kwargs = dict(timeout_ms=sc.consensus.timeout_ms, batch_size=sc.consensus.batch_size,
                          window=sc.consensus.window)
            ledger = LedgerState(self.genesis)
            if byz.get(v) == "equivocate":
                replica = EquivocatingReplica(v, self.signers[v][1], self.validators, ledger,
                                              rng=random.Random(derive_seed(seed, ("equivocator", v, sc.network.seed))),
                                              **kwargs)
            else:
                replica = Replica(v, self.signers[v][1], self.validators, ledger, **kwargs)
            record_path = f"{record_dir}/{v}.records.jsonl" if record_dir else None
            msb = Msb(v, self.signers[v][0], self.genesis, salts[v], record_path)
            node = ValidatorNode(self, v, replica, msb)
            msb.submit = node.submit
            self.nodes[v] = node
            self.sim.register(v, node.on_message, node.on_timer)
        self.honest = [v for v in ids if v not in byz]

        for spec in sc.accounts:
            self.nodes[spec.msb].msb.open_account(spec.account_id, spec.balance, spec.tier)
        if sc.treasury:
            msb = self.nodes[sc.treasury[0]].msb
            msb.open_account(TREASURY, sc.treasury[1], "verified")
            msb.treasury_account = TREASURY
        self.account_home = {spec.account_id: spec.msb for spec in sc.accounts}

        self.bank.attach(self.genesis, self.validators)
        self.bank.on_issued = self._issued
        self.sim.register(CB_NODE, self._on_cert)

        self.wallets = {}
        for spec in sc.wallets:
            self.wallets[spec.wallet_id] = self._new_wallet(("wallet", spec.wallet_id), spec.spend_delay_ms)
        self.clones = []
        self.flows = {}
        self.outcomes = {}  # action index -> "Accept" / "Reject:..." / "Refused:<Error>"
        self.refusals = {}
        self.transcripts = []  # (session, origin, raw bytes)
        self.blinding_factors = []  # test-mode capture before wallets erase them
        self.linkage_truth = {}
        self._last_withdrawal = {}
        self._sessions = 0
        self.id_rng = HashDrbg(seed, "id-attestations")

    # -- wiring ---------------------------------------------------------------------

    def _new_wallet(self, label, spend_delay_ms=0):
        return Wallet(self.genesis.issuer_keys, spend_delay_ms, HashDrbg(self.scenario.seed, label))

    def dispatch(self, node, step, now):
        sim = self.sim
        for ob in step.outbound:
            kind = ob.kind.name
            if ob.dst is None:
                for other in self.validators.ids:
                    if other != node.id:
                        sim.send(node.id, other, ob.raw, kind, ob.digest)
            else:
                sim.send(node.id, ob.dst, ob.raw, kind, ob.digest)
        for seq, cert, records in step.committed:
            node.commits[seq] = cert.digest
            sim.send(node.id, CB_NODE, encode(("commit-cert", cert.to_wire())), "CERT", cert.digest)
            for record in records:
                pending = node.msb.on_committed(record)
                if pending is not None:
                    self._settle(record, now)
        deadline = node.replica.deadline
        if deadline is not None and deadline != node.timer_at:
            node.timer_at = deadline
            sim.set_timer(node.id, deadline, deadline)

    def _on_cert(self, src, data, now):
        try:
            tag, wire = decode(data)
            cert = commit_cert_from_wire(wire)
        except (CbdcError, ValueError, TypeError):
            log.warning("central bank: undecodable certificate from %s", src)
            return
        self.bank.on_commit_cert(cert)

    def _session(self):
        self._sessions += 1
        return self._sessions

    def _log(self, session, origin, msg):
        self.transcripts.append((session, origin, encode_protocol(msg)))

    def _capture(self, wallet, handle):
        if handle is not None:
            self.blinding_factors.extend(f.r for f in wallet.pending[handle].factors)

    def _refuse(self, action, exc):
        name = type(exc).__name__
        self.outcomes[action.index] = f"Refused:{name}"
        self.refusals[name] = self.refusals.get(name, 0) + 1
        log.info("action %d (%s) refused: %s", action.index, action.kind, exc)

    # -- settlement callbacks ----------------------------------------------------------

    def _settle(self, record, now):
        """Our MSB saw one of its entries commit."""
        entry = record.entry
        flow = self.flows.get(entry.digest)
        if flow is None:
            return
        if entry.entry_type == EntryType.RESERVE_EXCHANGE:
            del self.flows[entry.digest]
            self.outcomes[flow.action] = str(record.verdict)
            return
        if record.verdict.accepted:
            return  # completes when the central bank issues
        del self.flows[entry.digest]
        self.outcomes[flow.action] = str(record.verdict)
        if flow.kind in ("withdraw", "disburse"):
            flow.wallet.abandon_withdrawal(flow.handle)
        elif flow.kind in ("pay", "mediate"):
            if record.verdict.reason == Reason.DOUBLE_SPEND:
                if flow.bundle.change_handle is not None:
                    flow.wallet.abandon_withdrawal(flow.bundle.change_handle)
            else:
                flow.wallet.refund(flow.bundle)
            if flow.payee is not None:
                flow.payee.abandon_withdrawal(flow.payee_handle)

    def _issued(self, digest, record, sigs):
        flow = self.flows.pop(digest, None)
        if flow is None:
            return
        now = self.sim.now
        self.outcomes[flow.action] = str(record.verdict)
        session = self._session()
        if flow.kind in ("withdraw", "disburse"):
            self._log(session, "msb", WithdrawalResponse(tuple(sigs)))
            self._capture(flow.wallet, flow.handle)
            flow.wallet.finalize_withdrawal(flow.handle, sigs, now)
        elif flow.kind in ("pay", "mediate"):
            payee_sigs, change_sigs = sigs[:flow.split], sigs[flow.split:]
            if flow.payee is not None:
                self._capture(flow.payee, flow.payee_handle)
                flow.payee.finalize_withdrawal(flow.payee_handle, payee_sigs, now)
            if flow.bundle.change_handle is not None:
                self._capture(flow.wallet, flow.bundle.change_handle)
                flow.wallet.finalize_withdrawal(flow.bundle.change_handle, change_sigs, now)

    # -- actions ------------------------------------------------------------------------

    def schedule(self, actions):
        for action in actions:
            self.sim.schedule(action.at, lambda now, a=action: self.perform(a, now), f"{action.kind}#{action.index}")

    def perform(self, action, now):
        try:
            getattr(self, f"_do_{action.kind}")(action, now)
        except CbdcError as exc:
            self._refuse(action, exc)

    def _do_credit(self, action, now):
        self.nodes[self.account_home[action["account"]]].msb.credit(action["account"], action["amount"])
        self.outcomes[action.index] = "Done"

    def _do_crash(self, action, now):
        self.nodes[action["node"]].crashed = True
        self.outcomes[action.index] = "Done"

    def _do_exchange(self, action, now):
        entry = self.nodes[action["msb"]].msb.exchange_reserves(action["amount"], action["direction"], now)
        self.flows[entry.digest] = Flow("exchange", action.index)

    def _do_withdraw(self, action, now):
        wallet = self.wallets[action["wallet"]]
        msb = self.nodes[self.account_home[action["account"]]].msb
        plan = wallet.plan_withdrawal(action["amount"])
        session = self._session()
        self._log(session, "wallet", WithdrawalRequest(plan.blinded))
        try:
            entry = msb.request_withdrawal(action["account"], plan.blinded, now)
        except CbdcError:
            wallet.abandon_withdrawal(plan.handle)
            raise
        self.flows[entry.digest] = Flow("withdraw", action.index, wallet, plan.handle)
        self._last_withdrawal[id(wallet)] = entry.digest

    def _do_disburse(self, action, now):
        wallet = self.wallets[action["wallet"]]
        msb = self.nodes[action["msb"]].msb
        plan = wallet.plan_withdrawal(action["amount"])
        session = self._session()
        self._log(session, "wallet", WithdrawalRequest(plan.blinded))
        claim = hashlib.sha256(b"claim\x00" + action["claim"].encode()).digest()
        try:
            entry = msb.disburse(claim, action.get("verified", True), plan.blinded, now)
        except CbdcError:
            wallet.abandon_withdrawal(plan.handle)
            raise
        self.flows[entry.digest] = Flow("disburse", action.index, wallet, plan.handle)

    def _pay(self, wallet, account, amount, now, action_index, bundle=None):
        msb = self.nodes[self.account_home[account]].msb
        invoice = msb.issue_invoice(amount, account, now)
        bundle = wallet.make_payment(amount, invoice, now)
        submission = PaymentSubmission(invoice, bundle.inputs, bundle.change)
        self._log(self._session(), "wallet", submission)
        try:
            entry = msb.receive_deposit(submission, now)
        except CbdcError:
            wallet.refund(bundle)
            raise
        self.flows[entry.digest] = Flow("pay", action_index, wallet, bundle=bundle)
        source = self._last_withdrawal.get(id(wallet))
        if source is not None:
            self.linkage_truth[source] = entry.digest
        return entry

    def _do_pay(self, action, now):
        self._pay(self.wallets[action["wallet"]], action["account"], action["amount"], now, action.index)

    def _do_double_spend(self, action, now):
        wallet = self.wallets[action["wallet"]]
        first, second = action["accounts"]
        shared = wallet.select(action["amount"])
        clone = self._new_wallet(("clone", action.index))
        clone.import_tokens(wallet.export_token_secrets(shared), now)
        self.clones.append(clone)
        self._pay(wallet, first, action["amount"], now, action.index)
        try:
            self._pay(clone, second, action["amount"], now, -action.index - 1)
        except CbdcError as exc:
            self._refuse(action, exc)

    def _do_mediate(self, action, now):
        payer = self.wallets[action["wallet"]]
        payee = self.wallets[action["payee"]]
        msb = self.nodes[action["msb"]].msb
        amount = action["amount"]
        payee_plan = payee.plan_withdrawal(amount)
        self._log(self._session(), "wallet", WithdrawalRequest(payee_plan.blinded))
        invoice = msb.issue_invoice(amount, None, now)
        try:
            bundle = payer.make_payment(amount, invoice, now, fee=self.genesis.policy.mediated_fee)
        except CbdcError:
            payee.abandon_withdrawal(payee_plan.handle)
            raise
        id_info = self.id_rng.randbytes(32) if action.get("id", False) else None
        request = MediationRequest(invoice, bundle.inputs, payee_plan.blinded, bundle.change, id_info)
        self._log(self._session(), "wallet", request)
        try:
            entry = msb.mediate_transfer(request, now)
        except CbdcError:
            payer.refund(bundle)
            payee.abandon_withdrawal(payee_plan.handle)
            raise
        self.flows[entry.digest] = Flow("mediate", action.index, payer, bundle=bundle, payee=payee,
                                        payee_handle=payee_plan.handle, split=len(payee_plan.blinded))

    # -- running ------------------------------------------------------------------------

    def busy(self):
        if self.flows:
            return True
        return any(self.nodes[v].replica.pending for v in self.honest if not self.nodes[v].crashed)

    def run(self, actions=None):
        actions = self.scenario.script if actions is None else actions
        self.schedule(actions)
        last = max((a.at for a in actions), default=0)
        self.sim.run_until(last)
        deadline = last + self.scenario.settle_ms
        while self.busy() and self.sim.now < deadline:
            self.sim.run_until(min(deadline, self.sim.now + SETTLE_STEP_MS))
        # let the stragglers catch up on already-committed batches
        self.sim.run_until(self.sim.now + 2 * self.scenario.consensus.timeout_ms)
        return self

    # -- checks -------------------------------------------------------------------------

    def reference(self):
        """The honest replica with the longest committed log."""
        live = [self.nodes[v] for v in self.honest]
        return max(live, key=lambda n: (n.replica.last_committed, -self.validators.ids.index(n.id)))

    def safety_violations(self):
        problems = []
        seen = {}
        for v in self.honest:
            for seq, digest in self.nodes[v].commits.items():
                other = seen.setdefault(seq, (v, digest))
                if other[1] != digest:
                    problems.append(f"seq {seq}: {other[0]} and {v} committed different batches")
        return problems

    def wallet_holdings(self):
        """Value of distinct unspent tokens held by any wallet, per (denomination, vintage)."""
        spent = self.reference().replica.ledger.spent
        seen = set()
        out = {}
        for wallet in list(self.wallets.values()) + self.clones:
            for held in wallet.tokens:
                tid = held.token.token_id
                if tid in seen or tid in spent:
                    continue
                seen.add(tid)
                slot = (held.denomination, held.vintage)
                out[slot] = out.get(slot, 0) + held.denomination
        return out

    def conservation_violations(self):
        problems = []
        ledger = {k: v for k, v in self.reference().replica.ledger.outstanding().items() if v}
        bank = {k: v for k, v in self.bank.outstanding().items() if v}
        wallets = self.wallet_holdings()
        if ledger != wallets:
            problems.append(f"ledger outstanding {ledger} != wallet holdings {wallets}")
        if bank != ledger and self.bank.committed_seq == self.reference().replica.last_committed:
            problems.append(f"central bank outstanding {bank} != ledger {ledger}")
        return problems

    def regulator(self):
        ref = self.reference()
        auditor = AuditReplica(self.genesis, self.validators)
        auditor.ingest(audit_stream(ref.replica.ledger, 0))
        evidence = []
        for v in self.honest:
            evidence.extend(self.nodes[v].replica.evidence)
        auditor.ingest_evidence(evidence)
        return auditor

    def check(self):
        failures = []
        if self.flows:
            failures.append(f"{len(self.flows)} flows never settled")
        failures += self.safety_violations()
        ref = self.reference()
        for v in self.honest:
            node = self.nodes[v]
            if node.replica.last_committed == ref.replica.last_committed and not node.crashed:
                if node.replica.ledger.state_hash() != ref.replica.ledger.state_hash():
                    failures.append(f"{v} state hash differs from {ref.id} at equal height")
        if not self.flows:
            failures += self.conservation_violations()
        auditor = self.regulator()
        if auditor.state_hash() != ref.replica.ledger.state_hash():
            failures.append("regulator state hash differs from validators")
        return failures, auditor

    def evaluate(self, expectation, auditor, alerts):
        kind = expectation["kind"]
        ledger = auditor.state
        if kind == "account_balance":
            account = expectation["account"]
            actual = self.nodes[self.account_home[account]].msb.accounts[account].balance
        elif kind == "wallet_balance":
            actual = self.wallets[expectation["wallet"]].balance
        elif kind == "accepted":
            actual = sum(1 for r in ledger.records if r.verdict.accepted and r.entry.entry_type.name == expectation["type"])
        elif kind == "rejects":
            actual = sum(1 for r in ledger.records if not r.verdict.accepted and r.verdict.reason == expectation["reason"])
        elif kind == "refusals":
            actual = self.refusals.get(expectation["error"], 0)
        elif kind == "alerts":
            actual = sum(1 for a in alerts if a.kind == expectation["alert"])
        elif kind == "outstanding":
            actual = sum(ledger.outstanding().values())
        elif kind == "min_view_changes":
            actual = max(self.nodes[v].replica.view for v in self.honest)
            if actual < expectation["count"]:
                return f"min_view_changes: view {actual} < {expectation['count']}"
            return None
        want = expectation.get("equals", expectation.get("count"))
        if actual != want:
            detail = {k: v for k, v in expectation.items() if k not in ("kind", "equals", "count")}
            return f"{kind} {detail}: expected {want}, got {actual}"
        return None

    def result(self):
        failures, auditor = self.check()
        alerts = auditor.detect_anomalies()
        for expectation in self.scenario.expect:
            problem = self.evaluate(expectation, auditor, alerts)
            if problem:
                failures.append(problem)
        ref = self.reference()
        stats = {
            "height": ref.replica.ledger.height,
            "sequences": ref.replica.last_committed,
            "view": max(self.nodes[v].replica.view for v in self.honest),
            "delivered": self.sim.delivered,
            "dropped": self.sim.dropped,
            "sim_time_ms": self.sim.now,
            "refusals": dict(sorted(self.refusals.items())),
        }
        return RunResult(
            name=self.scenario.name,
            failures=failures,
            state_hash=ref.replica.ledger.state_hash().hex(),
            trace_hash=self.sim.trace_hash(),
            report=auditor.report(),
            alerts=alerts,
            stats=stats,
        )


TREASURY = "treasury"


def _commit(salt, account_id):
    return hashlib.sha256(b"cbdc-account\x00" + salt + account_id.encode()).digest()


def run_scenario(scenario, record_dir=None):
    world = World(scenario, record_dir=record_dir)
    world.run()
    return world, world.result()


# -- generated workloads ---------------------------------------------------------------


def fuzz_script(scenario, actions, seed=0, spacing_ms=20):
    """Random mix of credit/withdraw/pay/mediate/exchange actions over the scenario's roster."""
    rng = random.Random(seed)
    accounts = [a.account_id for a in scenario.accounts]
    wallets = [w.wallet_id for w in scenario.wallets]
    ids = scenario.validator_ids
    out = []
    t = 0
    if not accounts or not wallets:
        raise ConfigError("fuzzing needs at least one account and one wallet", "topology")
    kinds = ["withdraw"] * 4 + ["pay"] * 3 + ["credit", "exchange"]
    if len(wallets) > 1:
        kinds += ["mediate"] * 2
    for i in range(actions):
        t += rng.randint(1, spacing_ms)
        kind = rng.choice(kinds)
        if kind == "credit":
            params = {"account": rng.choice(accounts), "amount": rng.randint(1, 500)}
        elif kind == "withdraw":
            params = {"wallet": rng.choice(wallets), "account": rng.choice(accounts), "amount": rng.randint(1, 64)}
        elif kind == "pay":
            params = {"wallet": rng.choice(wallets), "account": rng.choice(accounts), "amount": rng.randint(1, 40)}
        elif kind == "mediate":
            payer, payee = rng.sample(wallets, 2)
            params = {"wallet": payer, "payee": payee, "msb": rng.choice(ids), "amount": rng.randint(1, 40),
                      "id": rng.random() < 0.5}
        else:
            params = {"msb": rng.choice(ids), "amount": rng.randint(1, 100),
                      "direction": rng.choice(["to_cbdc", "to_reserves"])}
        out.append(Action(t, kind, params, i))
    return tuple(out)


def fuzz_scenario(actions, seed=0, validators=4, wallets=6):
    """A roster sized for long random scripts, with the script from :func:`fuzz_script`."""
    accounts = tuple(AccountSpec(f"acct{i}", f"msb{i % validators}", 20_000) for i in range(2 * validators))
    sc = Scenario(
        name=f"fuzz-{actions}",
        seed=seed,
        validators=validators,
        accounts=accounts,
        wallets=tuple(WalletSpec(f"fw{i}") for i in range(wallets)),
        policy=PolicyConfig(withdrawal_cap_daily=5_000, deposit_cap_daily=20_000, id_threshold=100),
        network=SimConfig(seed=seed),
    )
    sc.script = fuzz_script(sc, actions, seed=seed)
    return sc


def double_spend_workload(deposits=10_000, duplicate_rate=0.05, wallets=50, seed=0, validators=4,
                          spacing_ms=2):
    """Scenario with ``deposits`` deposit submissions, a ``duplicate_rate`` share of them duplicates.

    Wallets first withdraw twice what they will spend. Each ``double_spend``
    action then hands a copy of the selected tokens to a second holder and
    both submit at once, at MSBs on different validators; every other
    deposit is an ordinary ``pay``. Returns the scenario and the indices of
    the duplicate actions.
    """
    rng = random.Random(seed)
    duplicates = round(deposits * duplicate_rate)
    plain = deposits - 2 * duplicates
    if plain < 0:
        raise ConfigError("duplicate_rate must be <= 0.5", "duplicate_rate")
    ids = tuple(f"msb{i}" for i in range(validators))
    merchants = tuple(AccountSpec(f"shop{i}", m, 0, tier="verified") for i, m in enumerate(ids))
    payers = tuple(AccountSpec(f"payer{i}", ids[i % validators], 0) for i in range(wallets))
    kinds = ["double_spend"] * duplicates + ["pay"] * plain
    rng.shuffle(kinds)

    spend = [0] * wallets
    deposit_actions = []
    t = 5_000
    for kind in kinds:
        w = rng.randrange(wallets)
        amount = rng.choice((1, 2, 3, 5))
        spend[w] += amount
        if kind == "pay":
            params = {"wallet": f"dw{w}", "account": rng.choice(merchants).account_id, "amount": amount}
        else:
            first, second = rng.sample(merchants, 2)
            params = {"wallet": f"dw{w}", "accounts": [first.account_id, second.account_id], "amount": amount}
        deposit_actions.append((t, kind, params))
        t += rng.randint(1, spacing_ms)

    script = []
    # headroom: change from in-flight payments is not spendable until it commits
    spend = [2 * x + 10 for x in spend]
    for w in range(wallets):
        script.append(Action(w, "credit", {"account": f"payer{w}", "amount": spend[w]}, len(script)))
        script.append(Action(10 + w, "withdraw", {"wallet": f"dw{w}", "account": f"payer{w}", "amount": spend[w]},
                             len(script)))
    dup_index = []
    for at, kind, params in deposit_actions:
        if kind == "double_spend":
            dup_index.append(len(script))
        script.append(Action(at, kind, params, len(script)))

    sc = Scenario(
        name=f"double-spend-{deposits}",
        seed=seed,
        validators=validators,
        denominations=(1, 2, 5),
        accounts=merchants + payers,
        wallets=tuple(WalletSpec(f"dw{w}") for w in range(wallets)),
        policy=PolicyConfig(withdrawal_cap_daily=10**9, deposit_cap_daily=10**9, id_threshold=10**9,
                            msb_withdrawal_velocity_cap=10**12),
        default_reserve=10**9,
        network=SimConfig(seed=seed),
    )
    sc.script = tuple(script)
    return sc, dup_index


# -- benchmark -------------------------------------------------------------------------


@dataclass
class BenchResult:
    validators: int
    batch: int
    duration_ms: int
    committed: int
    elapsed_s: float
    sequences: int

    @property
    def rate(self):
        return self.committed / self.elapsed_s if self.elapsed_s > 0 else 0.0


def bench(duration_ms=5000, batch=64, validators=4, seed=0, step_ms=5):
    """Committed entries per wall-clock second on the in-process simulated network.

    The offered load is a deterministic stream of signed withdrawal entries
    submitted round-robin at the validators. Entries are produced in chunks
    with the clock paused, so the rate covers consensus and execution only.
    Outstanding work is capped at two full pipelines (window x batch) to
    measure sustained rather than burst throughput.
    """
    if duration_ms <= 0:
        return BenchResult(validators, batch, duration_ms, 0, 0.0, 0)
    policy = PolicyConfig(withdrawal_cap_daily=10**12, msb_withdrawal_velocity_cap=10**15)
    sc = Scenario(name="bench", seed=seed, validators=validators, policy=policy,
                  consensus=ConsensusParams(timeout_ms=2000, batch_size=batch, window=8),
                  default_reserve=10**15, settle_ms=0)
    world = World(sc)
    ids = sc.validator_ids
    key = next(k for k in world.genesis.issuer_keys if k.denomination == 1)
    rng = HashDrbg(seed, "bench-stream")
    leader = world.nodes[ids[0]]
    cap = 2 * batch * sc.consensus.window
    made = 0

    def produce(n):
        nonlocal made
        out = []
        for _ in range(n):
            v = ids[made % len(ids)]
            blinded = BlindedMessage(rng.randrange(key.n), key.key_id, key.width)
            payload = Withdrawal(world.nodes[v].msb.commitment("bench"), 1, (blinded,))
            entry = LedgerEntry(EntryType.WITHDRAWAL, v, made + 1, 0, payload).signed(world.signers[v][0])
            out.append((v, entry))
            made += 1
        return out

    budget = duration_ms / 1000.0
    elapsed = 0.0
    submitted = 0
    while elapsed < budget:
        backlog = submitted - leader.replica.ledger.height
        chunk = produce(max(0, cap - backlog))
        start = time.perf_counter()
        for v, entry in chunk:
            world.nodes[v].submit(entry)
        submitted += len(chunk)
        world.sim.run_until(world.sim.now + step_ms)
        elapsed += time.perf_counter() - start
    committed = leader.replica.ledger.height
    return BenchResult(validators, batch, duration_ms, committed, elapsed, leader.replica.last_committed)
