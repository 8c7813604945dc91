"""Read-only audit replica.

The regulator consumes the audit stream of committed log records and the
public genesis, nothing else. It re-executes every entry on its own ledger
copy, so a missing or altered record shows up as a gap or a hash mismatch,
and derives supply, per-MSB activity and anomaly alerts from the ledger
alone. It also hosts the linkage-attack harness that measures how well a
ledger observer can match withdrawals to later deposits.
"""
import json
import logging
import math
import random
from dataclasses import dataclass, field

from cbdc.consensus import verify_evidence
from cbdc.errors import GapDetected, HashMismatch
from cbdc.ledger import EntryType, LedgerState, Reason, execute

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Thresholds:
    double_spend_rate: float = 0.01
    velocity_cap: int = None  # defaults to the genesis policy cap


@dataclass(frozen=True)
class Alert:
    kind: str
    msb_id: str
    detail: str
    height: int = -1

    def to_json(self):
        return json.dumps(
            {"alert": self.kind, "msb": self.msb_id, "detail": self.detail, "height": self.height},
            sort_keys=True,
        )


@dataclass
class MsbActivity:
    entries: int = 0
    accepted: int = 0
    value_in: int = 0
    value_out: int = 0
    spend_entries: int = 0
    rejects: dict = field(default_factory=dict)
    by_type: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "entries": self.entries,
            "accepted": self.accepted,
            "value_in": self.value_in,
            "value_out": self.value_out,
            "spend_entries": self.spend_entries,
            "rejects": dict(sorted(self.rejects.items())),
            "by_type": dict(sorted(self.by_type.items())),
        }


class AuditReplica:
    def __init__(self, genesis, validators=None, thresholds=None, alert_path=None):
        self.genesis = genesis
        self.validators = validators
        self.thresholds = thresholds or Thresholds()
        self.alert_path = alert_path
        self.state = LedgerState(genesis)
        self.activity = {}
        self.evidence = {}
        self.invalid_destinations = []
        self.attempted_withdrawals = {}  # (msb, day) -> value, accepted or not
        self._registry = set(genesis.account_registry)
        self._written_alerts = 0

    @property
    def height(self):
        return self.state.height

    def state_hash(self):
        return self.state.state_hash()

    def ingest(self, stream):
        """Apply an audit stream that continues exactly at our height."""
        if stream.from_height != self.state.height:
            raise GapDetected(f"stream starts at {stream.from_height}, replica at {self.state.height}")
        checkpoints = dict(stream.checkpoints)
        for record in stream.records:
            if record.height != self.state.height:
                raise GapDetected(f"expected height {self.state.height}, got {record.height}")
            mine = execute(self.state, record.entry)
            if mine.chain_hash != record.chain_hash or mine.verdict != record.verdict:
                raise HashMismatch(f"record {record.height} does not reproduce")
            self._account(mine)
            expected = checkpoints.get(self.state.height)
            if expected is not None and expected != self.state.state_hash():
                raise HashMismatch(f"state hash differs at checkpoint {self.state.height}")
        return self

    def ingest_evidence(self, records):
        for ev in records:
            if ev.key in self.evidence:
                continue
            if self.validators is not None and not verify_evidence(ev, self.validators):
                log.warning("discarding unverifiable evidence against %s", ev.equivocator)
                continue
            self.evidence[ev.key] = ev

    def _account(self, record):
        entry = record.entry
        genesis = self.genesis
        msb = entry.submitting_msb_id
        act = self.activity.setdefault(msb, MsbActivity())
        act.entries += 1
        name = entry.entry_type.name
        act.by_type[name] = act.by_type.get(name, 0) + 1
        payload = entry.payload
        if payload.inputs:
            act.spend_entries += 1
        if entry.entry_type == EntryType.WITHDRAWAL:
            day = genesis.policy.day_of(entry.logical_timestamp)
            key = (msb, day)
            self.attempted_withdrawals[key] = self.attempted_withdrawals.get(key, 0) + payload.amount
        if not record.verdict.accepted:
            reason = record.verdict.reason
            act.rejects[reason] = act.rejects.get(reason, 0) + 1
            return
        act.accepted += 1
        for item in payload.inputs:
            act.value_in += genesis.issuer_key(item.key_id).denomination
        for item in payload.outputs:
            act.value_out += genesis.issuer_key(item.key_id).denomination
        if entry.entry_type == EntryType.DEPOSIT and payload.account_commitment not in self._registry:
            self.invalid_destinations.append((record.height, msb, payload.account_commitment))

    # -- outputs ------------------------------------------------------------------

    def report(self):
        state = self.state
        issued = state.issued
        redeemed = state.redeemed
        per_vintage = {}
        for (denom, vintage), value in state.outstanding().items():
            per_vintage[vintage] = per_vintage.get(vintage, 0) + value
        return {
            "height": state.height,
            "state_hash": state.state_hash().hex(),
            "outstanding_total": sum(state.outstanding().values()),
            "outstanding_by_vintage": dict(sorted(per_vintage.items())),
            "outstanding": {f"{d}@{v}": x for (d, v), x in state.outstanding().items()},
            "issued": {f"{d}@{v}": x for (d, v), x in sorted(issued.items())},
            "redeemed": {f"{d}@{v}": x for (d, v), x in sorted(redeemed.items())},
            "reserves": dict(sorted(state.reserves.items())),
            "spent_tokens": len(state.spent),
            "msbs": {m: a.to_dict() for m, a in sorted(self.activity.items())},
        }

    def report_lines(self):
        rep = self.report()
        lines = [json.dumps({"record": "supply", **{k: v for k, v in rep.items() if k != "msbs"}}, sort_keys=True)]
        for msb, act in rep["msbs"].items():
            lines.append(json.dumps({"record": "msb", "msb": msb, **act}, sort_keys=True))
        return lines

    def detect_anomalies(self):
        alerts = []
        for height, msb, commitment in self.invalid_destinations:
            alerts.append(Alert("InvalidDestination", msb, commitment.hex(), height))
        for msb, act in sorted(self.activity.items()):
            doubles = act.rejects.get(Reason.DOUBLE_SPEND, 0)
            if act.spend_entries and doubles / act.spend_entries > self.thresholds.double_spend_rate:
                alerts.append(Alert("DoubleSpendRate", msb, f"{doubles}/{act.spend_entries}"))
        cap = self.thresholds.velocity_cap
        if cap is None:
            cap = self.genesis.policy.msb_withdrawal_velocity_cap
        for (msb, day), value in sorted(self.attempted_withdrawals.items()):
            if value > cap:
                alerts.append(Alert("WithdrawalVelocity", msb, f"day {day}: {value} > {cap}"))
        for key in sorted(self.evidence):
            ev = self.evidence[key]
            alerts.append(Alert("ByzantineEvidence", ev.equivocator, f"view {ev.view} seq {ev.seq}"))
        if self.alert_path and len(alerts) > self._written_alerts:
            with open(self.alert_path, "a", encoding="utf-8") as fh:
                for alert in alerts[self._written_alerts:]:
                    fh.write(alert.to_json() + "\n")
            self._written_alerts = len(alerts)
        return alerts

    # -- linkage --------------------------------------------------------------------

    def observations(self):
        """Withdrawals and deposits as a ledger observer sees them."""
        return observations_from_records(self.state.records)

    def linkage_attack(self, strategy, ground_truth, observations=None, rng=None):
        withdrawals, deposits = observations or self.observations()
        return linkage_attack(withdrawals, deposits, strategy, ground_truth, rng)


@dataclass(frozen=True)
class Observation:
    ref: bytes  # entry digest
    amount: int
    time: int


def observations_from_records(records):
    withdrawals, deposits = [], []
    for record in records:
        if not record.verdict.accepted:
            continue
        entry = record.entry
        if entry.entry_type == EntryType.WITHDRAWAL:
            withdrawals.append(Observation(entry.digest, entry.payload.amount, entry.logical_timestamp))
        elif entry.entry_type == EntryType.DEPOSIT:
            deposits.append(Observation(entry.digest, entry.payload.amount, entry.logical_timestamp))
    return withdrawals, deposits


def match_timing(withdrawals, deposits, rng=None):
    """Earliest-after baseline: each withdrawal, in time order, takes the first
    unmatched deposit of equal amount at or after it."""
    pool = sorted(deposits, key=lambda d: (d.time, d.ref))
    used = set()
    matching = {}
    for w in sorted(withdrawals, key=lambda w: (w.time, w.ref)):
        for d in pool:
            if d.ref in used or d.time < w.time or d.amount != w.amount:
                continue
            matching[w.ref] = d.ref
            used.add(d.ref)
            break
    return matching


def match_random(withdrawals, deposits, rng=None):
    """Chance baseline: a uniformly random bijection within equal amounts."""
    rng = rng or random.Random(0)
    by_amount = {}
    for d in deposits:
        by_amount.setdefault(d.amount, []).append(d.ref)
    matching = {}
    for amount, refs in sorted(by_amount.items()):
        refs = sorted(refs)
        rng.shuffle(refs)
        ws = sorted((w.ref for w in withdrawals if w.amount == amount))
        matching.update(zip(ws, refs))
    return matching


STRATEGIES = {"timing": match_timing, "random": match_random}


@dataclass(frozen=True)
class LinkageResult:
    strategy: str
    matching: dict
    correct: int
    total: int

    @property
    def accuracy(self):
        return self.correct / self.total if self.total else 0.0


def linkage_attack(withdrawals, deposits, strategy, ground_truth, rng=None):
    fn = STRATEGIES[strategy] if isinstance(strategy, str) else strategy
    name = strategy if isinstance(strategy, str) else getattr(strategy, "__name__", "custom")
    matching = fn(withdrawals, deposits, rng)
    correct = sum(1 for w, d in ground_truth.items() if matching.get(w) == d)
    return LinkageResult(name, matching, correct, len(ground_truth))


def simulate_observations(rng, wallets, amount=1, withdraw_spread_ms=1000, max_delay_ms=86_400_000,
                          discipline="uniform", gap_ms=1000):
    """Observation-level model of ``wallets`` withdraw-then-deposit pairs.

    ``uniform``: every wallet waits an independent uniform delay in
    [0, max_delay_ms]. ``zero``: wallets withdraw one after another and
    spend immediately, ``gap_ms`` apart. Returns
    (withdrawals, deposits, ground_truth).
    """
    withdrawals, deposits, truth = [], [], {}
    for i in range(wallets):
        w_ref = b"w" + i.to_bytes(4, "big")
        d_ref = b"d" + i.to_bytes(4, "big")
        if discipline == "uniform":
            t_w = rng.randrange(withdraw_spread_ms + 1)
            t_d = t_w + rng.randrange(max_delay_ms + 1)
        elif discipline == "zero":
            t_w = i * gap_ms
            t_d = t_w + 1
        else:
            raise ValueError(f"unknown discipline {discipline!r}")
        withdrawals.append(Observation(w_ref, amount, t_w))
        deposits.append(Observation(d_ref, amount, t_d))
        truth[w_ref] = d_ref
    order = list(range(wallets))
    rng.shuffle(order)
    return [withdrawals[i] for i in order], [deposits[i] for i in order], truth


def monte_carlo(strategy, wallets=100, trials=1000, seed=0, **kwargs):
    """Mean accuracy over ``trials`` and the chance-level 3-sigma band."""
    rng = random.Random(seed)
    correct = total = 0
    for _ in range(trials):
        withdrawals, deposits, truth = simulate_observations(rng, wallets, **kwargs)
        result = linkage_attack(withdrawals, deposits, strategy, truth, rng)
        correct += result.correct
        total += result.total
    chance = 1 / wallets
    sigma = math.sqrt(chance * (1 - chance) / trials)
    return {"accuracy": correct / total, "chance": chance, "sigma": sigma}
