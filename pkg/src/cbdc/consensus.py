"""PBFT-style consensus that totally orders ledger entries among MSB validators.

Each :class:`Replica` is a deterministic state machine. Inputs are raw
message bytes plus the current simulated time; outputs are a :class:`Step`
holding messages to send and batches that became final. The harness owns
transport and timers.

Protocol summary (view ``v``, leader ``v mod N``):

* the leader assigns a sequence number to a batch and multicasts PrePrepare;
* backups multicast Prepare, carrying the leader's header signature so that
  any two conflicting headers become transferable equivocation evidence;
* ``quorum - 1`` matching Prepares make a slot prepared; ``quorum`` matching
  Commits make it committed; batches execute strictly in sequence order;
* a replica whose request timer expires multicasts ViewChange with its
  proven last commit and its prepared certificates; the next leader
  re-proposes the highest-view prepared batch for each open sequence (empty
  batch where none exists) in NewView;
* lagging replicas fetch commit certificates (a batch plus ``quorum``
  signed Commits), which are self-proving.

The quorum is ``ceil((N + f + 1) / 2)``, which equals ``2f + 1`` whenever
``N = 3f + 1`` and keeps any two quorums overlapping in ``f + 1`` replicas
for other N.
"""
import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from enum import IntEnum

from cbdc.encoding import decode, encode
from cbdc.errors import DecodeError, NotLeader, ValidationFailed
from cbdc.ledger import Reason, execute, parse_entry
from cbdc.signing import consensus_verify

log = logging.getLogger(__name__)

MAX_AHEAD = 4096
FETCH_BATCH = 64


class Kind(IntEnum):
    REQUEST = 0
    PRE_PREPARE = 1
    PREPARE = 2
    COMMIT = 3
    VIEW_CHANGE = 4
    NEW_VIEW = 5
    FETCH = 6
    CATCH_UP = 7


def batch_digest(entries):
    return hashlib.sha256(encode(("batch", tuple(entries)))).digest()


@dataclass(frozen=True)
class ValidatorSet:
    ids: tuple
    keys: tuple

    def __post_init__(self):
        if len(self.ids) != len(self.keys) or not self.ids:
            raise ValueError("validator ids and keys must be non-empty and aligned")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate validator id")
        object.__setattr__(self, "_keys", dict(zip(self.ids, self.keys)))

    @property
    def n(self):
        return len(self.ids)

    @property
    def f(self):
        return (self.n - 1) // 3

    @property
    def quorum(self):
        return (self.n + self.f + 2) // 2

    def leader(self, view):
        return self.ids[view % self.n]

    def key(self, validator_id):
        return self._keys.get(validator_id)

    def __contains__(self, validator_id):
        return validator_id in self._keys


# -- messages -----------------------------------------------------------------


@dataclass(frozen=True)
class Request:
    entry: bytes

    kind = Kind.REQUEST

    def to_wire(self):
        return (int(self.kind), self.entry)


def _header(view, seq, digest, leader):
    return encode(("pre-prepare", view, seq, digest, leader))


@dataclass(frozen=True)
class PrePrepare:
    view: int
    seq: int
    digest: bytes
    sender: str
    entries: tuple
    signature: bytes = b""

    kind = Kind.PRE_PREPARE

    def signing_bytes(self):
        return _header(self.view, self.seq, self.digest, self.sender)

    def to_wire(self):
        return (int(self.kind), self.view, self.seq, self.digest, self.sender, tuple(self.entries), self.signature)


@dataclass(frozen=True)
class Prepare:
    view: int
    seq: int
    digest: bytes
    sender: str
    leader_sig: bytes
    signature: bytes = b""

    kind = Kind.PREPARE

    def signing_bytes(self):
        return encode(("prepare", self.view, self.seq, self.digest, self.sender))

    def to_wire(self):
        return (int(self.kind), self.view, self.seq, self.digest, self.sender, self.leader_sig, self.signature)


@dataclass(frozen=True)
class Commit:
    view: int
    seq: int
    digest: bytes
    sender: str
    signature: bytes = b""

    kind = Kind.COMMIT

    def signing_bytes(self):
        return encode(("commit", self.view, self.seq, self.digest, self.sender))

    def to_wire(self):
        return (int(self.kind), self.view, self.seq, self.digest, self.sender, self.signature)


@dataclass(frozen=True)
class PreparedCert:
    preprepare: PrePrepare
    prepares: tuple

    @property
    def seq(self):
        return self.preprepare.seq

    @property
    def view(self):
        return self.preprepare.view

    def to_wire(self):
        return (self.preprepare.to_wire(), tuple(p.to_wire() for p in self.prepares))


@dataclass(frozen=True)
class CommitCert:
    seq: int
    view: int
    digest: bytes
    entries: tuple
    commits: tuple

    def to_wire(self):
        return (self.seq, self.view, self.digest, tuple(self.entries), tuple(c.to_wire() for c in self.commits))


@dataclass(frozen=True)
class ViewChange:
    new_view: int
    sender: str
    last_committed: int
    commit_proof: object  # CommitCert or None
    prepared: tuple
    signature: bytes = b""

    kind = Kind.VIEW_CHANGE

    def body_wire(self):
        return (
            "view-change",
            self.new_view,
            self.sender,
            self.last_committed,
            self.commit_proof.to_wire() if self.commit_proof else None,
            tuple(c.to_wire() for c in self.prepared),
        )

    def signing_bytes(self):
        return encode(self.body_wire())

    def to_wire(self):
        return (int(self.kind), self.body_wire(), self.signature)


@dataclass(frozen=True)
class NewView:
    view: int
    sender: str
    view_changes: tuple
    preprepares: tuple
    signature: bytes = b""

    kind = Kind.NEW_VIEW

    def body_wire(self):
        return (
            "new-view",
            self.view,
            self.sender,
            tuple(vc.to_wire() for vc in self.view_changes),
            tuple(pp.to_wire() for pp in self.preprepares),
        )

    def signing_bytes(self):
        return encode(self.body_wire())

    def to_wire(self):
        return (int(self.kind), self.body_wire(), self.signature)


@dataclass(frozen=True)
class Fetch:
    sender: str
    from_seq: int

    kind = Kind.FETCH

    def to_wire(self):
        return (int(self.kind), self.sender, self.from_seq)


@dataclass(frozen=True)
class CatchUp:
    certs: tuple
    new_view: object  # NewView or None

    kind = Kind.CATCH_UP

    def to_wire(self):
        return (
            int(self.kind),
            tuple(c.to_wire() for c in self.certs),
            self.new_view.to_wire() if self.new_view else None,
        )


def encode_message(msg):
    return encode(msg.to_wire())


def _pp_from(w):
    _, view, seq, digest, sender, entries, sig = w
    return PrePrepare(view, seq, digest, sender, tuple(entries), sig)


def _prepare_from(w):
    _, view, seq, digest, sender, leader_sig, sig = w
    return Prepare(view, seq, digest, sender, leader_sig, sig)


def _commit_from(w):
    _, view, seq, digest, sender, sig = w
    return Commit(view, seq, digest, sender, sig)


def commit_cert_from_wire(w):
    seq, view, digest, entries, commits = w
    return CommitCert(seq, view, digest, tuple(entries), tuple(_commit_from(c) for c in commits))


def _vc_from(w):
    _, body, sig = w
    tag, new_view, sender, last_committed, proof, prepared = body
    if tag != "view-change":
        raise DecodeError("bad view-change tag")
    return ViewChange(
        new_view,
        sender,
        last_committed,
        commit_cert_from_wire(proof) if proof is not None else None,
        tuple(PreparedCert(_pp_from(pp), tuple(_prepare_from(p) for p in prepares)) for pp, prepares in prepared),
        sig,
    )


def _nv_from(w):
    _, body, sig = w
    tag, view, sender, vcs, pps = body
    if tag != "new-view":
        raise DecodeError("bad new-view tag")
    return NewView(view, sender, tuple(_vc_from(v) for v in vcs), tuple(_pp_from(p) for p in pps), sig)


def decode_message(raw):
    try:
        wire = decode(raw)
        kind = Kind(wire[0])
        if kind == Kind.REQUEST:
            return Request(wire[1])
        if kind == Kind.PRE_PREPARE:
            return _pp_from(wire)
        if kind == Kind.PREPARE:
            return _prepare_from(wire)
        if kind == Kind.COMMIT:
            return _commit_from(wire)
        if kind == Kind.VIEW_CHANGE:
            return _vc_from(wire)
        if kind == Kind.NEW_VIEW:
            return _nv_from(wire)
        if kind == Kind.FETCH:
            return Fetch(wire[1], wire[2])
        if kind == Kind.CATCH_UP:
            return CatchUp(tuple(commit_cert_from_wire(c) for c in wire[1]), _nv_from(wire[2]) if wire[2] else None)
    except (ValueError, TypeError, IndexError) as exc:
        raise DecodeError(f"malformed consensus message: {exc}") from None
    raise DecodeError("unknown message kind")


def message_digest(msg, raw):
    """Digest shown in traces: the batch digest where one exists."""
    digest = getattr(msg, "digest", None)
    return digest if digest is not None else hashlib.sha256(raw).digest()


# -- certificate checks (pure) ---------------------------------------------------


def _signed_by(validators, sender, msg):
    key = validators.key(sender)
    return key is not None and consensus_verify(key, msg.signature, msg.signing_bytes())


def verify_commit_cert(cert, validators):
    if batch_digest(cert.entries) != cert.digest:
        return False
    senders = set()
    for c in cert.commits:
        if (c.view, c.seq, c.digest) != (cert.view, cert.seq, cert.digest) or c.sender in senders:
            return False
        if not _signed_by(validators, c.sender, c):
            return False
        senders.add(c.sender)
    return len(senders) >= validators.quorum


def verify_prepared_cert(cert, validators):
    pp = cert.preprepare
    leader = validators.leader(pp.view)
    if pp.sender != leader or not _signed_by(validators, leader, pp):
        return False
    if batch_digest(pp.entries) != pp.digest:
        return False
    senders = set()
    for p in cert.prepares:
        if (p.view, p.seq, p.digest) != (pp.view, pp.seq, pp.digest):
            return False
        if p.sender == leader or p.sender in senders or not _signed_by(validators, p.sender, p):
            return False
        senders.add(p.sender)
    return len(senders) >= validators.quorum - 1


def verify_view_change(vc, validators):
    if not _signed_by(validators, vc.sender, vc):
        return False
    if vc.last_committed > 0:
        proof = vc.commit_proof
        if proof is None or proof.seq != vc.last_committed or not verify_commit_cert(proof, validators):
            return False
    elif vc.commit_proof is not None:
        return False
    seqs = set()
    for cert in vc.prepared:
        if cert.seq <= vc.last_committed or cert.seq in seqs or cert.view >= vc.new_view:
            return False
        if not verify_prepared_cert(cert, validators):
            return False
        seqs.add(cert.seq)
    return True


def compute_reproposals(view_changes):
    """Sequences the new leader must re-propose: ``(low, [(seq, entries), ...])``.

    ``low`` is the highest proven commit among the view changes. For every
    sequence above it up to the highest prepared one, the batch from the
    highest-view prepared certificate is chosen, or an empty batch.
    """
    low = max(vc.last_committed for vc in view_changes)
    best = {}
    for vc in view_changes:
        for cert in vc.prepared:
            if cert.seq <= low:
                continue
            current = best.get(cert.seq)
            if current is None or cert.view > current.view:
                best[cert.seq] = cert
    high = max(best, default=low)
    plan = []
    for seq in range(low + 1, high + 1):
        cert = best.get(seq)
        plan.append((seq, cert.preprepare.entries if cert else ()))
    return low, plan


# -- replica ----------------------------------------------------------------------


@dataclass
class Outbound:
    dst: object  # validator id, or None for every other validator
    raw: bytes
    kind: Kind
    digest: bytes


@dataclass
class Step:
    outbound: list = field(default_factory=list)
    committed: list = field(default_factory=list)  # [(seq, CommitCert, [LogRecord])]

    def extend(self, other):
        self.outbound.extend(other.outbound)
        self.committed.extend(other.committed)


@dataclass(frozen=True)
class Evidence:
    equivocator: str
    view: int
    seq: int
    digest_a: bytes
    signature_a: bytes
    digest_b: bytes
    signature_b: bytes

    @property
    def key(self):
        return (self.equivocator, self.view, self.seq)

    def to_json(self):
        return json.dumps(
            {
                "equivocator": self.equivocator,
                "view": self.view,
                "seq": self.seq,
                "digest_a": self.digest_a.hex(),
                "signature_a": self.signature_a.hex(),
                "digest_b": self.digest_b.hex(),
                "signature_b": self.signature_b.hex(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(
            d["equivocator"],
            d["view"],
            d["seq"],
            bytes.fromhex(d["digest_a"]),
            bytes.fromhex(d["signature_a"]),
            bytes.fromhex(d["digest_b"]),
            bytes.fromhex(d["signature_b"]),
        )


def verify_evidence(evidence, validators):
    key = validators.key(evidence.equivocator)
    if key is None or evidence.digest_a == evidence.digest_b:
        return False
    if validators.leader(evidence.view) != evidence.equivocator:
        return False
    for digest, sig in ((evidence.digest_a, evidence.signature_a), (evidence.digest_b, evidence.signature_b)):
        if not consensus_verify(key, sig, _header(evidence.view, evidence.seq, digest, evidence.equivocator)):
            return False
    return True


class _Slot:
    __slots__ = ("preprepare", "prepares", "commits", "prepared", "sent_commit")

    def __init__(self):
        self.preprepare = None
        self.prepares = {}  # digest -> {sender: Prepare}
        self.commits = {}  # digest -> {sender: Commit}
        self.prepared = False
        self.sent_commit = False


class Replica:
    def __init__(
        self,
        node_id,
        signer,
        validators,
        ledger,
        *,
        timeout_ms=500,
        batch_size=64,
        window=8,
        evidence_path=None,
    ):
        if node_id not in validators:
            raise ValueError(f"{node_id} is not a validator")
        self.id = node_id
        self.signer = signer
        self.validators = validators
        self.ledger = ledger
        self.timeout_ms = timeout_ms
        self.batch_size = batch_size
        self.window = window
        self.evidence_path = evidence_path

        self.view = 0
        self.in_view_change = False
        self.low_watermark = 0
        self.last_committed = 0
        self.next_seq = 1
        self.slots = {}
        self.prepared_certs = {}
        self.decided = {}
        self.pending = {}  # entry digest -> (raw, arrival time)
        self.in_flight = set()
        self.delivered = set()
        self.leader_headers = {}
        self.evidence = []
        self._evidence_keys = set()
        self.view_changes = {}
        self.new_view_msg = None
        self.sent_new_view = set()
        self.deadline = None
        self.vc_attempts = 0
        self.view_change_count = 0
        self.dropped = {}
        self._next_fetch_at = 0
        self._entries = {}

    # -- helpers --------------------------------------------------------------

    @property
    def leader_id(self):
        return self.validators.leader(self.view)

    @property
    def is_leader(self):
        return self.leader_id == self.id and not self.in_view_change

    def _drop(self, why):
        self.dropped[why] = self.dropped.get(why, 0) + 1

    def _sign(self, msg):
        return type(msg)(**{**msg.__dict__, "signature": self.signer.sign(msg.signing_bytes())})

    def _emit(self, step, msg, dst=None):
        raw = encode_message(msg)
        step.outbound.append(Outbound(dst, raw, msg.kind, message_digest(msg, raw)))

    def _slot(self, view, seq):
        slot = self.slots.get((view, seq))
        if slot is None:
            slot = self.slots[(view, seq)] = _Slot()
        return slot

    def _entry(self, raw):
        digest = hashlib.sha256(raw).digest()
        entry = self._entries.get(digest)
        if entry is None:
            entry = parse_entry(raw)
            self._entries[digest] = entry
        return entry

    def _attributable(self, raw):
        """Entries are ordered only if their submitter signature checks out."""
        try:
            entry = self._entry(raw)
        except DecodeError:
            return False, Reason.MALFORMED
        verdict = self.ledger.authenticity(entry)
        if not verdict.accepted and verdict.reason in (Reason.BAD_SIGNATURE, Reason.MALFORMED):
            return False, verdict.reason
        return True, None

    def _arm_timer(self, now):
        if self.deadline is None and (self.pending or self.in_view_change):
            self.deadline = now + self.timeout_ms

    # -- client side --------------------------------------------------------------

    def submit(self, raw, now, forward=True):
        """A request from this replica's own MSB (``forward``) or the network.

        Local requests are forwarded to every other replica so that all of
        them arm a timer and a silent leader gets replaced.
        """
        step = Step()
        digest = hashlib.sha256(raw).digest()
        if digest in self.delivered or digest in self.pending:
            return step
        ok, _ = self._attributable(raw)
        if not ok:
            self._drop("unattributable-request")
            return step
        self.pending[digest] = (raw, now)
        if forward:
            self._emit(step, Request(raw))
        self._arm_timer(now)
        self._try_propose(step, now)
        return step

    def propose(self, entries, now=0):
        """Leader-only: order ``entries`` (raw bytes) at the next sequence number."""
        if not self.is_leader:
            raise NotLeader(f"{self.id} is not leader of view {self.view}")
        for raw in entries:
            ok, reason = self._attributable(raw)
            if not ok:
                raise ValidationFailed(reason)
        step = Step()
        self._propose_batch(step, tuple(entries), now)
        return step.outbound

    def _try_propose(self, step, now):
        # a lagging leader cannot tell which pending requests are already committed
        if self.last_committed < self.low_watermark:
            return
        while self.is_leader and self.next_seq - 1 - self.last_committed < self.window:
            batch = []
            for digest, (raw, _) in self.pending.items():
                if digest in self.in_flight:
                    continue
                batch.append(raw)
                if len(batch) >= self.batch_size:
                    break
            if not batch:
                return
            self._propose_batch(step, tuple(batch), now)

    def _propose_batch(self, step, entries, now):
        seq = self.next_seq
        self.next_seq += 1
        pp = self._sign(PrePrepare(self.view, seq, batch_digest(entries), self.id, entries))
        for raw in entries:
            self.in_flight.add(hashlib.sha256(raw).digest())
        self._send_preprepare(step, pp, now)

    def _send_preprepare(self, step, pp, now):
        self._accept_preprepare(step, pp, now)
        self._emit(step, pp)

    # -- dispatch -----------------------------------------------------------------

    def handle_message(self, raw, now):
        step = Step()
        try:
            msg = decode_message(raw)
        except DecodeError:
            self._drop("malformed")
            return step
        handler = {
            Kind.REQUEST: self._on_request,
            Kind.PRE_PREPARE: self._on_preprepare,
            Kind.PREPARE: self._on_prepare,
            Kind.COMMIT: self._on_commit,
            Kind.VIEW_CHANGE: self._on_view_change,
            Kind.NEW_VIEW: self._on_new_view,
            Kind.FETCH: self._on_fetch,
            Kind.CATCH_UP: self._on_catch_up,
        }[msg.kind]
        handler(step, msg, now)
        return step

    def on_timer(self, now):
        step = Step()
        if self.deadline is None or now < self.deadline:
            return step
        self.deadline = None
        if self.in_view_change and len(self.view_changes.get(self.view, {})) < self.validators.quorum:
            self._wait_for_view_change(step, now)
        elif self.in_view_change or self.pending:
            self._start_view_change(step, self.view + 1, now)
            self._maybe_fetch(step, now)
        return step

    def _wait_for_view_change(self, step, now):
        """Alone in a view change: repeat our vote and requests instead of escalating.

        Moving further ahead without a quorum would only strand this replica
        in a view nobody else reaches.
        """
        own = self.view_changes.get(self.view, {}).get(self.id)
        if own is not None:
            self._emit(step, own)
        for raw, _ in self.pending.values():
            self._emit(step, Request(raw))
        self._maybe_fetch(step, now, force=True)
        self.deadline = now + self.timeout_ms * (2 ** min(self.vc_attempts, 6))
        self.vc_attempts += 1

    def _on_request(self, step, msg, now):
        step.extend(self.submit(msg.entry, now, forward=False))

    # -- normal case --------------------------------------------------------------

    def _note_header(self, leader, view, seq, digest, sig):
        key = (view, seq)
        seen = self.leader_headers.get(key)
        if seen is None:
            self.leader_headers[key] = (digest, sig)
            return
        if seen[0] != digest and (leader, view, seq) not in self._evidence_keys:
            ev = Evidence(leader, view, seq, seen[0], seen[1], digest, sig)
            self._evidence_keys.add(ev.key)
            self.evidence.append(ev)
            log.warning("%s: equivocation by %s at view %d seq %d", self.id, leader, view, seq)
            if self.evidence_path:
                with open(self.evidence_path, "a", encoding="utf-8") as fh:
                    fh.write(ev.to_json() + "\n")

    def _on_preprepare(self, step, pp, now):
        leader = self.validators.leader(pp.view)
        if pp.sender != leader or not _signed_by(self.validators, leader, pp):
            self._drop("bad-preprepare-signature")
            return
        self._note_header(leader, pp.view, pp.seq, pp.digest, pp.signature)
        if pp.view != self.view or self.in_view_change:
            self._drop("preprepare-wrong-view")
            self._maybe_fetch(step, now)
            return
        self._accept_preprepare(step, pp, now)

    def _accept_preprepare(self, step, pp, now):
        if not self.low_watermark < pp.seq <= self.low_watermark + MAX_AHEAD:
            self._drop("preprepare-out-of-window")
            return
        if batch_digest(pp.entries) != pp.digest:
            self._drop("preprepare-digest")
            return
        slot = self._slot(pp.view, pp.seq)
        if slot.preprepare is not None:
            if slot.preprepare.digest != pp.digest:
                self._drop("preprepare-conflict")
            return
        for raw in pp.entries:
            ok, _ = self._attributable(raw)
            if not ok:
                self._drop("preprepare-unattributable")
                return
        self._note_header(pp.sender, pp.view, pp.seq, pp.digest, pp.signature)
        slot.preprepare = pp
        if pp.sender != self.id:
            prepare = self._sign(Prepare(pp.view, pp.seq, pp.digest, self.id, pp.signature))
            slot.prepares.setdefault(pp.digest, {})[self.id] = prepare
            self._emit(step, prepare)
        self._check_prepared(step, pp.view, pp.seq, now)

    def _on_prepare(self, step, p, now):
        leader = self.validators.leader(p.view)
        if p.sender == leader or not _signed_by(self.validators, p.sender, p):
            self._drop("bad-prepare")
            return
        if not consensus_verify(self.validators.key(leader), p.leader_sig, _header(p.view, p.seq, p.digest, leader)):
            self._drop("bad-prepare-leader-sig")
            return
        self._note_header(leader, p.view, p.seq, p.digest, p.leader_sig)
        if p.view != self.view:
            self._maybe_fetch(step, now)
        slot = self._slot(p.view, p.seq)
        slot.prepares.setdefault(p.digest, {})[p.sender] = p
        if p.view == self.view and not self.in_view_change:
            self._check_prepared(step, p.view, p.seq, now)

    def _check_prepared(self, step, view, seq, now):
        slot = self.slots.get((view, seq))
        if slot is None or slot.preprepare is None or slot.prepared:
            return
        digest = slot.preprepare.digest
        leader = self.validators.leader(view)
        votes = {s: p for s, p in slot.prepares.get(digest, {}).items() if s != leader}
        if len(votes) < self.validators.quorum - 1:
            return
        slot.prepared = True
        chosen = tuple(votes[s] for s in sorted(votes))
        current = self.prepared_certs.get(seq)
        if current is None or current.view < view:
            self.prepared_certs[seq] = PreparedCert(slot.preprepare, chosen)
        if not slot.sent_commit:
            slot.sent_commit = True
            commit = self._sign(Commit(view, seq, digest, self.id))
            slot.commits.setdefault(digest, {})[self.id] = commit
            self._emit(step, commit)
        self._check_committed(step, view, seq, now)

    def _on_commit(self, step, c, now):
        if c.sender not in self.validators or not _signed_by(self.validators, c.sender, c):
            self._drop("bad-commit")
            return
        slot = self._slot(c.view, c.seq)
        slot.commits.setdefault(c.digest, {})[c.sender] = c
        if c.view != self.view:
            self._maybe_fetch(step, now)
        self._check_committed(step, c.view, c.seq, now)

    def _check_committed(self, step, view, seq, now):
        slot = self.slots.get((view, seq))
        if slot is None or not slot.prepared or seq in self.decided:
            return
        digest = slot.preprepare.digest
        commits = slot.commits.get(digest, {})
        if len(commits) < self.validators.quorum:
            return
        chosen = tuple(commits[s] for s in sorted(commits))
        self.decided[seq] = CommitCert(seq, view, digest, slot.preprepare.entries, chosen)
        self._deliver(step, now)

    def _deliver(self, step, now):
        progressed = False
        while self.last_committed + 1 in self.decided:
            seq = self.last_committed + 1
            cert = self.decided[seq]
            records = []
            for raw in cert.entries:
                entry = self._entry(raw)
                records.append(execute(self.ledger, entry))
                self.delivered.add(entry.digest)
                self.pending.pop(entry.digest, None)
                self.in_flight.discard(entry.digest)
            self.ledger.checkpoint()
            self.last_committed = seq
            step.committed.append((seq, cert, records))
            progressed = True
        if progressed:
            self.next_seq = max(self.next_seq, self.last_committed + 1)
            if not self.in_view_change:
                self.deadline = None
                self.vc_attempts = 0
                self._arm_timer(now)
            self._try_propose(step, now)
        if any(s > self.last_committed + 1 for s in self.decided):
            self._maybe_fetch(step, now)

    # -- view change ----------------------------------------------------------------

    def _start_view_change(self, step, new_view, now):
        if new_view <= self.view and self.in_view_change:
            return
        self.view = new_view
        self.in_view_change = True
        self.view_change_count += 1
        self.in_flight.clear()
        proof = self.decided.get(self.last_committed) if self.last_committed else None
        prepared = tuple(
            self.prepared_certs[s] for s in sorted(self.prepared_certs) if s > self.last_committed
        )
        vc = self._sign(ViewChange(new_view, self.id, self.last_committed, proof, prepared))
        self.view_changes.setdefault(new_view, {})[self.id] = vc
        self._emit(step, vc)
        backoff = self.timeout_ms * (2 ** min(self.vc_attempts, 6))
        self.vc_attempts += 1
        self.deadline = now + backoff
        log.info("%s: view change to %d", self.id, new_view)
        self._maybe_send_new_view(step, new_view, now)

    def _on_view_change(self, step, vc, now):
        if vc.sender not in self.validators or not verify_view_change(vc, self.validators):
            self._drop("bad-view-change")
            return
        if vc.new_view < self.view or (vc.new_view == self.view and not self.in_view_change):
            return
        self.view_changes.setdefault(vc.new_view, {})[vc.sender] = vc
        # join once f+1 replicas are already ahead of us
        ahead = {}
        for view, senders in self.view_changes.items():
            if view > self.view:
                for sender in senders:
                    ahead[sender] = min(ahead.get(sender, view), view)
        if len(ahead) >= self.validators.f + 1:
            target = min(v for v in ahead.values())
            target = max(target, self.view + (0 if self.in_view_change else 1))
            if target > self.view or not self.in_view_change:
                self._start_view_change(step, target, now)
        self._maybe_send_new_view(step, vc.new_view, now)

    def _maybe_send_new_view(self, step, view, now):
        if self.validators.leader(view) != self.id or view in self.sent_new_view:
            return
        if not (self.in_view_change and self.view == view):
            return
        vcs = self.view_changes.get(view, {})
        if len(vcs) < self.validators.quorum:
            return
        chosen = tuple(vcs[s] for s in sorted(vcs))
        _, plan = compute_reproposals(chosen)
        pps = tuple(self._sign(PrePrepare(view, seq, batch_digest(entries), self.id, entries)) for seq, entries in plan)
        nv = self._sign(NewView(view, self.id, chosen, pps))
        self.sent_new_view.add(view)
        self._emit(step, nv)
        self._install_new_view(step, nv, now)

    def _on_new_view(self, step, nv, now):
        if not self._valid_new_view(nv):
            self._drop("bad-new-view")
            return
        if nv.view < self.view or (nv.view == self.view and not self.in_view_change):
            return
        self._install_new_view(step, nv, now)

    def _valid_new_view(self, nv):
        v = self.validators
        if nv.sender != v.leader(nv.view) or not _signed_by(v, nv.sender, nv):
            return False
        senders = set()
        for vc in nv.view_changes:
            if vc.new_view != nv.view or vc.sender in senders or not verify_view_change(vc, v):
                return False
            senders.add(vc.sender)
        if len(senders) < v.quorum:
            return False
        _, plan = compute_reproposals(nv.view_changes)
        if len(plan) != len(nv.preprepares):
            return False
        for (seq, entries), pp in zip(plan, nv.preprepares):
            if (pp.view, pp.seq, pp.sender) != (nv.view, seq, nv.sender) or tuple(pp.entries) != tuple(entries):
                return False
            if pp.digest != batch_digest(entries) or not _signed_by(v, nv.sender, pp):
                return False
        return True

    def _install_new_view(self, step, nv, now):
        low, plan = compute_reproposals(nv.view_changes)
        self.view = nv.view
        self.in_view_change = False
        self.new_view_msg = nv
        self.low_watermark = low
        self.vc_attempts = 0
        self.in_flight.clear()
        self.deadline = None
        self._arm_timer(now)
        top = plan[-1][0] if plan else low
        self.next_seq = max(top, low, self.last_committed) + 1
        for pp in nv.preprepares:
            self._note_header(pp.sender, pp.view, pp.seq, pp.digest, pp.signature)
            for raw in pp.entries:
                self.in_flight.add(hashlib.sha256(raw).digest())
            self._accept_preprepare(step, pp, now)
        # prepares that raced ahead of the new view
        for (view, seq) in list(self.slots):
            if view == self.view:
                self._check_prepared(step, view, seq, now)
        if low > self.last_committed:
            self._maybe_fetch(step, now, force=True)
        self._try_propose(step, now)

    # -- catch-up -------------------------------------------------------------------

    def _maybe_fetch(self, step, now, force=False):
        if not force and now < self._next_fetch_at:
            return
        self._next_fetch_at = now + max(1, self.timeout_ms // 2)
        self._emit(step, Fetch(self.id, self.last_committed + 1))

    def _on_fetch(self, step, msg, now):
        if msg.sender not in self.validators or msg.sender == self.id:
            return
        certs = tuple(
            self.decided[s]
            for s in range(msg.from_seq, min(self.last_committed, msg.from_seq + FETCH_BATCH - 1) + 1)
            if s in self.decided
        )
        if certs or self.new_view_msg is not None:
            self._emit(step, CatchUp(certs, self.new_view_msg), dst=msg.sender)

    def _on_catch_up(self, step, msg, now):
        for cert in msg.certs:
            if cert.seq in self.decided or cert.seq <= self.last_committed:
                continue
            if not verify_commit_cert(cert, self.validators):
                self._drop("bad-commit-cert")
                continue
            for raw in cert.entries:
                try:
                    self._entry(raw)
                except DecodeError:
                    break
            else:
                self.decided[cert.seq] = cert
        before = self.last_committed
        self._deliver(step, now)
        nv = msg.new_view
        if nv is not None and (nv.view > self.view or (nv.view == self.view and self.in_view_change)):
            if self._valid_new_view(nv):
                self._install_new_view(step, nv, now)
        if self.last_committed > before and self.last_committed % FETCH_BATCH == 0:
            self._maybe_fetch(step, now, force=True)


class EquivocatingReplica(Replica):
    """Byzantine leader: sends two different batches for the same sequence.

    Honest recipients are split in two groups at random; each group gets one
    variant plus a Commit vote for it. ``injected`` lists every (view, seq,
    group_a, group_b) this replica produced.
    """

    def __init__(self, *args, rng=None, **kwargs):
        super().__init__(*args, **kwargs)
        self.rng = rng or random.Random(0)
        self.injected = []

    def _send_preprepare(self, step, pp, now):
        others = [v for v in self.validators.ids if v != self.id]
        if len(pp.entries) > 1:
            variant = tuple(reversed(pp.entries))
        else:
            variant = ()
        alt = self._sign(PrePrepare(pp.view, pp.seq, batch_digest(variant), self.id, variant))
        self.rng.shuffle(others)
        cut = self.rng.randint(1, len(others) - 1)
        group_a, group_b = sorted(others[:cut]), sorted(others[cut:])
        self._accept_preprepare(step, pp, now)
        for variant_pp, group in ((pp, group_a), (alt, group_b)):
            commit = self._sign(Commit(variant_pp.view, variant_pp.seq, variant_pp.digest, self.id))
            for dst in group:
                self._emit(step, variant_pp, dst=dst)
                self._emit(step, commit, dst=dst)
        self.injected.append((pp.view, pp.seq, tuple(group_a), tuple(group_b)))
