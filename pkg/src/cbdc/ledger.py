"""Replicated append-only ledger.

Entries are ordered by consensus and then executed deterministically by
every replica: :func:`execute` validates an entry against the current state
and either applies it or records the rejection. Both outcomes are appended
to the hash-chained log so auditors see every attempt and its verdict.

Signature and certificate checks depend only on the entry and genesis, so
their verdict is cached per entry digest; the stateful checks (nonce,
spent-set, reserves, claims, velocity) run at execution time.
"""
import hashlib
import json
from dataclasses import dataclass, replace
from enum import IntEnum
from functools import cached_property, lru_cache

from cbdc import blindsig
from cbdc.blindsig import BlindedMessage
from cbdc.encoding import decode, encode
from cbdc.errors import DecodeError, HeightOutOfRange
from cbdc.signing import entry_verify
from cbdc.token import SpendContext, SpentInput, SpentSet, ed25519_verify, token_id_for


class EntryType(IntEnum):
    WITHDRAWAL = 1
    DEPOSIT = 2
    MEDIATED_TRANSFER = 3
    DISBURSEMENT = 4
    RESERVE_EXCHANGE = 5


class Reason:
    BAD_SIGNATURE = "BadSignature"
    DUPLICATE_NONCE = "DuplicateNonce"
    DOUBLE_SPEND = "DoubleSpend"
    POLICY_VIOLATION = "PolicyViolation"
    VALUE_MISMATCH = "ValueMismatch"
    UNKNOWN_KEY_ID = "UnknownKeyId"
    INVALID_TOKEN = "InvalidToken"
    INSUFFICIENT_RESERVE = "InsufficientReserve"
    DUPLICATE_CLAIM = "DuplicateClaim"
    MALFORMED = "Malformed"


AUTH_CACHE_SIZE = 1 << 17

TO_CBDC = "to_cbdc"
TO_RESERVES = "to_reserves"


def _outputs_wire(outputs):
    return tuple(o.to_wire() for o in outputs)


def _outputs_from(wire):
    return tuple(BlindedMessage.from_wire(o) for o in wire)


def _inputs_wire(inputs):
    return tuple(i.to_wire() for i in inputs)


def _typed(value, kind):
    # bool is an int subclass; keep the two apart so every field has one encoding
    if type(value) is not kind:
        raise TypeError(f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _inputs_from(wire):
    return tuple(SpentInput.from_wire(i) for i in wire)


@dataclass(frozen=True)
class Withdrawal:
    account_commitment: bytes
    amount: int
    outputs: tuple

    entry_type = EntryType.WITHDRAWAL
    inputs = ()

    def to_wire(self):
        return (self.account_commitment, self.amount, _outputs_wire(self.outputs))

    @classmethod
    def from_wire(cls, wire):
        commitment, amount, outputs = wire
        return cls(_typed(commitment, bytes), _typed(amount, int), _outputs_from(outputs))


@dataclass(frozen=True)
class Deposit:
    inputs: tuple
    account_commitment: bytes
    amount: int
    change: tuple = ()

    entry_type = EntryType.DEPOSIT

    @property
    def outputs(self):
        return self.change

    def to_wire(self):
        return (_inputs_wire(self.inputs), self.account_commitment, self.amount, _outputs_wire(self.change))

    @classmethod
    def from_wire(cls, wire):
        inputs, commitment, amount, change = wire
        return cls(_inputs_from(inputs), _typed(commitment, bytes), _typed(amount, int), _outputs_from(change))


@dataclass(frozen=True)
class MediatedTransfer:
    inputs: tuple
    outputs: tuple
    fee: int
    id_flag: bool

    entry_type = EntryType.MEDIATED_TRANSFER

    def to_wire(self):
        return (_inputs_wire(self.inputs), _outputs_wire(self.outputs), self.fee, self.id_flag)

    @classmethod
    def from_wire(cls, wire):
        inputs, outputs, fee, id_flag = wire
        return cls(_inputs_from(inputs), _outputs_from(outputs), _typed(fee, int), _typed(id_flag, bool))


@dataclass(frozen=True)
class Disbursement:
    treasury_commitment: bytes
    claim_ref: bytes
    amount: int
    outputs: tuple

    entry_type = EntryType.DISBURSEMENT
    inputs = ()

    def to_wire(self):
        return (self.treasury_commitment, self.claim_ref, self.amount, _outputs_wire(self.outputs))

    @classmethod
    def from_wire(cls, wire):
        commitment, claim_ref, amount, outputs = wire
        return cls(_typed(commitment, bytes), _typed(claim_ref, bytes), _typed(amount, int), _outputs_from(outputs))


@dataclass(frozen=True)
class ReserveExchange:
    msb_id: str
    amount: int
    direction: str

    entry_type = EntryType.RESERVE_EXCHANGE
    inputs = ()
    outputs = ()

    def to_wire(self):
        return (self.msb_id, self.amount, self.direction)

    @classmethod
    def from_wire(cls, wire):
        msb_id, amount, direction = wire
        return cls(_typed(msb_id, str), _typed(amount, int), _typed(direction, str))


PAYLOADS = {
    EntryType.WITHDRAWAL: Withdrawal,
    EntryType.DEPOSIT: Deposit,
    EntryType.MEDIATED_TRANSFER: MediatedTransfer,
    EntryType.DISBURSEMENT: Disbursement,
    EntryType.RESERVE_EXCHANGE: ReserveExchange,
}


@dataclass(frozen=True)
class LedgerEntry:
    entry_type: EntryType
    submitting_msb_id: str
    nonce: int
    logical_timestamp: int
    payload: object
    signature: bytes = b""

    def body_wire(self):
        return (
            "ledger-entry",
            int(self.entry_type),
            self.submitting_msb_id,
            self.nonce,
            self.logical_timestamp,
            self.payload.to_wire(),
        )

    @cached_property
    def signing_bytes(self):
        return encode(self.body_wire())

    @cached_property
    def raw(self):
        return encode((self.body_wire(), self.signature))

    @cached_property
    def digest(self):
        return hashlib.sha256(self.raw).digest()

    def signed(self, signer):
        unsigned = replace(self, signature=b"")
        return replace(self, signature=signer.sign(unsigned.signing_bytes))

    @classmethod
    def from_bytes(cls, raw):
        try:
            body, signature = decode(raw)
            tag, kind, msb_id, nonce, timestamp, payload = body
            if tag != "ledger-entry":
                raise DecodeError("not a ledger entry")
            entry_type = EntryType(kind)
            entry = cls(entry_type, _typed(msb_id, str), _typed(nonce, int), _typed(timestamp, int),
                        PAYLOADS[entry_type].from_wire(payload), _typed(signature, bytes))
        except (ValueError, TypeError, KeyError) as exc:
            raise DecodeError(f"malformed ledger entry: {exc}") from None
        # the decoder is strict, so re-encoding the body is the only canonical check left
        sig_len = len(encode(signature))
        body_bytes = encode(entry.body_wire())
        if bytes(raw[5:len(raw) - sig_len]) != body_bytes or len(raw) != 5 + len(body_bytes) + sig_len:
            raise DecodeError("non-canonical ledger entry")
        entry.__dict__["signing_bytes"] = body_bytes
        entry.__dict__["raw"] = bytes(raw)
        return entry


@lru_cache(maxsize=1 << 16)
def parse_entry(raw):
    """Memoized :meth:`LedgerEntry.from_bytes`; entries are immutable, so parses can be shared."""
    return LedgerEntry.from_bytes(raw)


def spend_context(entry, genesis):
    """The context every input authorization of ``entry`` must sign."""
    amount = 0
    for item in entry.payload.inputs:
        key = genesis.issuer_key(item.key_id)
        amount += key.denomination if key else 0
    return SpendContext(entry.submitting_msb_id, entry.nonce, amount, entry.logical_timestamp)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str = None
    detail: str = ""

    def __str__(self):
        if self.accepted:
            return "Accept"
        return f"Reject:{self.reason}:{self.detail}" if self.detail else f"Reject:{self.reason}"

    @classmethod
    def parse(cls, text):
        if text == "Accept":
            return ACCEPT
        parts = text.split(":", 2)
        if parts[0] != "Reject" or len(parts) < 2:
            raise ValueError(f"bad verdict {text!r}")
        return cls(False, parts[1], parts[2] if len(parts) > 2 else "")


ACCEPT = Verdict(True)


def reject(reason, detail=""):
    return Verdict(False, reason, detail)


@dataclass(frozen=True)
class LogRecord:
    height: int
    entry: LedgerEntry
    verdict: Verdict
    chain_hash: bytes

    @property
    def submitting_msb_id(self):
        return self.entry.submitting_msb_id

    @property
    def digest(self):
        return self.entry.digest

    def to_json(self):
        return json.dumps(
            {
                "height": self.height,
                "msb": self.entry.submitting_msb_id,
                "type": self.entry.entry_type.name,
                "digest": self.entry.digest.hex(),
                "verdict": str(self.verdict),
                "chain": self.chain_hash.hex(),
                "entry": self.entry.raw.hex(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line):
        doc = json.loads(line)
        entry = LedgerEntry.from_bytes(bytes.fromhex(doc["entry"]))
        return cls(doc["height"], entry, Verdict.parse(doc["verdict"]), bytes.fromhex(doc["chain"]))


def chain_step(previous, height, digest, verdict):
    return hashlib.sha256(previous + encode((height, digest, str(verdict)))).digest()


def genesis_chain_head(genesis):
    return hashlib.sha256(b"cbdc-chain\x00" + genesis.hash()).digest()


@dataclass(frozen=True)
class AuditStream:
    records: tuple
    checkpoints: tuple  # ((height, state_hash), ...)
    from_height: int


class LedgerState:
    """One replica's copy of the ledger and its derived state."""

    def __init__(self, genesis):
        self.genesis = genesis
        self.records = []
        self.head = genesis_chain_head(genesis)
        self.spent = SpentSet()
        self.reserves = {msb: amount for msb, amount in genesis.reserves}
        self.used_nonces = {}
        self.nonce_acc = b"\x00" * 32
        self.claims = set()
        self.claims_acc = b"\x00" * 32
        self.withdrawn = {}  # (msb_id, day) -> accepted withdrawal value
        self.issued = {}  # (denomination, vintage) -> value
        self.redeemed = {}
        self.checkpoints = []

    @property
    def height(self):
        return len(self.records)

    def outstanding(self):
        keys = set(self.issued) | set(self.redeemed)
        return {k: self.issued.get(k, 0) - self.redeemed.get(k, 0) for k in sorted(keys)}

    def state_hash(self):
        return hashlib.sha256(
            encode(
                (
                    "ledger-state",
                    self.height,
                    self.head,
                    self.spent.accumulator,
                    len(self.spent),
                    self.nonce_acc,
                    self.claims_acc,
                    tuple(sorted(self.reserves.items())),
                    tuple(sorted(self.issued.items())),
                    tuple(sorted(self.redeemed.items())),
                    tuple(sorted(self.withdrawn.items())),
                )
            )
        ).digest()

    def authenticity(self, entry):
        """Cached result of :func:`authenticate` for ``entry``.

        The verdict depends on the entry bytes and genesis only, so the cache
        lives on the genesis and replicas in one process share it.
        """
        cache = self.genesis.authenticity_cache
        verdict = cache.get(entry.digest)
        if verdict is None:
            verdict = authenticate(self.genesis, entry)
            if len(cache) >= AUTH_CACHE_SIZE:
                cache.clear()
            cache[entry.digest] = verdict
        return verdict

    def checkpoint(self):
        mark = (self.height, self.state_hash())
        if not self.checkpoints or self.checkpoints[-1][0] != mark[0]:
            self.checkpoints.append(mark)
        return mark


def _value(genesis, items):
    total = 0
    for item in items:
        key = genesis.issuer_key(item.key_id)
        total += key.denomination
    return total


def authenticate(genesis, entry):
    """Checks that depend only on the entry and genesis."""
    validator = genesis.validator(entry.submitting_msb_id)
    if validator is None:
        return reject(Reason.BAD_SIGNATURE, "unknown submitter")
    if not entry.signature or not entry_verify(validator.entry_key, entry.signature, entry.signing_bytes):
        return reject(Reason.BAD_SIGNATURE, entry.submitting_msb_id)
    payload = entry.payload
    if not isinstance(payload, PAYLOADS[entry.entry_type]):
        return reject(Reason.MALFORMED, "payload type")
    for item in payload.inputs:
        if genesis.issuer_key(item.key_id) is None:
            return reject(Reason.UNKNOWN_KEY_ID, item.key_id.hex())
    for out in payload.outputs:
        key = genesis.issuer_key(out.key_id)
        if key is None:
            return reject(Reason.UNKNOWN_KEY_ID, out.key_id.hex())
        if out.width != key.width or out.value >= key.n:
            return reject(Reason.MALFORMED, "blinded value out of range")

    verdict = _check_value(genesis, entry)
    if not verdict.accepted:
        return verdict

    if payload.inputs:
        context = spend_context(entry, genesis)
        context_hash = context.digest()
        for item in payload.inputs:
            key = genesis.issuer_key(item.key_id)
            if (
                token_id_for(item.verification_key) != item.token_id
                or item.certificate.token_id != item.token_id
                or item.authorization.token_id != item.token_id
                or item.authorization.context_hash != context_hash
                or not blindsig.verify(item.token_id, item.certificate.signature, key)
                or not ed25519_verify(item.verification_key, item.authorization.signature, context_hash)
            ):
                return reject(Reason.INVALID_TOKEN, item.token_id.hex())
    return ACCEPT


def _check_value(genesis, entry):
    payload = entry.payload
    policy = genesis.policy
    kind = entry.entry_type
    if kind == EntryType.WITHDRAWAL:
        if not payload.outputs or payload.amount != _value(genesis, payload.outputs):
            return reject(Reason.VALUE_MISMATCH, "withdrawal amount")
    elif kind == EntryType.DEPOSIT:
        if not payload.inputs or payload.amount <= 0:
            return reject(Reason.VALUE_MISMATCH, "empty deposit")
        if _value(genesis, payload.inputs) != payload.amount + _value(genesis, payload.change):
            return reject(Reason.VALUE_MISMATCH, "deposit inputs != amount + change")
    elif kind == EntryType.MEDIATED_TRANSFER:
        if not payload.inputs or not payload.outputs:
            return reject(Reason.VALUE_MISMATCH, "empty transfer")
        value_in = _value(genesis, payload.inputs)
        if value_in != _value(genesis, payload.outputs) + payload.fee:
            return reject(Reason.VALUE_MISMATCH, "inputs != outputs + fee")
        if payload.fee != required_fee(genesis, payload):
            return reject(Reason.VALUE_MISMATCH, "fee")
        if value_in >= policy.id_threshold and not payload.id_flag:
            return reject(Reason.POLICY_VIOLATION, "id-required")
    elif kind == EntryType.DISBURSEMENT:
        if not payload.outputs or payload.amount != _value(genesis, payload.outputs):
            return reject(Reason.VALUE_MISMATCH, "disbursement amount")
    elif kind == EntryType.RESERVE_EXCHANGE:
        if payload.amount <= 0 or payload.direction not in (TO_CBDC, TO_RESERVES):
            return reject(Reason.VALUE_MISMATCH, "reserve exchange")
        if payload.msb_id != entry.submitting_msb_id:
            return reject(Reason.POLICY_VIOLATION, "foreign-msb")
    return ACCEPT


def required_fee(genesis, transfer):
    """Fee a mediated transfer must carry under the genesis fee schedule."""
    fee = genesis.policy.mediated_fee
    vintages_in = {genesis.issuer_key(i.key_id).vintage for i in transfer.inputs}
    vintages_out = {genesis.issuer_key(o.key_id).vintage for o in transfer.outputs}
    if vintages_out - vintages_in:
        fee += genesis.policy.vintage_exchange_fee
    return fee


def validate_entry(state, entry):
    """Accept or Reject(reason) for ``entry`` against ``state``. Deterministic."""
    verdict = state.authenticity(entry)
    if not verdict.accepted:
        return verdict

    genesis = state.genesis
    payload = entry.payload
    msb = entry.submitting_msb_id
    if entry.nonce in state.used_nonces.get(msb, ()):
        return reject(Reason.DUPLICATE_NONCE, str(entry.nonce))

    seen = set()
    for item in payload.inputs:
        if item.token_id in state.spent or item.token_id in seen:
            return reject(Reason.DOUBLE_SPEND, item.token_id.hex())
        seen.add(item.token_id)

    reserve = state.reserves.get(msb, 0)
    kind = entry.entry_type
    if kind == EntryType.WITHDRAWAL:
        if reserve < payload.amount:
            return reject(Reason.INSUFFICIENT_RESERVE, msb)
        day = genesis.policy.day_of(entry.logical_timestamp)
        if state.withdrawn.get((msb, day), 0) + payload.amount > genesis.policy.msb_withdrawal_velocity_cap:
            return reject(Reason.POLICY_VIOLATION, "msb-velocity")
    elif kind == EntryType.DISBURSEMENT:
        if payload.claim_ref in state.claims:
            return reject(Reason.DUPLICATE_CLAIM, payload.claim_ref.hex())
        if reserve < payload.amount:
            return reject(Reason.INSUFFICIENT_RESERVE, msb)
    elif kind == EntryType.RESERVE_EXCHANGE:
        if payload.direction == TO_RESERVES and reserve < payload.amount:
            return reject(Reason.INSUFFICIENT_RESERVE, msb)
    return ACCEPT


def _append(state, entry, verdict):
    height = state.height
    state.head = chain_step(state.head, height, entry.digest, verdict)
    record = LogRecord(height, entry, verdict, state.head)
    state.records.append(record)
    return record


def _use_nonce(state, entry):
    state.used_nonces.setdefault(entry.submitting_msb_id, set()).add(entry.nonce)
    state.nonce_acc = hashlib.sha256(
        state.nonce_acc + encode((entry.submitting_msb_id, entry.nonce))
    ).digest()


def _tally(genesis, table, items, sign=1):
    for item in items:
        key = genesis.issuer_key(item.key_id)
        slot = (key.denomination, key.vintage)
        table[slot] = table.get(slot, 0) + sign * key.denomination


def apply_entry(state, entry):
    """Apply an entry that :func:`validate_entry` accepted. Returns its log record."""
    genesis = state.genesis
    payload = entry.payload
    msb = entry.submitting_msb_id
    _use_nonce(state, entry)

    value_in = 0
    for item in payload.inputs:
        state.spent.add(item.token_id)
        value_in += genesis.issuer_key(item.key_id).denomination
    _tally(genesis, state.redeemed, payload.inputs)
    value_out = _value(genesis, payload.outputs)
    _tally(genesis, state.issued, payload.outputs)

    reserve = state.reserves.get(msb, 0) + value_in - value_out
    if entry.entry_type == EntryType.WITHDRAWAL:
        day = genesis.policy.day_of(entry.logical_timestamp)
        state.withdrawn[(msb, day)] = state.withdrawn.get((msb, day), 0) + payload.amount
    elif entry.entry_type == EntryType.DISBURSEMENT:
        state.claims.add(payload.claim_ref)
        state.claims_acc = hashlib.sha256(state.claims_acc + payload.claim_ref).digest()
    elif entry.entry_type == EntryType.RESERVE_EXCHANGE:
        reserve += payload.amount if payload.direction == TO_CBDC else -payload.amount
    state.reserves[msb] = reserve
    return _append(state, entry, ACCEPT)


def record_rejection(state, entry, verdict):
    return _append(state, entry, verdict)


def execute(state, entry):
    """Validate then apply or record the rejection. Returns the log record."""
    verdict = validate_entry(state, entry)
    if verdict.accepted:
        return apply_entry(state, entry)
    return record_rejection(state, entry, verdict)


def audit_stream(state, from_height=0):
    if not 0 <= from_height <= state.height:
        raise HeightOutOfRange(f"from_height {from_height} outside [0, {state.height}]")
    checkpoints = tuple(c for c in state.checkpoints if c[0] > from_height)
    return AuditStream(tuple(state.records[from_height:]), checkpoints, from_height)


def replay(genesis, entries):
    """Fold ``execute`` over ``entries`` from genesis."""
    state = LedgerState(genesis)
    for entry in entries:
        execute(state, entry)
    return state
