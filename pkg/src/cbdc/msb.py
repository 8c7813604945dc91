"""Money services business: accounts, policy, and construction of ledger entries.

An MSB is the only way value enters or leaves the ledger on behalf of a
customer or a wallet bearer. It checks its own policy before signing an
entry, submits the entry to consensus, and settles accounts once the entry
commits. Account ids never reach the ledger: entries carry salted
commitments and the MSB keeps the mapping in its local record store.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field

from cbdc.config import PolicyConfig
from cbdc.errors import (
    AlreadyClaimed,
    IdentificationRequired,
    InsufficientFunds,
    InsufficientReserve,
    InvalidToken,
    LimitExceeded,
    UnknownAccount,
    UnknownKeyId,
    ValueMismatch,
)
from cbdc.ledger import (
    TO_CBDC,
    TO_RESERVES,
    Deposit,
    Disbursement,
    EntryType,
    LedgerEntry,
    MediatedTransfer,
    ReserveExchange,
    Withdrawal,
    required_fee,
)
from cbdc.protocol import Invoice
from cbdc.token import verify_spend

__all__ = ["Account", "Msb", "PendingEntry", "PolicyConfig"]

log = logging.getLogger(__name__)

BASIC = "basic"
VERIFIED = "verified"


@dataclass
class Account:
    account_id: str
    balance: int = 0
    kyc_tier: str = BASIC
    day: int = 0
    withdrawn_today: int = 0
    deposited_today: int = 0
    held: int = 0

    def roll(self, day):
        if day != self.day:
            self.day = day
            self.withdrawn_today = 0
            self.deposited_today = 0


@dataclass
class PendingEntry:
    entry: LedgerEntry
    account_id: str = None
    amount: int = 0
    day: int = 0
    split: int = 0  # mediated transfers: number of outputs owed to the payee
    verdict: object = None
    extra: dict = field(default_factory=dict)


class Msb:
    def __init__(self, msb_id, signer, genesis, salt, record_path=None):
        self.id = msb_id
        self.signer = signer
        self.genesis = genesis
        self.policy = genesis.policy
        self.salt = salt
        self.record_path = record_path
        self.accounts = {}
        self.reserve = dict(genesis.reserves).get(msb_id, 0)
        self.reserve_held = 0
        self.next_nonce = 1
        self.invoices = {}
        self.claims = set()
        self.pending = {}
        self.records = []
        self.submit = None  # callable(entry), wired by the harness
        self.treasury_account = None

    # -- accounts -----------------------------------------------------------------

    def commitment(self, account_id):
        return hashlib.sha256(b"cbdc-account\x00" + self.salt + account_id.encode()).digest()

    def open_account(self, account_id, balance=0, kyc_tier=BASIC):
        if kyc_tier not in (BASIC, VERIFIED):
            raise ValueError(f"unknown kyc tier {kyc_tier!r}")
        self.accounts[account_id] = Account(account_id, balance, kyc_tier)
        return self.commitment(account_id)

    def credit(self, account_id, amount):
        """Off-ledger credit such as payroll."""
        self._account(account_id).balance += amount

    def registry(self):
        return tuple(sorted(self.commitment(a) for a in self.accounts))

    def _account(self, account_id):
        account = self.accounts.get(account_id)
        if account is None:
            raise UnknownAccount(account_id)
        return account

    # -- plumbing -------------------------------------------------------------------

    def _nonce(self):
        nonce = self.next_nonce
        self.next_nonce += 1
        return nonce

    def _value(self, items):
        total = 0
        for item in items:
            key = self.genesis.issuer_key(item.key_id)
            if key is None:
                raise UnknownKeyId(item.key_id.hex())
            total += key.denomination
        return total

    def _check_inputs(self, inputs, invoice):
        context = invoice.context(self._value(inputs))
        for item in inputs:
            key = self.genesis.issuer_key(item.key_id)
            if not verify_spend(item.token_id, item.verification_key, item.certificate,
                                item.authorization, context, key):
                raise InvalidToken(item.token_id.hex())

    def _take_invoice(self, invoice):
        held = self.invoices.get(invoice.nonce)
        if invoice.dest_msb_id != self.id or held is None or held[1] != invoice:
            raise ValueMismatch("unknown or altered invoice")
        return held[0]

    def _record(self, kind, **fields):
        record = {"msb": self.id, "kind": kind, **fields}
        self.records.append(record)
        if self.record_path:
            with open(self.record_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return record

    def _submit(self, entry, pending, **fields):
        self.pending[entry.digest] = pending
        self._record(entry.entry_type.name, entry=entry.digest.hex(), nonce=entry.nonce,
                     time=entry.logical_timestamp, **fields)
        if self.submit is not None:
            self.submit(entry)
        return entry

    def _sign(self, entry_type, payload, now, nonce=None):
        entry = LedgerEntry(entry_type, self.id, self._nonce() if nonce is None else nonce, now, payload)
        return entry.signed(self.signer)

    # -- operations -------------------------------------------------------------------

    def request_withdrawal(self, account_id, blinded_list, now):
        account = self._account(account_id)
        amount = self._value(blinded_list)
        day = self.policy.day_of(now)
        account.roll(day)
        if account.balance - account.held < amount:
            raise InsufficientFunds(f"{account_id}: {account.balance - account.held} < {amount}")
        if account.withdrawn_today + amount > self.policy.withdrawal_cap_daily:
            raise LimitExceeded("withdrawal_cap_daily", f"{account.withdrawn_today} + {amount}")
        if self.reserve - self.reserve_held < amount:
            raise InsufficientReserve(f"{self.id}: {self.reserve - self.reserve_held} < {amount}")
        account.held += amount
        account.withdrawn_today += amount
        self.reserve_held += amount
        payload = Withdrawal(self.commitment(account_id), amount, tuple(blinded_list))
        entry = self._sign(EntryType.WITHDRAWAL, payload, now)
        return self._submit(entry, PendingEntry(entry, account_id, amount, day),
                            account=account_id, amount=amount)

    def issue_invoice(self, amount, account_id=None, now=0):
        """Open a payment slot; ``account_id`` None means a mediated transfer."""
        if account_id is not None:
            self._account(account_id)
        invoice = Invoice(self.id, self._nonce(), amount, now)
        self.invoices[invoice.nonce] = (account_id, invoice)
        return invoice

    def receive_deposit(self, submission, now=0):
        invoice = submission.invoice
        account_id = self._take_invoice(invoice)
        if account_id is None:
            raise UnknownAccount("invoice is not for a deposit")
        account = self._account(account_id)
        inputs = tuple(submission.inputs)
        if not inputs:
            raise ValueMismatch("no tokens")
        if self._value(inputs) != invoice.amount + self._value(submission.change):
            raise ValueMismatch("inputs != amount + change")
        self._check_inputs(inputs, invoice)
        day = self.policy.day_of(invoice.logical_time)
        account.roll(day)
        if account.kyc_tier == BASIC and account.deposited_today + invoice.amount > self.policy.deposit_cap_daily:
            raise LimitExceeded("deposit_cap_daily", f"{account.deposited_today} + {invoice.amount}")
        account.deposited_today += invoice.amount
        del self.invoices[invoice.nonce]
        payload = Deposit(inputs, self.commitment(account_id), invoice.amount, tuple(submission.change))
        entry = self._sign(EntryType.DEPOSIT, payload, invoice.logical_time, nonce=invoice.nonce)
        # destination-side data only
        return self._submit(entry, PendingEntry(entry, account_id, invoice.amount, day),
                            account=account_id, amount=invoice.amount)

    def mediate_transfer(self, request, now=0):
        invoice = request.invoice
        if self._take_invoice(invoice) is not None:
            raise ValueMismatch("invoice is for a deposit")
        inputs = tuple(request.inputs)
        outputs = tuple(request.payee_outputs) + tuple(request.change)
        value_in = self._value(inputs)
        transfer = MediatedTransfer(inputs, outputs, 0, False)
        fee = required_fee(self.genesis, transfer)
        if not inputs or not request.payee_outputs or value_in != self._value(outputs) + fee:
            raise ValueMismatch(f"inputs {value_in} != outputs + fee {fee}")
        if value_in >= self.policy.id_threshold and not request.id_info:
            raise IdentificationRequired(f"value {value_in} >= {self.policy.id_threshold}")
        self._check_inputs(inputs, invoice)
        del self.invoices[invoice.nonce]
        payload = MediatedTransfer(inputs, outputs, fee, bool(request.id_info))
        entry = self._sign(EntryType.MEDIATED_TRANSFER, payload, invoice.logical_time, nonce=invoice.nonce)
        pending = PendingEntry(entry, None, value_in, split=len(request.payee_outputs))
        extra = {"id_info": request.id_info.hex()} if request.id_info else {}
        return self._submit(entry, pending, amount=value_in, fee=fee, **extra)

    def disburse(self, claim_ref, verified_identity, blinded_list, now=0):
        if not verified_identity:
            raise IdentificationRequired("claimant identity not verified")
        if claim_ref in self.claims:
            raise AlreadyClaimed(claim_ref.hex())
        if self.treasury_account is None:
            raise UnknownAccount("no treasury account at this MSB")
        treasury = self._account(self.treasury_account)
        amount = self._value(blinded_list)
        if treasury.balance - treasury.held < amount:
            raise InsufficientFunds(f"treasury: {treasury.balance - treasury.held} < {amount}")
        if self.reserve - self.reserve_held < amount:
            raise InsufficientReserve(f"{self.id}: {self.reserve - self.reserve_held} < {amount}")
        self.claims.add(claim_ref)
        treasury.held += amount
        self.reserve_held += amount
        payload = Disbursement(self.commitment(self.treasury_account), claim_ref, amount, tuple(blinded_list))
        entry = self._sign(EntryType.DISBURSEMENT, payload, now)
        return self._submit(entry, PendingEntry(entry, self.treasury_account, amount),
                            claim=claim_ref.hex(), amount=amount)

    def exchange_reserves(self, amount, direction, now=0):
        if direction not in (TO_CBDC, TO_RESERVES):
            raise ValueError(f"bad direction {direction!r}")
        if direction == TO_RESERVES and self.reserve - self.reserve_held < amount:
            raise InsufficientReserve(f"{self.id}: {self.reserve - self.reserve_held} < {amount}")
        if direction == TO_RESERVES:
            self.reserve_held += amount
        entry = self._sign(EntryType.RESERVE_EXCHANGE, ReserveExchange(self.id, amount, direction), now)
        return self._submit(entry, PendingEntry(entry, None, amount), amount=amount, direction=direction)

    # -- settlement ---------------------------------------------------------------------

    def on_committed(self, record):
        """Settle one of our own entries after it committed (accepted or rejected)."""
        entry = record.entry
        if entry.submitting_msb_id != self.id:
            return None
        pending = self.pending.pop(entry.digest, None)
        if pending is None:
            return None
        pending.verdict = record.verdict
        accepted = record.verdict.accepted
        kind = entry.entry_type
        payload = entry.payload
        if kind == EntryType.WITHDRAWAL:
            account = self.accounts[pending.account_id]
            account.held -= pending.amount
            self.reserve_held -= pending.amount
            if accepted:
                account.balance -= pending.amount
                self.reserve -= pending.amount
            elif account.day == pending.day:
                account.withdrawn_today -= pending.amount
        elif kind == EntryType.DEPOSIT:
            account = self.accounts[pending.account_id]
            if accepted:
                account.balance += pending.amount
                self.reserve += pending.amount
            elif account.day == pending.day:
                account.deposited_today -= pending.amount
        elif kind == EntryType.MEDIATED_TRANSFER:
            if accepted:
                self.reserve += payload.fee
        elif kind == EntryType.DISBURSEMENT:
            treasury = self.accounts[pending.account_id]
            treasury.held -= pending.amount
            self.reserve_held -= pending.amount
            if accepted:
                treasury.balance -= pending.amount
                self.reserve -= pending.amount
            else:
                self.claims.discard(payload.claim_ref)
        elif kind == EntryType.RESERVE_EXCHANGE:
            if payload.direction == TO_RESERVES:
                self.reserve_held -= pending.amount
            if accepted:
                self.reserve += pending.amount if payload.direction == TO_CBDC else -pending.amount
        self._record("outcome", entry=entry.digest.hex(), verdict=str(record.verdict), height=record.height)
        return pending
