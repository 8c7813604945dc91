"""Non-custodial wallet.

Holds tokens and their private keys, runs the blind-withdrawal protocol and
builds spend bundles. By construction it keeps no identifier of its own, no
account reference and no record of past sessions: the only state is the
token store, pending withdrawals (dropped once unblinded) and a local risk
log of spends that ignored the recommended spend delay.
"""
import base64
import logging
import os
import secrets
from dataclasses import dataclass, field
from itertools import count

from cryptography.fernet import Fernet, InvalidToken
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from cbdc import blindsig
from cbdc.encoding import decode, encode
from cbdc.errors import BadSignature, DecodeError, InsufficientBalance, UnrepresentableAmount
from cbdc.token import Certificate, SpentInput, Token, TokenKeyPair, authorize_spend, new_pretoken

log = logging.getLogger(__name__)

FILE_MAGIC = b"CBDCWAL1"
FILE_VERSION = 1


@dataclass
class PendingWithdrawal:
    pretokens: list  # [(TokenKeyPair, token_id)]
    factors: list
    blinded: tuple
    issuer_keys: list


@dataclass(frozen=True)
class WithdrawalPlan:
    handle: int  # local bookkeeping only, never transmitted
    denominations: tuple
    blinded: tuple

    @property
    def amount(self):
        return sum(self.denominations)


@dataclass
class SpendBundle:
    invoice: object
    inputs: tuple
    change: tuple
    change_handle: object
    expected_change: int
    tokens: tuple = field(repr=False)
    risk_flagged: bool = False

    @property
    def input_value(self):
        return sum(t.denomination for t in self.tokens)


@dataclass
class HeldToken:
    token: Token
    denomination: int
    vintage: int
    acquired_at: int


def greedy_split(amount, denominations):
    """Largest-first split of ``amount`` into ``denominations``."""
    if amount <= 0:
        raise UnrepresentableAmount(f"amount must be positive, got {amount}")
    parts = []
    rest = amount
    for d in sorted(denominations, reverse=True):
        while rest >= d:
            parts.append(d)
            rest -= d
    if rest:
        raise UnrepresentableAmount(f"{amount} cannot be made from {sorted(denominations)}")
    return parts


def minimal_cover(groups, amount):
    """Pick counts from ``groups`` [(value, available)] with the least total >= amount.

    Returns ``(total, [count per group])`` or None. Reachable sums are
    tracked as a big-integer bitset; reconstruction walks groups from the
    largest value down and takes as many as still allow the target, which
    keeps the token count low.
    """
    order = sorted(range(len(groups)), key=lambda i: -groups[i][0])
    suffix = [1] * (len(order) + 1)
    for pos in range(len(order) - 1, -1, -1):
        value, available = groups[order[pos]]
        mask = suffix[pos + 1]
        k = 1
        left = available
        while left > 0:
            take = min(k, left)
            mask |= mask << (take * value)
            left -= take
            k <<= 1
        suffix[pos] = mask
    reachable = suffix[0] >> amount
    if not reachable:
        return None
    target = amount + ((reachable & -reachable).bit_length() - 1)
    counts = [0] * len(groups)
    rest = target
    for pos, idx in enumerate(order):
        value, available = groups[idx]
        for k in range(min(available, rest // value), -1, -1):
            if suffix[pos + 1] >> (rest - k * value) & 1:
                counts[idx] = k
                rest -= k * value
                break
    return target, counts


class Wallet:
    def __init__(self, issuer_keys, spend_delay_ms=0, rng=None, vintage=None):
        self.issuer_keys = {k.key_id: k for k in issuer_keys}
        self.denominations = tuple(sorted({k.denomination for k in issuer_keys}))
        self.vintage = vintage if vintage is not None else max(k.vintage for k in issuer_keys)
        self.spend_delay_ms = spend_delay_ms
        self.rng = rng or secrets.SystemRandom()
        self.tokens = []
        self.pending = {}
        self.risk_log = []
        self._handles = count(1)

    @property
    def balance(self):
        return sum(h.denomination for h in self.tokens)

    def holdings(self):
        """Value held per (denomination, vintage)."""
        out = {}
        for h in self.tokens:
            slot = (h.denomination, h.vintage)
            out[slot] = out.get(slot, 0) + h.denomination
        return out

    def _issuer(self, denomination, vintage):
        for key in self.issuer_keys.values():
            if key.denomination == denomination and key.vintage == vintage:
                return key
        raise UnrepresentableAmount(f"no issuer key for {denomination} of vintage {vintage}")

    # -- withdrawal ---------------------------------------------------------------

    def plan_withdrawal(self, amount, vintage=None):
        vintage = self.vintage if vintage is None else vintage
        parts = greedy_split(amount, self.denominations)
        pretokens, factors, blinded, keys = [], [], [], []
        for d in parts:
            key = self._issuer(d, vintage)
            keypair, token_id = new_pretoken(d, vintage, self.rng, self.denominations)
            message, factor = blindsig.blind(token_id, key, self.rng)
            pretokens.append((keypair, token_id))
            factors.append(factor)
            blinded.append(message)
            keys.append(key)
        handle = next(self._handles)
        self.pending[handle] = PendingWithdrawal(pretokens, factors, tuple(blinded), keys)
        return WithdrawalPlan(handle, tuple(parts), tuple(blinded))

    def finalize_withdrawal(self, handle, blind_signatures, now=0):
        """Unblind and store; all-or-nothing. Blinding factors are erased."""
        pending = self.pending.get(handle)
        if pending is None:
            raise KeyError(f"no pending withdrawal {handle}")
        if len(blind_signatures) != len(pending.blinded):
            raise BadSignature("signature count does not match the request")
        fresh = []
        for (keypair, token_id), factor, key, s in zip(
            pending.pretokens, pending.factors, pending.issuer_keys, blind_signatures
        ):
            sig = blindsig.unblind(s, factor, key)
            if not blindsig.verify(token_id, sig, key):
                raise BadSignature(f"certificate for {token_id.hex()[:16]} does not verify")
            fresh.append(HeldToken(Token(keypair, Certificate(token_id, sig)), key.denomination, key.vintage, now))
        del self.pending[handle]
        self.tokens.extend(fresh)
        return [h.token for h in fresh]

    def abandon_withdrawal(self, handle):
        self.pending.pop(handle, None)

    # -- spending -----------------------------------------------------------------

    def select(self, amount):
        """Tokens forming the minimal-value cover of ``amount`` (oldest first within a key)."""
        by_key = {}
        for h in self.tokens:
            by_key.setdefault(h.token.key_id, []).append(h)
        keys = sorted(by_key, key=lambda k: (self.issuer_keys[k].denomination, self.issuer_keys[k].vintage))
        groups = [(self.issuer_keys[k].denomination, len(by_key[k])) for k in keys]
        found = minimal_cover(groups, amount)
        if found is None:
            raise InsufficientBalance(f"balance {self.balance} < {amount}")
        _, counts = found
        chosen = []
        for k, n in zip(keys, counts):
            chosen.extend(sorted(by_key[k], key=lambda h: h.acquired_at)[:n])
        return chosen

    def make_payment(self, amount, invoice, now=0, fee=0):
        """Spend bundle paying ``amount`` (+ ``fee``) against ``invoice``.

        Overshoot comes back as change: fresh blinded messages included in
        the bundle. Selected tokens leave the store immediately; call
        :meth:`refund` if the payment is rejected for a reason other than a
        double spend.
        """
        if amount <= 0:
            raise UnrepresentableAmount("payment amount must be positive")
        chosen = self.select(amount + fee)
        total = sum(h.denomination for h in chosen)
        youngest = min(now - h.acquired_at for h in chosen)
        flagged = youngest < self.spend_delay_ms
        if flagged:
            self.risk_log.append({"time": now, "risk": "spend-delay", "age_ms": youngest,
                                  "delay_ms": self.spend_delay_ms})
            log.debug("spend of a %d ms old token ignores the %d ms delay", youngest, self.spend_delay_ms)
        context = invoice.context(total)
        inputs = []
        for h in chosen:
            key = self.issuer_keys[h.token.key_id]
            auth = authorize_spend(h.token, context, key)
            inputs.append(SpentInput(h.token.token_id, h.token.verification_key, h.token.certificate, auth))
        change = total - amount - fee
        plan = self.plan_withdrawal(change) if change else None
        chosen_ids = {id(h) for h in chosen}
        self.tokens = [h for h in self.tokens if id(h) not in chosen_ids]
        return SpendBundle(
            invoice=invoice,
            inputs=tuple(inputs),
            change=plan.blinded if plan else (),
            change_handle=plan.handle if plan else None,
            expected_change=change,
            tokens=tuple(chosen),
            risk_flagged=flagged,
        )

    def refund(self, bundle):
        """Put back the tokens of a payment that did not commit."""
        self.tokens.extend(bundle.tokens)
        if bundle.change_handle is not None:
            self.abandon_withdrawal(bundle.change_handle)

    # -- key sharing and persistence -------------------------------------------------

    def export_token_secrets(self, tokens=None):
        """Raw token secrets. Sharing them is a promise of payment, not a payment."""
        held = self.tokens if tokens is None else tokens
        return [(h.token.keypair.secret, h.token.certificate.to_wire()) for h in held]

    def import_tokens(self, exported, now=0):
        for secret, cert_wire in exported:
            cert = Certificate.from_wire(cert_wire)
            key = self.issuer_keys.get(cert.key_id)
            if key is None or not blindsig.verify(cert.token_id, cert.signature, key):
                raise BadSignature("imported token certificate does not verify")
            token = Token(TokenKeyPair.from_secret(secret), cert)
            self.tokens.append(HeldToken(token, key.denomination, key.vintage, now))

    def _payload(self):
        return encode(("wallet", FILE_VERSION, tuple(self.export_token_secrets())))

    def save(self, path, password):
        salt = os.urandom(16)
        blob = Fernet(_file_key(password, salt)).encrypt(self._payload())
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(FILE_MAGIC + salt + blob)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path, password, issuer_keys, **kwargs):
        with open(path, "rb") as fh:
            data = fh.read()
        if not data.startswith(FILE_MAGIC):
            raise DecodeError("not a wallet file")
        salt, blob = data[len(FILE_MAGIC):len(FILE_MAGIC) + 16], data[len(FILE_MAGIC) + 16:]
        try:
            payload = Fernet(_file_key(password, salt)).decrypt(blob)
        except InvalidToken:
            raise DecodeError("wrong password or corrupted wallet file") from None
        tag, version, exported = decode(payload)
        if tag != "wallet" or version != FILE_VERSION:
            raise DecodeError(f"unsupported wallet file version {version}")
        wallet = cls(issuer_keys, **kwargs)
        wallet.import_tokens(exported)
        return wallet


def _file_key(password, salt):
    if isinstance(password, str):
        password = password.encode()
    raw = Scrypt(salt=salt, length=32, n=2**14, r=8, p=1).derive(password)
    return base64.urlsafe_b64encode(raw)

