"""The sole issuer.

The central bank holds one blind-signing key per (denomination, vintage),
keeps MSB reserve accounts, and is the only party that creates or destroys
tokens. It does not vote in consensus. It follows the ledger as an observer:
every commit certificate is verified, executed against its own copy of the
ledger, and accepted entries trigger the issuance side effects, exactly
once per entry hash: inputs are redeemed (destroyed, reserve credited),
then outputs are blind-signed (reserve debited).

Its inputs are blinded messages and already-spent token ids only, so it
never learns which wallet holds which token.
"""
import json
import logging

from cbdc import blindsig
from cbdc.blindsig import DEFAULT_DENOMINATIONS
from cbdc.consensus import verify_commit_cert
from cbdc.drbg import derive_seed
from cbdc.errors import (
    AlreadyRedeemed,
    InsufficientReserve,
    NotCommitted,
    UnknownKeyId,
    VintageExists,
)
from cbdc.ledger import TO_CBDC, EntryType, LedgerState, execute, parse_entry

log = logging.getLogger(__name__)


class CentralBank:
    def __init__(self, label="central-bank", seed=0, security_param=512, profile="test",
                 denominations=DEFAULT_DENOMINATIONS):
        self.label = label
        self.seed = seed
        self.security_param = security_param
        self.profile = profile
        self.denominations = tuple(denominations)
        self.keys = {}  # (denomination, vintage) -> IssuerKeyPair
        self._by_id = {}
        self.vintages = []
        self.reserves = {}
        self.issued = {}
        self.redeemed = {}
        self.redeemed_tokens = set()
        self.redeemable = set()  # token ids that are inputs of committed entries
        self.signatures = {}  # entry digest -> tuple of blind signatures (ints)
        self.processed = set()
        # observer state
        self.validators = None
        self.ledger = None
        self._certs = {}
        self.committed_seq = 0
        self.on_issued = None  # callback(entry_digest, record, signatures)

    # -- keys ---------------------------------------------------------------------

    def provision_vintage(self, vintage, denomination_set=None, security_param=None, seed=None):
        """Generate one issuer key per denomination for ``vintage``; returns the public keys."""
        if vintage in self.vintages:
            raise VintageExists(f"vintage {vintage} already provisioned")
        denominations = tuple(denomination_set or self.denominations)
        bits = security_param or self.security_param
        base = self.seed if seed is None else seed
        publics = []
        for denom in denominations:
            kp = blindsig.keygen(
                denom,
                vintage,
                bits,
                derive_seed(base, ("issuer", self.label, denom, vintage)),
                denominations=self.denominations,
                profile=self.profile,
            )
            self.keys[(denom, vintage)] = kp
            self._by_id[kp.key_id] = kp
            publics.append(kp.public)
        self.vintages.append(vintage)
        log.info("provisioned vintage %s with %d keys", vintage, len(publics))
        return publics

    def public_keys(self):
        return tuple(kp.public for kp in self.keys.values())

    def key(self, key_id):
        kp = self._by_id.get(key_id)
        if kp is None:
            raise UnknownKeyId(key_id.hex())
        return kp

    def epoch_record(self, vintage):
        keys = [kp for (d, v), kp in sorted(self.keys.items()) if v == vintage]
        return {
            "issuer": self.label,
            "vintage": vintage,
            "denominations": [kp.denomination for kp in keys],
            "keys": [
                {"key_id": kp.key_id.hex(), "denomination": kp.denomination, "n": hex(kp.n), "e": kp.e}
                for kp in keys
            ],
        }

    def write_epoch_record(self, path, vintage):
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(self.epoch_record(vintage), sort_keys=True) + "\n")

    # -- money ----------------------------------------------------------------------

    def open_reserve(self, msb_id, amount):
        self.reserves[msb_id] = self.reserves.get(msb_id, 0) + amount

    def sign_withdrawal(self, msb_id, blinded_list, key_ids=None):
        """Blind-sign ``blinded_list`` against ``msb_id``'s reserve."""
        key_ids = key_ids or [b.key_id for b in blinded_list]
        pairs = [self.key(k) for k in key_ids]
        total = sum(kp.denomination for kp in pairs)
        if self.reserves.get(msb_id, 0) < total:
            raise InsufficientReserve(f"{msb_id} reserve {self.reserves.get(msb_id, 0)} < {total}")
        sigs = [blindsig.sign_blinded(b, kp) for b, kp in zip(blinded_list, pairs, strict=True)]
        self.reserves[msb_id] -= total
        for kp in pairs:
            slot = (kp.denomination, kp.vintage)
            self.issued[slot] = self.issued.get(slot, 0) + kp.denomination
        return sigs

    def redeem(self, msb_id, token_ids, key_ids):
        """Destroy spent tokens and credit ``msb_id``."""
        pairs = [self.key(k) for k in key_ids]
        for token_id in token_ids:
            if token_id in self.redeemed_tokens:
                raise AlreadyRedeemed(token_id.hex())
            if token_id not in self.redeemable:
                raise NotCommitted(token_id.hex())
        if len(set(token_ids)) != len(token_ids):
            raise AlreadyRedeemed("duplicate token in one redemption")
        for token_id, kp in zip(token_ids, pairs, strict=True):
            self.redeemed_tokens.add(token_id)
            slot = (kp.denomination, kp.vintage)
            self.redeemed[slot] = self.redeemed.get(slot, 0) + kp.denomination
            self.reserves[msb_id] = self.reserves.get(msb_id, 0) + kp.denomination

    def outstanding(self):
        keys = set(self.issued) | set(self.redeemed)
        return {k: self.issued.get(k, 0) - self.redeemed.get(k, 0) for k in sorted(keys)}

    # -- observer -------------------------------------------------------------------

    def attach(self, genesis, validators):
        """Follow the ledger described by ``genesis``."""
        self.validators = validators
        self.ledger = LedgerState(genesis)
        for msb_id, amount in genesis.reserves:
            self.reserves.setdefault(msb_id, amount)

    def on_commit_cert(self, cert):
        """Feed one commit certificate; executes every contiguous batch available."""
        if cert.seq <= self.committed_seq or cert.seq in self._certs:
            return []
        if not verify_commit_cert(cert, self.validators):
            log.warning("central bank: rejected invalid commit certificate for seq %d", cert.seq)
            return []
        self._certs[cert.seq] = cert
        records = []
        while self.committed_seq + 1 in self._certs:
            batch = self._certs.pop(self.committed_seq + 1)
            for raw in batch.entries:
                record = execute(self.ledger, parse_entry(raw))
                self.apply_record(record)
                records.append(record)
            self.ledger.checkpoint()
            self.committed_seq += 1
        return records

    def apply_record(self, record):
        """Issuance side effects of one committed log record. Idempotent per entry."""
        entry = record.entry
        if not record.verdict.accepted or entry.digest in self.processed:
            return None
        self.processed.add(entry.digest)
        payload = entry.payload
        msb = entry.submitting_msb_id
        if entry.entry_type == EntryType.RESERVE_EXCHANGE:
            delta = payload.amount if payload.direction == TO_CBDC else -payload.amount
            self.reserves[msb] = self.reserves.get(msb, 0) + delta
            return None
        if payload.inputs:
            ids = [i.token_id for i in payload.inputs]
            self.redeemable.update(ids)
            self.redeem(msb, ids, [i.key_id for i in payload.inputs])
        sigs = ()
        if payload.outputs:
            sigs = tuple(self.sign_withdrawal(msb, list(payload.outputs)))
        self.signatures[entry.digest] = sigs
        if self.on_issued is not None:
            self.on_issued(entry.digest, record, sigs)
        return sigs
