"""Genesis record: validator set, issuer keys, denominations, policy.

Public by construction: everything here may be handed to the regulator.
The JSON form is deterministic (sorted keys, fixed layout) so identical
inputs give identical bytes.
"""
import hashlib
import json
from dataclasses import dataclass, field

from cbdc.blindsig import IssuerPublicKey
from cbdc.config import PolicyConfig
from cbdc.encoding import encode
from cbdc.signing import CONSENSUS_SCHEME, ENTRY_SCHEME, RsaPublic

PROTOCOL_VERSION = 1
PROTOCOL_HEADER = (
    ("version", PROTOCOL_VERSION),
    ("blind", "rsa-fdh-sha256"),
    ("token", "ed25519"),
    ("entry", ENTRY_SCHEME),
    ("consensus", CONSENSUS_SCHEME),
)


@dataclass(frozen=True)
class ValidatorInfo:
    validator_id: str
    consensus_key: bytes
    entry_key: RsaPublic

    def to_wire(self):
        return (self.validator_id, self.consensus_key, self.entry_key.to_wire())


@dataclass(frozen=True)
class Genesis:
    validators: tuple
    issuer_keys: tuple
    denominations: tuple
    policy: PolicyConfig
    reserves: tuple  # ((msb_id, amount), ...)
    account_registry: tuple = ()  # account commitments, sorted
    issuer_label: str = "central-bank"
    vintages: tuple = ()
    protocol: tuple = PROTOCOL_HEADER
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {
            "issuer": {k.key_id: k for k in self.issuer_keys},
            "validator": {v.validator_id: v for v in self.validators},
            # entry digest -> authenticity verdict, shared by every ledger built on this genesis
            "authentic": {},
        }
        object.__setattr__(self, "_index", index)

    @property
    def authenticity_cache(self):
        return self._index["authentic"]

    def issuer_key(self, key_id):
        return self._index["issuer"].get(key_id)

    def validator(self, validator_id):
        return self._index["validator"].get(validator_id)

    @property
    def validator_ids(self):
        return tuple(v.validator_id for v in self.validators)

    def to_wire(self):
        return (
            "genesis",
            self.protocol,
            tuple(v.to_wire() for v in self.validators),
            tuple(k.to_wire() for k in self.issuer_keys),
            self.denominations,
            self.policy.to_wire(),
            self.reserves,
            self.account_registry,
            self.issuer_label,
            self.vintages,
        )

    def hash(self):
        return hashlib.sha256(encode(self.to_wire())).digest()

    def to_json(self):
        doc = {
            "protocol": dict(self.protocol),
            "issuer_label": self.issuer_label,
            "denominations": list(self.denominations),
            "vintages": list(self.vintages),
            "policy": self.policy.to_dict(),
            "validators": [
                {
                    "id": v.validator_id,
                    "consensus_key": v.consensus_key.hex(),
                    "entry_key": {"n": hex(v.entry_key.n), "e": v.entry_key.e},
                }
                for v in self.validators
            ],
            "issuer_keys": [
                {
                    "key_id": k.key_id.hex(),
                    "denomination": k.denomination,
                    "vintage": k.vintage,
                    "n": hex(k.n),
                    "e": k.e,
                }
                for k in self.issuer_keys
            ],
            "reserves": {msb: amount for msb, amount in self.reserves},
            "account_registry": [c.hex() for c in self.account_registry],
            "genesis_hash": self.hash().hex(),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        validators = tuple(
            ValidatorInfo(
                v["id"],
                bytes.fromhex(v["consensus_key"]),
                RsaPublic(int(v["entry_key"]["n"], 16), v["entry_key"]["e"]),
            )
            for v in doc["validators"]
        )
        issuer_keys = tuple(
            IssuerPublicKey.from_wire(
                (
                    bytes.fromhex(k["key_id"]),
                    k["denomination"],
                    k["vintage"],
                    int(k["n"], 16).to_bytes((int(k["n"], 16).bit_length() + 7) // 8, "big"),
                    k["e"],
                )
            )
            for k in doc["issuer_keys"]
        )
        protocol = tuple((name, doc["protocol"][name]) for name, _ in PROTOCOL_HEADER)
        genesis = cls(
            validators=validators,
            issuer_keys=issuer_keys,
            denominations=tuple(doc["denominations"]),
            policy=PolicyConfig.from_dict(doc["policy"]),
            reserves=tuple(sorted(doc["reserves"].items())),
            account_registry=tuple(bytes.fromhex(c) for c in doc["account_registry"]),
            issuer_label=doc["issuer_label"],
            vintages=tuple(doc["vintages"]),
            protocol=protocol,
        )
        expected = doc.get("genesis_hash")
        if expected is not None and expected != genesis.hash().hex():
            raise ValueError("genesis hash does not match contents")
        return genesis
