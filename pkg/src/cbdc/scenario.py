"""Scenario files: topology, network, policy, a timed action script, expectations.

Scenarios are YAML with a fixed schema (see ``docs/scenario-schema.md``).
Every field error is reported as :class:`ConfigError` naming the field path
and, when the value came from a file, its line.
"""
import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from cbdc.blindsig import DEFAULT_DENOMINATIONS
from cbdc.config import PolicyConfig
from cbdc.errors import ConfigError
from cbdc.netsim import BEHAVIORS, Partition, SimConfig

MIN_VALIDATORS = 4
DEFAULT_VALIDATORS = 5

ACTIONS = {
    "credit": {"account": str, "amount": int},
    "withdraw": {"wallet": str, "account": str, "amount": int},
    "pay": {"wallet": str, "account": str, "amount": int},
    "mediate": {"wallet": str, "payee": str, "msb": str, "amount": int},
    "disburse": {"msb": str, "claim": str, "wallet": str, "amount": int},
    "exchange": {"msb": str, "amount": int, "direction": str},
    "double_spend": {"wallet": str, "accounts": list, "amount": int},
    "crash": {"node": str},
}
OPTIONAL = {
    "mediate": {"id": bool},
    "disburse": {"verified": bool},
}
EXPECTATIONS = {
    "account_balance": {"account": str, "equals": int},
    "wallet_balance": {"wallet": str, "equals": int},
    "accepted": {"type": str, "count": int},
    "rejects": {"reason": str, "count": int},
    "refusals": {"error": str, "count": int},
    "alerts": {"alert": str, "count": int},
    "outstanding": {"equals": int},
    "min_view_changes": {"count": int},
}


@dataclass(frozen=True)
class AccountSpec:
    account_id: str
    msb: str
    balance: int = 0
    tier: str = "basic"
    registered: bool = True


@dataclass(frozen=True)
class WalletSpec:
    wallet_id: str
    spend_delay_ms: int = 0


@dataclass(frozen=True)
class Action:
    at: int
    kind: str
    params: dict
    index: int = 0

    def __getitem__(self, name):
        return self.params[name]

    def get(self, name, default=None):
        return self.params.get(name, default)


@dataclass(frozen=True)
class ConsensusParams:
    timeout_ms: int = 500
    batch_size: int = 64
    window: int = 8


@dataclass
class Scenario:
    name: str = "scenario"
    seed: int = 0
    validators: int = DEFAULT_VALIDATORS
    security_bits: int = 512
    entry_key_bits: int = 1024
    vintages: tuple = (2025,)
    denominations: tuple = DEFAULT_DENOMINATIONS
    issuer_label: str = "central-bank"
    reserves: dict = field(default_factory=dict)
    default_reserve: int = 1_000_000
    accounts: tuple = ()
    treasury: tuple = None  # (msb_id, balance)
    wallets: tuple = ()
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    network: SimConfig = field(default_factory=SimConfig)
    consensus: ConsensusParams = field(default_factory=ConsensusParams)
    script: tuple = ()
    expect: tuple = ()
    settle_ms: int = 120_000

    @property
    def validator_ids(self):
        return tuple(f"msb{i}" for i in range(self.validators))

    def with_policy(self, **changes):
        other = copy.copy(self)
        other.policy = PolicyConfig(**{**self.policy.to_dict(), **changes})
        return other


class _Doc:
    """Typed access to parsed YAML with field paths and line numbers."""

    def __init__(self, node=None, source="<scenario>"):
        self.node = node
        self.source = source

    def line(self, path):
        node = self.node
        for key in path:
            if isinstance(node, yaml.MappingNode):
                node = next((v for k, v in node.value if k.value == key), None)
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
            else:
                node = None
            if node is None:
                return None
        return node.start_mark.line + 1 if node is not None else None

    def error(self, message, path):
        where = ".".join(f"[{p}]" if isinstance(p, int) else str(p) for p in path).replace(".[", "[")
        line = self.line(path) if self.node is not None else None
        if line is not None:
            where = f"{self.source}:{line}: {where}"
        return ConfigError(message, where or self.source)

    def take(self, data, key, kind, path, default=None, required=False):
        if not isinstance(data, dict):
            raise self.error("expected a mapping", path)
        if key not in data:
            if required:
                raise self.error(f"missing required field {key!r}", path)
            return default
        value = data[key]
        here = path + (key,)
        if kind is int and (not isinstance(value, int) or isinstance(value, bool)):
            raise self.error(f"expected an integer, got {value!r}", here)
        if kind is bool and not isinstance(value, bool):
            raise self.error(f"expected true/false, got {value!r}", here)
        if kind is str and not isinstance(value, str):
            raise self.error(f"expected a string, got {value!r}", here)
        if kind is list and not isinstance(value, list):
            raise self.error("expected a list", here)
        if kind is dict and not isinstance(value, dict):
            raise self.error("expected a mapping", here)
        if kind is float and not isinstance(value, (int, float)):
            raise self.error(f"expected a number, got {value!r}", here)
        return value


def _check_keys(doc, data, allowed, path):
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise doc.error(f"unknown field(s) {unknown}", path + (unknown[0],))


def parse_scenario(text, source="<scenario>", require_script=False):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"YAML syntax: {getattr(exc, 'problem', exc)}", where) from None
    if data is None:
        data = {}
    doc = _Doc(node, source)
    if not isinstance(data, dict):
        raise doc.error("top level must be a mapping", ())
    return build_scenario(data, doc, require_script)


BUNDLED_DIR = Path(__file__).with_name("scenarios")


def bundled_scenarios():
    """Paths of the scenario files shipped with the package, sorted by name."""
    return sorted(BUNDLED_DIR.glob("*.yaml"))


def load_scenario(path, require_script=False):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", str(path)) from None
    return parse_scenario(text, str(path), require_script)


def build_scenario(data, doc=None, require_script=False):
    doc = doc or _Doc()
    _check_keys(doc, data, ("name", "seed", "topology", "policy", "network", "consensus", "script",
                            "expect", "settle_ms"), ())
    sc = Scenario()
    sc.name = doc.take(data, "name", str, (), "scenario")
    sc.seed = doc.take(data, "seed", int, (), 0)
    if sc.seed < 0:
        raise doc.error("seed must be >= 0", ("seed",))
    sc.settle_ms = doc.take(data, "settle_ms", int, (), sc.settle_ms)

    topo = doc.take(data, "topology", dict, (), {})
    _parse_topology(doc, topo, sc)

    policy = doc.take(data, "policy", dict, (), {})
    try:
        sc.policy = PolicyConfig.from_dict(policy)
    except ConfigError as exc:
        field_name = (exc.where or "policy").split(".")[-1]
        path = ("policy",) if field_name == "policy" else ("policy", field_name)
        raise doc.error(exc.message, path) from None
    except TypeError as exc:
        raise doc.error(str(exc), ("policy",)) from None

    sc.network = _parse_network(doc, doc.take(data, "network", dict, (), {}), sc)
    cons = doc.take(data, "consensus", dict, (), {})
    _check_keys(doc, cons, ("timeout_ms", "batch_size", "window"), ("consensus",))
    params = {k: doc.take(cons, k, int, ("consensus",), getattr(ConsensusParams, k)) for k in
              ("timeout_ms", "batch_size", "window")}
    for k, v in params.items():
        if v <= 0:
            raise doc.error("must be > 0", ("consensus", k))
    sc.consensus = ConsensusParams(**params)

    script = doc.take(data, "script", list, (), [])
    if require_script and not script:
        raise doc.error("scenario has no script", ("script",))
    sc.script = tuple(_parse_action(doc, item, i, sc) for i, item in enumerate(script))
    expect = doc.take(data, "expect", list, (), [])
    sc.expect = tuple(_parse_expectation(doc, item, i) for i, item in enumerate(expect))
    return sc


def _parse_topology(doc, topo, sc):
    p = ("topology",)
    _check_keys(doc, topo, ("validators", "security_bits", "entry_key_bits", "vintages", "denominations",
                            "issuer_label", "reserves", "default_reserve", "accounts", "treasury", "wallets"), p)
    sc.validators = doc.take(topo, "validators", int, p, DEFAULT_VALIDATORS)
    if sc.validators < MIN_VALIDATORS:
        raise doc.error(f"need at least {MIN_VALIDATORS} validators (3f+1 with f >= 1), got {sc.validators}",
                        p + ("validators",))
    sc.security_bits = doc.take(topo, "security_bits", int, p, sc.security_bits)
    sc.entry_key_bits = doc.take(topo, "entry_key_bits", int, p, sc.entry_key_bits)
    if sc.entry_key_bits < 1024 or sc.entry_key_bits % 2:
        raise doc.error("entry_key_bits must be even and >= 1024", p + ("entry_key_bits",))
    vintages = doc.take(topo, "vintages", list, p, list(sc.vintages))
    if not vintages or not all(isinstance(v, int) and not isinstance(v, bool) for v in vintages):
        raise doc.error("vintages must be a non-empty list of integers", p + ("vintages",))
    if len(set(vintages)) != len(vintages):
        raise doc.error("duplicate vintage", p + ("vintages",))
    sc.vintages = tuple(vintages)
    denoms = doc.take(topo, "denominations", list, p, list(sc.denominations))
    if not denoms or not all(isinstance(d, int) and not isinstance(d, bool) and d > 0 for d in denoms):
        raise doc.error("denominations must be positive integers", p + ("denominations",))
    if 1 not in denoms:
        raise doc.error("denomination set must contain 1", p + ("denominations",))
    sc.denominations = tuple(sorted(set(denoms)))
    sc.issuer_label = doc.take(topo, "issuer_label", str, p, sc.issuer_label)
    sc.default_reserve = doc.take(topo, "default_reserve", int, p, sc.default_reserve)
    ids = sc.validator_ids
    reserves = doc.take(topo, "reserves", dict, p, {})
    for msb, amount in reserves.items():
        if msb not in ids:
            raise doc.error(f"unknown MSB {msb!r}", p + ("reserves", msb))
        if not isinstance(amount, int) or amount < 0:
            raise doc.error("reserve must be an integer >= 0", p + ("reserves", msb))
    sc.reserves = {m: reserves.get(m, sc.default_reserve) for m in ids}

    accounts = []
    seen = set()
    for i, item in enumerate(doc.take(topo, "accounts", list, p, [])):
        q = p + ("accounts", i)
        _check_keys(doc, item, ("id", "msb", "balance", "tier", "registered"), q)
        spec = AccountSpec(
            doc.take(item, "id", str, q, required=True),
            doc.take(item, "msb", str, q, required=True),
            doc.take(item, "balance", int, q, 0),
            doc.take(item, "tier", str, q, "basic"),
            doc.take(item, "registered", bool, q, True),
        )
        if spec.msb not in ids:
            raise doc.error(f"unknown MSB {spec.msb!r}", q + ("msb",))
        if spec.tier not in ("basic", "verified"):
            raise doc.error("tier must be basic or verified", q + ("tier",))
        if spec.account_id in seen:
            raise doc.error(f"duplicate account {spec.account_id!r}", q + ("id",))
        if spec.balance < 0:
            raise doc.error("balance must be >= 0", q + ("balance",))
        seen.add(spec.account_id)
        accounts.append(spec)
    sc.accounts = tuple(accounts)

    treasury = doc.take(topo, "treasury", dict, p, None)
    if treasury is not None:
        q = p + ("treasury",)
        _check_keys(doc, treasury, ("msb", "balance"), q)
        msb = doc.take(treasury, "msb", str, q, required=True)
        if msb not in ids:
            raise doc.error(f"unknown MSB {msb!r}", q + ("msb",))
        sc.treasury = (msb, doc.take(treasury, "balance", int, q, 0))

    wallets = []
    for i, item in enumerate(doc.take(topo, "wallets", list, p, [])):
        q = p + ("wallets", i)
        _check_keys(doc, item, ("id", "spend_delay_ms"), q)
        wallets.append(WalletSpec(doc.take(item, "id", str, q, required=True),
                                  doc.take(item, "spend_delay_ms", int, q, 0)))
    if len({w.wallet_id for w in wallets}) != len(wallets):
        raise doc.error("duplicate wallet id", p + ("wallets",))
    sc.wallets = tuple(wallets)


def _parse_network(doc, net, sc):
    p = ("network",)
    _check_keys(doc, net, ("latency_min_ms", "latency_max_ms", "drop_probability", "partitions", "byzantine",
                           "byzantine_delay_ms"), p)
    ids = sc.validator_ids
    partitions = []
    for i, item in enumerate(doc.take(net, "partitions", list, p, [])):
        q = p + ("partitions", i)
        _check_keys(doc, item, ("start_ms", "end_ms", "a", "b"), q)
        start = doc.take(item, "start_ms", int, q, required=True)
        end = doc.take(item, "end_ms", int, q, required=True)
        a = doc.take(item, "a", list, q, required=True)
        b = doc.take(item, "b", list, q, required=True)
        for side, members in (("a", a), ("b", b)):
            for m in members:
                if m not in ids:
                    raise doc.error(f"unknown node {m!r}", q + (side,))
        if end < start:
            raise doc.error("end_ms before start_ms", q + ("end_ms",))
        partitions.append(Partition(start, end, frozenset(a), frozenset(b)))
    byz = doc.take(net, "byzantine", dict, p, {})
    for node, behavior in byz.items():
        if node not in ids:
            raise doc.error(f"unknown node {node!r}", p + ("byzantine", node))
        if behavior not in BEHAVIORS:
            raise doc.error(f"behavior must be one of {BEHAVIORS}", p + ("byzantine", node))
    try:
        return SimConfig(
            seed=sc.seed,
            latency_min_ms=doc.take(net, "latency_min_ms", int, p, 5),
            latency_max_ms=doc.take(net, "latency_max_ms", int, p, 50),
            drop_probability=float(doc.take(net, "drop_probability", float, p, 0.0)),
            partitions=tuple(partitions),
            byzantine=dict(byz),
            byzantine_delay_ms=doc.take(net, "byzantine_delay_ms", int, p, 400),
        )
    except ConfigError as exc:
        raise doc.error(exc.message, p) from None


def _parse_action(doc, item, i, sc):
    q = ("script", i)
    if not isinstance(item, dict):
        raise doc.error("action must be a mapping", q)
    kind = doc.take(item, "action", str, q, required=True)
    if kind not in ACTIONS:
        raise doc.error(f"unknown action {kind!r}; expected one of {sorted(ACTIONS)}", q + ("action",))
    at = doc.take(item, "at", int, q, required=True)
    if at < 0:
        raise doc.error("time must be >= 0", q + ("at",))
    schema = {**ACTIONS[kind], **OPTIONAL.get(kind, {})}
    _check_keys(doc, item, ("action", "at", *schema), q)
    params = {}
    for name, kind_type in ACTIONS[kind].items():
        params[name] = doc.take(item, name, kind_type, q, required=True)
    for name, kind_type in OPTIONAL.get(kind, {}).items():
        value = doc.take(item, name, kind_type, q)
        if value is not None:
            params[name] = value
    if "amount" in params and params["amount"] <= 0:
        raise doc.error("amount must be > 0", q + ("amount",))
    accounts = {a.account_id for a in sc.accounts}
    wallets = {w.wallet_id for w in sc.wallets}
    ids = sc.validator_ids
    for name in ("account",):
        if name in params and params[name] not in accounts:
            raise doc.error(f"unknown account {params[name]!r}", q + (name,))
    for name in ("wallet", "payee"):
        if name in params and params[name] not in wallets:
            raise doc.error(f"unknown wallet {params[name]!r}", q + (name,))
    for name in ("msb", "node"):
        if name in params and params[name] not in ids:
            raise doc.error(f"unknown MSB {params[name]!r}", q + (name,))
    if kind == "double_spend":
        targets = params["accounts"]
        if len(targets) != 2 or any(t not in accounts for t in targets):
            raise doc.error("double_spend needs two known accounts", q + ("accounts",))
    if kind == "exchange" and params["direction"] not in ("to_cbdc", "to_reserves"):
        raise doc.error("direction must be to_cbdc or to_reserves", q + ("direction",))
    if kind == "disburse" and sc.treasury is None:
        raise doc.error("disburse needs topology.treasury", q)
    return Action(at, kind, params, i)


def _parse_expectation(doc, item, i):
    q = ("expect", i)
    if not isinstance(item, dict):
        raise doc.error("expectation must be a mapping", q)
    kind = doc.take(item, "kind", str, q, required=True)
    if kind not in EXPECTATIONS:
        raise doc.error(f"unknown expectation {kind!r}; expected one of {sorted(EXPECTATIONS)}", q + ("kind",))
    _check_keys(doc, item, ("kind", *EXPECTATIONS[kind]), q)
    params = {name: doc.take(item, name, t, q, required=True) for name, t in EXPECTATIONS[kind].items()}
    return {"kind": kind, **params}
