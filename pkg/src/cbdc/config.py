"""Policy configuration shared by the ledger rules and the MSB front office."""
from dataclasses import asdict, dataclass, fields

from cbdc.errors import ConfigError

DAY_MS = 86_400_000


@dataclass(frozen=True)
class PolicyConfig:
    withdrawal_cap_daily: int = 1000
    deposit_cap_daily: int = 5000
    id_threshold: int = 500
    msb_withdrawal_velocity_cap: int = 10_000_000
    mediated_fee: int = 0
    vintage_exchange_fee: int = 0
    day_ms: int = DAY_MS

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError("must be an integer", f"policy.{f.name}")
            if value < 0:
                raise ConfigError("must be >= 0", f"policy.{f.name}")
        if self.id_threshold <= 0:
            raise ConfigError("must be > 0", "policy.id_threshold")
        if self.day_ms <= 0:
            raise ConfigError("must be > 0", "policy.day_ms")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "policy")
        return cls(**data)

    def to_wire(self):
        return tuple((f.name, getattr(self, f.name)) for f in fields(self))

    def day_of(self, logical_time):
        return logical_time // self.day_ms
