from __future__ import annotations

from dataclasses import dataclass, field, fields

from ..errors import ConfigError

ROLES = ("scriptwriter", "t2i", "i2i", "i2v", "judge", "embedder", "segmenter")
KINDS = ("remote", "mock")


@dataclass(frozen=True)
class BackendConfig:
    role: str
    kind: str = "mock"
    endpoint: str | None = None
    auth_env: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4
    mock_seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"unknown backend role {self.role!r}")
        if self.kind not in KINDS:
            raise ConfigError(f"{self.role}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ConfigError(f"{self.role}: remote backend requires an endpoint")
        if not isinstance(self.max_retries, int) or self.max_retries < 0:
            raise ConfigError(f"{self.role}: max_retries must be a non-negative integer")
        if not self.timeout > 0:
            raise ConfigError(f"{self.role}: timeout must be positive")
        if not self.backoff_base > 0:
            raise ConfigError(f"{self.role}: backoff_base must be positive")
        if self.max_in_flight < 1:
            raise ConfigError(f"{self.role}: max_in_flight must be >= 1")
        if not isinstance(self.mock_seed, int) or not -(2**63) <= self.mock_seed < 2**64:
            raise ConfigError(f"{self.role}: mock_seed must be a 64-bit integer")

    @classmethod
    def from_dict(cls, role: str, data: dict) -> "BackendConfig":
        known = {f.name for f in fields(cls)} - {"role"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{role}: unknown backend keys {sorted(unknown)}")
        return cls(role=role, **data)

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
            "backoff_base": self.backoff_base,
            "max_in_flight": self.max_in_flight,
            "mock_seed": self.mock_seed,
            "options": dict(self.options),
        }
        if self.endpoint is not None:
            out["endpoint"] = self.endpoint
        if self.auth_env is not None:
            out["auth_env"] = self.auth_env
        return out


def backend_configs(spec: dict | None, seed: int | None = None) -> dict[str, BackendConfig]:
    """Expand a ``{role: {...}}`` mapping (with an optional ``default`` entry) to all roles."""
    spec = dict(spec or {})
    default = dict(spec.pop("default", {}) or {})
    unknown = set(spec) - set(ROLES)
    if unknown:
        raise ConfigError(f"unknown backend roles {sorted(unknown)}")
    out = {}
    for role in ROLES:
        merged = {**default, **(spec.get(role) or {})}
        if seed is not None and merged.get("kind", "mock") == "mock":
            merged["mock_seed"] = seed
        out[role] = BackendConfig.from_dict(role, merged)
    return out
