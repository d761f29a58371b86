"""Backend roles (scriptwriter, t2i, i2i, i2v, judge, embedder, segmenter)."""
from __future__ import annotations

from dataclasses import dataclass

from ..media import Image
from .config import KINDS, ROLES, BackendConfig, backend_configs
from .mock import MockBackend
from .remote import RemoteBackend


@dataclass(frozen=True)
class CharacterAsset:
    character_name: str
    canonical: Image
    extra_views: tuple = ()


def make_backend(config: BackendConfig, transport=None):
    if config.kind == "mock":
        return MockBackend.from_config(config)
    return RemoteBackend(config, transport=transport)


class BackendSet:
    """One client per role, built from per-role configs."""

    def __init__(self, configs: dict[str, BackendConfig], clients: dict | None = None):
        self.configs = dict(configs)
        self._clients = dict(clients or {})
        for role in ROLES:
            if role not in self._clients:
                self._clients[role] = make_backend(self.configs[role])

    @classmethod
    def mock(cls, seed: int = 0, **options) -> "BackendSet":
        cfg = {"default": {"kind": "mock", "mock_seed": seed, "options": options}}
        return cls(backend_configs(cfg))

    def __getitem__(self, role: str):
        return self._clients[role]

    def all_mock(self) -> bool:
        return all(self.configs[r].kind == "mock" for r in ROLES)

    def replace(self, role: str, client) -> "BackendSet":
        clients = dict(self._clients)
        clients[role] = client
        return BackendSet(self.configs, clients)


__all__ = [
    "BackendConfig",
    "BackendSet",
    "CharacterAsset",
    "KINDS",
    "MockBackend",
    "ROLES",
    "RemoteBackend",
    "backend_configs",
    "make_backend",
]
