"""Per-video metric report and its JSON form."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources

from ..errors import InvalidInputError
from .motion import TIERS


@dataclass(frozen=True)
class CharacterScore:
    name: str
    computational: float | None
    judge: float | None


@dataclass(frozen=True)
class ConsistencyReport:
    video_id: str
    characters: tuple = ()
    s_subject: float | None = None
    s_world: float | None = None
    dynamic_degree: float | None = None
    motion_tier: str | None = None
    script_adherence: float = 1.0
    prompt_adherence: float = 1.0
    warnings: tuple = ()

    def __post_init__(self):
        if not self.video_id:
            raise InvalidInputError("video_id must be non-empty")
        if self.motion_tier is not None and self.motion_tier not in TIERS:
            raise InvalidInputError(f"motion_tier must be one of {TIERS}")
        object.__setattr__(self, "characters", tuple(self.characters))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        _check_range("s_subject", self.s_subject, -1.0, 1.0)
        _check_range("s_world", self.s_world, 0.0, 1.0)
        _check_range("dynamic_degree", self.dynamic_degree, 0.0, math.inf)
        _check_range("script_adherence", self.script_adherence, 1.0, 5.0)
        _check_range("prompt_adherence", self.prompt_adherence, 1.0, 5.0)
        for c in self.characters:
            _check_range(f"{c.name}.computational", c.computational, -1.0, 1.0)
            _check_range(f"{c.name}.judge", c.judge, 0.0, 10.0)

    def character(self, name: str) -> CharacterScore:
        for c in self.characters:
            if c.name == name:
                return c
        raise KeyError(name)

    def with_tier(self, tier: str) -> "ConsistencyReport":
        return replace(self, motion_tier=tier)

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "characters": [
                {"name": c.name, "computational": c.computational, "judge": c.judge} for c in self.characters
            ],
            "s_subject": self.s_subject,
            "s_world": self.s_world,
            "dynamic_degree": self.dynamic_degree,
            "motion_tier": self.motion_tier,
            "script_adherence": self.script_adherence,
            "prompt_adherence": self.prompt_adherence,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConsistencyReport":
        try:
            return cls(
                video_id=data["video_id"],
                characters=tuple(
                    CharacterScore(c["name"], c.get("computational"), c.get("judge")) for c in data["characters"]
                ),
                s_subject=data.get("s_subject"),
                s_world=data.get("s_world"),
                dynamic_degree=data.get("dynamic_degree"),
                motion_tier=data.get("motion_tier"),
                script_adherence=data["script_adherence"],
                prompt_adherence=data["prompt_adherence"],
                warnings=tuple(data.get("warnings", ())),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed metric report: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


def _check_range(name, value, lo, hi):
    if value is None:
        return
    # cosine scores can overshoot by rounding error
    if not (lo - 1e-9 <= value <= hi + 1e-9) or math.isnan(value):
        raise InvalidInputError(f"{name}={value} outside [{lo}, {hi}]")


def load_schema(name: str = "metric_report") -> dict:
    text = resources.files("scenecraft").joinpath(f"schemas/{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)
