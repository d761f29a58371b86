"""Production blueprint: schema types, scriptwriter prompt, parsing and canonical form."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

from .errors import (
    BlueprintParseError,
    BlueprintReferenceError,
    BlueprintSchemaError,
    BlueprintValidationError,
    InvalidInputError,
    UnknownFieldWarning,
)


@dataclass(frozen=True)
class ArtStyle:
    aesthetic_name: str
    color_palette: tuple[str, ...] = ()
    references: tuple[str, ...] = ()


@dataclass(frozen=True)
class CharacterSheet:
    name: str
    role: str
    personality: str
    physical_description: str
    visual_notes: str
    arc: str


@dataclass(frozen=True)
class SceneSpec:
    index: int
    duration_seconds: float
    setting: str
    action: str
    characters: tuple[str, ...]
    visual_notes: str
    sound_effects: tuple[str, ...]
    emotional_tone: str


@dataclass(frozen=True)
class Blueprint:
    themes: tuple[str, ...]
    art_style: ArtStyle
    characters: tuple[CharacterSheet, ...]
    scenes: tuple[SceneSpec, ...]

    def character(self, name: str) -> CharacterSheet:
        for sheet in self.characters:
            if sheet.name == name:
                return sheet
        raise KeyError(name)

    def cast_of(self, scene: SceneSpec) -> list[CharacterSheet]:
        return [self.character(n) for n in scene.characters]


@dataclass(frozen=True)
class ScriptConstraints:
    max_scenes: int = 8
    min_scenes: int = 1
    max_scene_seconds: float = 8.0

    def __post_init__(self):
        if not 1 <= self.min_scenes <= self.max_scenes:
            raise InvalidInputError("scene limits must satisfy 1 <= min_scenes <= max_scenes")
        if not self.max_scene_seconds > 0:
            raise InvalidInputError("max_scene_seconds must be positive")


# Schema order is also the canonical serialization order.
ART_STYLE_FIELDS = ("aesthetic_name", "color_palette", "references")
CHARACTER_FIELDS = ("name", "role", "personality", "physical_description", "visual_notes", "arc")
SCENE_FIELDS = (
    "index",
    "duration_seconds",
    "setting",
    "action",
    "characters",
    "visual_notes",
    "sound_effects",
    "emotional_tone",
)
TOP_LEVEL_FIELDS = ("themes", "art_style", "characters", "scenes")

SCHEMA_PATHS = (
    ("themes", "array of strings: the story's core themes"),
    ("art_style.aesthetic_name", "string naming the visual aesthetic"),
    ("art_style.color_palette", "array of color descriptors"),
    ("art_style.references", "array of visual references"),
    ("characters[].name", "unique string identifier"),
    ("characters[].role", "string"),
    ("characters[].personality", "string"),
    ("characters[].physical_description", "detailed string describing appearance"),
    ("characters[].visual_notes", "string"),
    ("characters[].arc", "string describing the character arc"),
    ("scenes[].index", "integer, 0-based and contiguous"),
    ("scenes[].duration_seconds", "positive number of seconds"),
    ("scenes[].setting", "string"),
    ("scenes[].action", "string describing what happens"),
    ("scenes[].characters", "array of character names present"),
    ("scenes[].visual_notes", "string with cinematography notes"),
    ("scenes[].sound_effects", "array of sound cues"),
    ("scenes[].emotional_tone", "string"),
)

_PROMPT_TEMPLATE = """\
You are a screenwriter and director planning a short animated film.
Turn the story request below into a production blueprint.

Story request:
<<<
{user_prompt}
>>>

Constraints:
- between {min_scenes} and {max_scenes} scenes
- each scene lasts at most {max_seconds:g} seconds
- every character listed in a scene must have a character sheet

Reply with a single JSON object and nothing else. Required fields:
{schema}
"""


def build_script_prompt(user_prompt: str, constraints: ScriptConstraints | None = None) -> str:
    if not user_prompt or not user_prompt.strip():
        raise InvalidInputError("user_prompt must be non-empty")
    constraints = constraints or ScriptConstraints()
    schema = "\n".join(f"- {path}: {desc}" for path, desc in SCHEMA_PATHS)
    return _PROMPT_TEMPLATE.format(
        user_prompt=user_prompt,
        min_scenes=constraints.min_scenes,
        max_scenes=constraints.max_scenes,
        max_seconds=constraints.max_scene_seconds,
        schema=schema,
    )


# -- validation ------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    path: str = ""


EMPTY_AESTHETIC_NAME = "EMPTY_AESTHETIC_NAME"
EMPTY_CHARACTER_NAME = "EMPTY_CHARACTER_NAME"
DUPLICATE_CHARACTER = "DUPLICATE_CHARACTER"
EMPTY_PHYSICAL_DESCRIPTION = "EMPTY_PHYSICAL_DESCRIPTION"
NONCONTIGUOUS_SCENE_INDEX = "NONCONTIGUOUS_SCENE_INDEX"
NONPOSITIVE_DURATION = "NONPOSITIVE_DURATION"
DANGLING_CHARACTER_REFERENCE = "DANGLING_CHARACTER_REFERENCE"
NO_SCENES = "NO_SCENES"
NO_CHARACTERS = "NO_CHARACTERS"

VIOLATION_CODES = (
    EMPTY_AESTHETIC_NAME,
    EMPTY_CHARACTER_NAME,
    DUPLICATE_CHARACTER,
    EMPTY_PHYSICAL_DESCRIPTION,
    NONCONTIGUOUS_SCENE_INDEX,
    NONPOSITIVE_DURATION,
    DANGLING_CHARACTER_REFERENCE,
    NO_SCENES,
    NO_CHARACTERS,
)


def validate_blueprint(b: Blueprint) -> list[Violation]:
    out = []
    if not b.art_style.aesthetic_name.strip():
        out.append(Violation(EMPTY_AESTHETIC_NAME, "art style needs a name", "art_style.aesthetic_name"))
    if not b.characters:
        out.append(Violation(NO_CHARACTERS, "blueprint has no characters", "characters"))
    if not b.scenes:
        out.append(Violation(NO_SCENES, "blueprint has no scenes", "scenes"))

    seen = set()
    for i, c in enumerate(b.characters):
        path = f"characters[{i}]"
        if not c.name.strip():
            out.append(Violation(EMPTY_CHARACTER_NAME, "character name is empty", f"{path}.name"))
        elif c.name in seen:
            out.append(Violation(DUPLICATE_CHARACTER, f"character {c.name!r} defined twice", f"{path}.name"))
        seen.add(c.name)
        if not c.physical_description.strip():
            out.append(
                Violation(
                    EMPTY_PHYSICAL_DESCRIPTION,
                    f"character {c.name!r} has no physical description",
                    f"{path}.physical_description",
                )
            )

    indices = [s.index for s in b.scenes]
    if indices != list(range(len(indices))):
        out.append(
            Violation(NONCONTIGUOUS_SCENE_INDEX, f"scene indices {indices} are not 0..n-1 in order", "scenes")
        )
    for pos, s in enumerate(b.scenes):
        path = f"scenes[{pos}]"
        if not (s.duration_seconds > 0 and math.isfinite(s.duration_seconds)):
            out.append(
                Violation(
                    NONPOSITIVE_DURATION,
                    f"scene {s.index} duration {s.duration_seconds} is not positive",
                    f"{path}.duration_seconds",
                )
            )
        for name in s.characters:
            if name not in seen:
                out.append(
                    Violation(
                        DANGLING_CHARACTER_REFERENCE,
                        f"scene {s.index} references unknown character {name!r}",
                        f"{path}.characters",
                    )
                )
    return out


# -- parsing ---------------------------------------------------------------

def _reject_constant(name):
    raise ValueError(f"non-finite number {name} is not allowed")


def _expect(obj, kind, path):
    if kind is str:
        ok = isinstance(obj, str)
    elif kind is list:
        ok = isinstance(obj, list)
    elif kind is dict:
        ok = isinstance(obj, dict)
    elif kind is int:
        ok = isinstance(obj, int) and not isinstance(obj, bool)
    elif kind is float:
        ok = isinstance(obj, (int, float)) and not isinstance(obj, bool)
    else:  # pragma: no cover
        raise TypeError(kind)
    if not ok:
        raise BlueprintSchemaError(path, f"expected {kind.__name__}, got {type(obj).__name__}")
    return obj


def _fields(obj: dict, names, path: str) -> dict:
    _expect(obj, dict, path or "<root>")
    for key in obj:
        if key not in names:
            where = f"{path}.{key}" if path else key
            warnings.warn(f"ignoring unknown field {where}", UnknownFieldWarning, stacklevel=4)
    for name in names:
        if name not in obj:
            raise BlueprintSchemaError(f"{path}.{name}" if path else name, "required field is missing")
    return obj


def _str_list(obj, path) -> tuple[str, ...]:
    _expect(obj, list, path)
    return tuple(_expect(item, str, f"{path}[{i}]") for i, item in enumerate(obj))


def _art_style(obj, path="art_style") -> ArtStyle:
    _fields(obj, ART_STYLE_FIELDS, path)
    return ArtStyle(
        aesthetic_name=_expect(obj["aesthetic_name"], str, f"{path}.aesthetic_name"),
        color_palette=_str_list(obj["color_palette"], f"{path}.color_palette"),
        references=_str_list(obj["references"], f"{path}.references"),
    )


def _character(obj, path) -> CharacterSheet:
    _fields(obj, CHARACTER_FIELDS, path)
    return CharacterSheet(**{k: _expect(obj[k], str, f"{path}.{k}") for k in CHARACTER_FIELDS})


def _scene(obj, path) -> SceneSpec:
    _fields(obj, SCENE_FIELDS, path)
    return SceneSpec(
        index=_expect(obj["index"], int, f"{path}.index"),
        duration_seconds=float(_expect(obj["duration_seconds"], float, f"{path}.duration_seconds")),
        setting=_expect(obj["setting"], str, f"{path}.setting"),
        action=_expect(obj["action"], str, f"{path}.action"),
        characters=_str_list(obj["characters"], f"{path}.characters"),
        visual_notes=_expect(obj["visual_notes"], str, f"{path}.visual_notes"),
        sound_effects=_str_list(obj["sound_effects"], f"{path}.sound_effects"),
        emotional_tone=_expect(obj["emotional_tone"], str, f"{path}.emotional_tone"),
    )


def blueprint_from_dict(obj) -> Blueprint:
    _fields(obj, TOP_LEVEL_FIELDS, "")
    characters = _expect(obj["characters"], list, "characters")
    scenes = _expect(obj["scenes"], list, "scenes")
    return Blueprint(
        themes=_str_list(obj["themes"], "themes"),
        art_style=_art_style(obj["art_style"]),
        characters=tuple(_character(c, f"characters[{i}]") for i, c in enumerate(characters)),
        scenes=tuple(_scene(s, f"scenes[{i}]") for i, s in enumerate(scenes)),
    )


def parse_blueprint(document) -> Blueprint:
    """Parse a UTF-8 JSON document into a validated :class:`Blueprint`.

    Unknown keys are dropped with an :class:`UnknownFieldWarning`. Raises
    :class:`BlueprintParseError` (with byte offset) for malformed input,
    :class:`BlueprintSchemaError` for missing or mistyped fields,
    :class:`BlueprintReferenceError` for scenes naming an undefined character
    and :class:`BlueprintValidationError` for any other broken invariant.
    """
    if isinstance(document, (bytes, bytearray)):
        try:
            text = bytes(document).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise BlueprintParseError(f"invalid UTF-8: {exc.reason}", exc.start) from None
    else:
        text = document
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8", "surrogatepass"))
        raise BlueprintParseError(exc.msg, offset) from None
    except (ValueError, RecursionError) as exc:
        raise BlueprintParseError(str(exc) or "invalid document", 0) from None

    b = blueprint_from_dict(obj)
    violations = validate_blueprint(b)
    known = {c.name for c in b.characters}
    for s in b.scenes:
        for name in s.characters:
            if name not in known:
                raise BlueprintReferenceError(s.index, name)
    if violations:
        raise BlueprintValidationError(violations)
    return b


# -- serialization ---------------------------------------------------------

def blueprint_to_dict(b: Blueprint) -> dict:
    return {
        "themes": list(b.themes),
        "art_style": {
            "aesthetic_name": b.art_style.aesthetic_name,
            "color_palette": list(b.art_style.color_palette),
            "references": list(b.art_style.references),
        },
        "characters": [{k: getattr(c, k) for k in CHARACTER_FIELDS} for c in b.characters],
        "scenes": [
            {
                "index": s.index,
                "duration_seconds": s.duration_seconds,
                "setting": s.setting,
                "action": s.action,
                "characters": list(s.characters),
                "visual_notes": s.visual_notes,
                "sound_effects": list(s.sound_effects),
                "emotional_tone": s.emotional_tone,
            }
            for s in b.scenes
        ],
    }


def serialize_blueprint(b: Blueprint) -> str:
    violations = validate_blueprint(b)
    if violations:
        raise BlueprintValidationError(violations)
    return json.dumps(blueprint_to_dict(b), indent=2, ensure_ascii=False) + "\n"
