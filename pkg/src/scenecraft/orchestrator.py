"""Staged, checkpointed pipeline: blueprint, character assets, scenes, composition.

A run lives in one directory::

    run.json            resolved RunConfig (no output path, so runs are comparable)
    state.json          RunState: last completed stage plus artifact digests
    blueprint.json
    assets/<name>.png   one canonical image per character (absent for no_character_viz)
    seeds/scene_<k>.png (absent for no_seed_frame)
    clips/scene_<k>/    PNG frames + manifest.json
    final/manifest.json ordered scene list and total frame count
    final/cues.json     per-scene sound cue sheet
    provenance.log      one JSON line per backend call

Every artifact is written atomically before the state file that lists its
digest, so a crash leaves either the previous checkpoint or the new one.
"""
from __future__ import annotations

import json
import logging
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import filelock
import yaml

from ._util import atomic_write_bytes, atomic_write_text, canonical_json, sha256_hex, write_json
from .backends import BackendSet, CharacterAsset
from .backends.config import backend_configs
from .blueprint import (
    Blueprint,
    SceneSpec,
    ScriptConstraints,
    blueprint_to_dict,
    parse_blueprint,
    serialize_blueprint,
)
from .errors import (
    BackendError,
    BridgeFallbackWarning,
    CompositionError,
    ConfigError,
    CorruptedClipError,
    CorruptedRunError,
    IncompleteRunError,
    InvalidInputError,
    PipelineError,
    RunLockedError,
)
from .media import Clip, Image, concatenate, encode_png, load_image, read_clip, write_clip_atomic
from .metrics.flow import FlowParams

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no_character_viz", "no_seed_frame")
BRIDGE_POLICIES = ("auto", "llm", "heuristic", "always", "never")
SUBJECT_SCOPES = ("video", "scene")
STAGES = ("none", "blueprint", "characters", "scenes", "composed")
FPS = 24

RUN_FILE = "run.json"
STATE_FILE = "state.json"
BLUEPRINT_FILE = "blueprint.json"
PROVENANCE_FILE = "provenance.log"
LOCK_FILE = ".lock"


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    user_prompt: str
    ablation: str = "full"
    backends: dict = field(default_factory=lambda: backend_configs(None))
    frames_per_scene_sample: int = 4
    output_dir: str | None = None
    corpus_tags: tuple = ()
    bridge_policy: str = "auto"
    max_scenes: int = 8
    max_scene_seconds: float = 8.0
    stage2_workers: int = 4
    flow: FlowParams = FlowParams()
    track_spacing: int = 8
    fb_threshold: float = 1.0
    photometric_threshold: float | None = 24.0
    subject_scope: str = "video"

    def __post_init__(self):
        if not isinstance(self.user_prompt, str) or not self.user_prompt.strip():
            raise ConfigError("user_prompt must be a non-empty string")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.bridge_policy not in BRIDGE_POLICIES:
            raise ConfigError(f"bridge_policy must be one of {BRIDGE_POLICIES}")
        if self.subject_scope not in SUBJECT_SCOPES:
            raise ConfigError(f"subject_scope must be one of {SUBJECT_SCOPES}")
        if not isinstance(self.frames_per_scene_sample, int) or self.frames_per_scene_sample < 1:
            raise ConfigError("frames_per_scene_sample must be an integer >= 1")
        if self.stage2_workers < 1:
            raise ConfigError("stage2_workers must be >= 1")
        if self.track_spacing < 2 or not self.fb_threshold > 0:
            raise ConfigError("track_spacing must be >= 2 and fb_threshold > 0")
        try:
            ScriptConstraints(max_scenes=self.max_scenes, max_scene_seconds=self.max_scene_seconds)
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from None
        object.__setattr__(self, "corpus_tags", tuple(str(t) for t in self.corpus_tags))

    @property
    def constraints(self) -> ScriptConstraints:
        return ScriptConstraints(max_scenes=self.max_scenes, max_scene_seconds=self.max_scene_seconds)

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "RunConfig":
        """Build from a config mapping; non-None ``overrides`` win, ``seed`` resets every mock seed."""
        data = {**dict(data or {}), **{k: v for k, v in overrides.items() if v is not None}}
        seed = data.pop("seed", None)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            data["backends"] = backend_configs(data.get("backends"), seed=seed)
            if "flow" in data:
                data["flow"] = FlowParams.from_dict(data["flow"])
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from None
        if "ablation" in data and isinstance(data["ablation"], str):
            data["ablation"] = data["ablation"].replace("-", "_")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self, include_output: bool = False) -> dict:
        out = {
            "user_prompt": self.user_prompt,
            "ablation": self.ablation,
            "backends": {role: cfg.to_dict() for role, cfg in self.backends.items()},
            "frames_per_scene_sample": self.frames_per_scene_sample,
            "corpus_tags": list(self.corpus_tags),
            "bridge_policy": self.bridge_policy,
            "max_scenes": self.max_scenes,
            "max_scene_seconds": self.max_scene_seconds,
            "stage2_workers": self.stage2_workers,
            "flow": self.flow.to_dict(),
            "track_spacing": self.track_spacing,
            "fb_threshold": self.fb_threshold,
            "photometric_threshold": self.photometric_threshold,
            "subject_scope": self.subject_scope,
        }
        if include_output:
            out["output_dir"] = self.output_dir
        return out

    def resolved_bridge_policy(self) -> str:
        if self.bridge_policy != "auto":
            return self.bridge_policy
        return "heuristic" if self.backends["scriptwriter"].kind == "mock" else "llm"


def load_config_file(path) -> dict:
    """Read a JSON or YAML config file into a dict (ConfigError on any problem)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping at the top level")
    return data


def load_run_config(path, **overrides) -> RunConfig:
    return RunConfig.from_dict(load_config_file(path), **overrides)


# -- state -------------------------------------------------------------------

@dataclass
class RunState:
    completed_stage: str = "none"
    scene_count: int | None = None
    scenes_completed: int = 0
    digests: dict = field(default_factory=dict)
    bridged: dict = field(default_factory=dict)
    provenance_entries: int = 0

    @property
    def terminal(self) -> bool:
        return self.completed_stage == "composed"

    def describe(self) -> str:
        if self.completed_stage == "scenes" or (self.completed_stage == "characters" and self.scenes_completed):
            return f"scenes({self.scenes_completed} of {self.scene_count})"
        return self.completed_stage

    def to_dict(self) -> dict:
        return {
            "completed_stage": self.completed_stage,
            "scene_count": self.scene_count,
            "scenes_completed": self.scenes_completed,
            "bridged": {str(k): v for k, v in sorted(self.bridged.items())},
            "provenance_entries": self.provenance_entries,
            "digests": dict(sorted(self.digests.items())),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunState":
        try:
            state = cls(
                completed_stage=data["completed_stage"],
                scene_count=data.get("scene_count"),
                scenes_completed=int(data.get("scenes_completed", 0)),
                digests=dict(data.get("digests", {})),
                bridged={int(k): bool(v) for k, v in data.get("bridged", {}).items()},
                provenance_entries=int(data.get("provenance_entries", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptedRunError(STATE_FILE, f"unreadable state ({exc})") from None
        if state.completed_stage not in STAGES:
            raise CorruptedRunError(STATE_FILE, f"unknown stage {state.completed_stage!r}")
        return state


@dataclass(frozen=True)
class SeedFrame:
    scene_index: int
    image: Image
    used_prior_frame: bool = False

    def __post_init__(self):
        if self.scene_index == 0 and self.used_prior_frame:
            raise InvalidInputError("scene 0 cannot use a prior frame")


@dataclass(frozen=True)
class Cue:
    scene_index: int
    start_time: float
    end_time: float
    sound_effects: tuple
    emotional_tone: str


@dataclass(frozen=True)
class CueSheet:
    cues: tuple

    @property
    def total_duration(self) -> float:
        return self.cues[-1].end_time if self.cues else 0.0

    def to_dict(self) -> dict:
        return {
            "total_duration": self.total_duration,
            "cues": [
                {
                    "scene_index": c.scene_index,
                    "start_time": c.start_time,
                    "end_time": c.end_time,
                    "sound_effects": list(c.sound_effects),
                    "emotional_tone": c.emotional_tone,
                }
                for c in self.cues
            ],
        }


# -- artifact paths and digests -------------------------------------------------

def asset_filename(name: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", name)
    if safe != name or safe.startswith("."):
        safe = f"{safe.lstrip('.')}-{sha256_hex(name.encode('utf-8'))[:8]}"
    return f"{safe}.png"


def clip_dirname(k: int) -> str:
    return f"clips/scene_{k}"


def seed_filename(k: int) -> str:
    return f"seeds/scene_{k}.png"


def artifact_digest(path: Path) -> str:
    """sha256 of a file, or of a clip directory's manifest and frames in order."""
    if path.is_dir():
        manifest = path / "manifest.json"
        if not manifest.is_file():
            raise CorruptedRunError(str(path), "clip manifest missing")
        h = [sha256_hex(manifest.read_bytes())]
        for name in json.loads(manifest.read_text(encoding="utf-8")).get("frames", []):
            fp = path / name
            if not fp.is_file():
                raise CorruptedRunError(f"{path.name}/{name}", "frame missing")
            h.append(sha256_hex(fp.read_bytes()))
        return sha256_hex("\n".join(h).encode("ascii"))
    if not path.is_file():
        raise CorruptedRunError(str(path), "artifact missing")
    return sha256_hex(path.read_bytes())


def output_digest(value) -> str:
    if isinstance(value, Image):
        return value.digest()
    if isinstance(value, Clip):
        return sha256_hex("\n".join(fr.digest() for fr in value.frames).encode("ascii"))
    if isinstance(value, Blueprint):
        return sha256_hex(canonical_json(blueprint_to_dict(value)).encode("utf-8"))
    return sha256_hex(canonical_json(value).encode("utf-8"))


# -- the run directory -----------------------------------------------------------

class RunDir:
    """Checkpoint and provenance bookkeeping for one run directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.state = RunState()
        self._provenance: list[str] = []

    def path(self, rel: str) -> Path:
        return self.root / rel

    def exists(self) -> bool:
        return (self.root / STATE_FILE).is_file()

    # provenance
    def record(self, stage: str, role: str, op: str, inputs: dict, output, scene: int | None = None):
        entry = {
            "seq": len(self._provenance),
            "stage": stage,
            "scene": scene,
            "role": role,
            "op": op,
            "inputs": inputs,
            "input_digest": sha256_hex(canonical_json(inputs).encode("utf-8")),
            "output_digest": output_digest(output),
        }
        self._provenance.append(canonical_json(entry))

    def provenance(self) -> list[dict]:
        return [json.loads(line) for line in self._provenance]

    # checkpoints
    def checkpoint(self, **changes):
        for key, value in changes.items():
            setattr(self.state, key, value)
        self.state.provenance_entries = len(self._provenance)
        atomic_write_text(self.path(PROVENANCE_FILE), "".join(line + "\n" for line in self._provenance))
        write_json(self.path(STATE_FILE), self.state.to_dict())

    def add_artifact(self, rel: str):
        self.state.digests[rel] = artifact_digest(self.path(rel))

    def load(self, verify: bool = True) -> RunState:
        try:
            data = json.loads(self.path(STATE_FILE).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise IncompleteRunError("none") from None
        except ValueError as exc:
            raise CorruptedRunError(STATE_FILE, f"unreadable state ({exc})") from None
        self.state = RunState.from_dict(data)
        try:
            lines = self.path(PROVENANCE_FILE).read_text(encoding="utf-8").splitlines()
        except FileNotFoundError:
            lines = []
        if len(lines) < self.state.provenance_entries:
            raise CorruptedRunError(PROVENANCE_FILE, "fewer entries than the checkpoint records")
        # anything past the checkpoint belongs to work that never completed
        self._provenance = lines[: self.state.provenance_entries]
        if verify:
            for rel, expected in sorted(self.state.digests.items()):
                actual = artifact_digest(self.path(rel))
                if actual != expected:
                    raise CorruptedRunError(rel)
        return self.state


def read_run_config(run_dir) -> RunConfig:
    path = Path(run_dir) / RUN_FILE
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IncompleteRunError("none") from None
    except ValueError as exc:
        raise CorruptedRunError(RUN_FILE, f"unreadable config ({exc})") from None
    return RunConfig.from_dict(data, output_dir=str(run_dir))


def load_blueprint(run_dir) -> Blueprint:
    return parse_blueprint(Path(run_dir, BLUEPRINT_FILE).read_bytes())


def load_assets(run_dir, blueprint: Blueprint) -> dict[str, CharacterAsset]:
    assets = {}
    for sheet in blueprint.characters:
        path = Path(run_dir, "assets", asset_filename(sheet.name))
        if path.is_file():
            assets[sheet.name] = CharacterAsset(sheet.name, load_image(path))
    return assets


def load_clips(run_dir, blueprint: Blueprint) -> list[Clip]:
    clips = []
    for scene in blueprint.scenes:
        try:
            clips.append(read_clip(Path(run_dir, clip_dirname(scene.index)), scene.index))
        except CorruptedClipError as exc:
            raise CorruptedRunError(clip_dirname(scene.index), str(exc)) from None
    return clips


# -- stage helpers ---------------------------------------------------------------

def decide_bridge(scene: SceneSpec, previous: SceneSpec, policy: str, scriptwriter=None) -> bool:
    """Whether ``scene``'s seed should be conditioned on the previous clip's last frame."""
    if scene.index < 1:
        raise InvalidInputError("scene 0 has no predecessor to bridge from")
    if policy == "always":
        return True
    if policy == "never":
        return False
    if policy == "heuristic":
        return scene.setting == previous.setting
    if policy == "llm":
        if scriptwriter is None:
            raise InvalidInputError("llm bridge policy needs a scriptwriter backend")
        answer = scriptwriter.bridge_answer(scene, previous)
        verdict = parse_yes_no(answer)
        if verdict is None:
            warnings.warn(
                f"scene {scene.index}: unparseable bridge answer {str(answer)[:60]!r}; using setting heuristic",
                BridgeFallbackWarning,
                stacklevel=2,
            )
            return scene.setting == previous.setting
        return verdict
    raise InvalidInputError(f"unknown bridge policy {policy!r}")


def parse_yes_no(answer) -> bool | None:
    if not isinstance(answer, str):
        return None
    words = re.findall(r"[a-z]+", answer.lower())
    if not words:
        return None
    if words[0] in ("yes", "true"):
        return True
    if words[0] in ("no", "false"):
        return False
    return None


def run_scene(scene: SceneSpec, blueprint: Blueprint, assets: dict, prior_final_frame: Image | None,
              config: RunConfig, backends: BackendSet, run: RunDir | None = None):
    """Seed frame (unless ablated) and clip for one scene."""
    style = blueprint.art_style
    sheets = blueprint.cast_of(scene)
    seed_frame = None
    try:
        if config.ablation == "no_seed_frame":
            clip = backends["i2v"].synthesize_clip(None, scene, style, sheets)
            if run:
                run.record("scenes", "i2v", "synthesize_clip", {"scene": scene.index, "seed": None}, clip, scene.index)
        else:
            refs = [assets[n] for n in scene.characters if n in assets]
            image = backends["i2i"].synthesize_seed(scene, style, refs, prior_final_frame, sheets)
            seed_frame = SeedFrame(scene.index, image, prior_final_frame is not None)
            if run:
                run.record(
                    "scenes", "i2i", "synthesize_seed",
                    {
                        "scene": scene.index,
                        "refs": {r.character_name: r.canonical.digest() for r in refs},
                        "prior": prior_final_frame.digest() if prior_final_frame is not None else None,
                    },
                    image, scene.index,
                )
            clip = backends["i2v"].synthesize_clip(image, scene, style, sheets)
            if run:
                run.record("scenes", "i2v", "synthesize_clip", {"scene": scene.index, "seed": image.digest()},
                           clip, scene.index)
    except (BackendError, InvalidInputError) as exc:
        raise PipelineError("scenes", exc, scene.index) from exc
    expected = max(1, int(round(scene.duration_seconds * FPS)))
    if clip.fps != FPS or clip.frame_count != expected:
        raise PipelineError(
            "scenes",
            InvalidInputError(f"i2v returned {clip.frame_count} frames at {clip.fps} fps, expected {expected} at {FPS}"),
            scene.index,
        )
    return seed_frame, Clip(clip.frames, clip.fps, scene.index)


def compose(clips, scenes) -> tuple[Clip, CueSheet]:
    """Concatenate per-scene clips in scene order and build the cue sheet."""
    clips, scenes = list(clips), list(scenes)
    if len(clips) != len(scenes):
        raise CompositionError(f"{len(scenes)} scenes but {len(clips)} clips")
    by_index = {}
    for pos, clip in enumerate(clips):
        idx = clip.scene_index if clip.scene_index is not None else pos
        if idx in by_index:
            raise CompositionError(f"two clips claim scene {idx}")
        by_index[idx] = clip
    ordered = []
    for k, scene in enumerate(sorted(scenes, key=lambda s: s.index)):
        if scene.index != k:
            raise CompositionError(f"scene index gap: expected {k}, found {scene.index}")
        if k not in by_index:
            raise CompositionError(f"clip missing for scene {k}")
        ordered.append((scene, by_index[k]))
    try:
        video = concatenate([c for _, c in ordered])
    except InvalidInputError as exc:
        raise CompositionError(str(exc)) from None

    cues, frames_before = [], 0
    for scene, clip in ordered:
        start = frames_before / clip.fps
        frames_before += clip.frame_count
        cues.append(Cue(scene.index, start, frames_before / clip.fps, tuple(scene.sound_effects), scene.emotional_tone))
    return video, CueSheet(tuple(cues))


# -- the pipeline ---------------------------------------------------------------

def _lock(root: Path):
    lock = filelock.FileLock(str(root / LOCK_FILE), timeout=0)
    try:
        lock.acquire()
    except filelock.Timeout:
        raise RunLockedError(f"{root} is in use by another run") from None
    return lock


def run_pipeline(config: RunConfig, blueprint: Blueprint | None = None, backends: BackendSet | None = None,
                 stop_after: str | None = None) -> RunState:
    """Run (or continue) the pipeline in ``config.output_dir``.

    ``blueprint`` skips the scriptwriter and uses the given script, which is how
    an ablation batch shares stage 1. ``stop_after`` halts after the named
    stage, leaving a resumable run directory.
    """
    if not config.output_dir:
        raise ConfigError("output_dir is required")
    if stop_after is not None and stop_after not in STAGES[1:]:
        raise InvalidInputError(f"stop_after must be one of {STAGES[1:]}")
    root = Path(config.output_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {root}: {exc.strerror or exc}") from None
    backends = backends or BackendSet(config.backends)
    lock = _lock(root)
    try:
        return _execute(config, RunDir(root), blueprint, backends, stop_after)
    finally:
        lock.release()


def resume(run_dir, backends: BackendSet | None = None, stop_after: str | None = None) -> RunState:
    """Continue a run from its last checkpoint; a finished run is returned unchanged."""
    config = read_run_config(run_dir)
    return run_pipeline(config, backends=backends, stop_after=stop_after)


def _execute(config: RunConfig, run: RunDir, blueprint, backends: BackendSet, stop_after) -> RunState:
    run_doc = config.to_dict()
    if run.exists():
        stored = json.loads(run.path(RUN_FILE).read_text(encoding="utf-8")) if run.path(RUN_FILE).is_file() else None
        if stored != json.loads(json.dumps(run_doc)):
            raise ConfigError(f"{run.root} holds a run with a different configuration")
        run.load(verify=True)
        log.info("resuming %s at %s", run.root, run.state.describe())
    else:
        write_json(run.path(RUN_FILE), run_doc)
    state = run.state

    def done(stage):
        return stop_after == stage

    # stage 1: blueprint
    if state.completed_stage == "none":
        if blueprint is None:
            try:
                blueprint = backends["scriptwriter"].write_script(config.user_prompt, config.constraints)
            except (BackendError, InvalidInputError) as exc:
                raise PipelineError("blueprint", exc) from exc
            run.record("blueprint", "scriptwriter", "write_script", {"prompt": config.user_prompt}, blueprint)
        else:
            run.record("blueprint", "shared", "blueprint", {"prompt": config.user_prompt}, blueprint)
        atomic_write_text(run.path(BLUEPRINT_FILE), serialize_blueprint(blueprint))
        run.add_artifact(BLUEPRINT_FILE)
        run.checkpoint(completed_stage="blueprint", scene_count=len(blueprint.scenes))
        if done("blueprint"):
            return state
    blueprint = load_blueprint(run.root)

    # stage 2: character assets
    if state.completed_stage == "blueprint":
        if config.ablation == "full":
            t2i = backends["t2i"]
            sheets = list(blueprint.characters)
            try:
                with ThreadPoolExecutor(max_workers=min(config.stage2_workers, len(sheets))) as pool:
                    images = list(pool.map(lambda s: t2i.synthesize_character(s, blueprint.art_style), sheets))
            except (BackendError, InvalidInputError) as exc:
                raise PipelineError("characters", exc) from exc
            for sheet, image in zip(sheets, images):
                rel = f"assets/{asset_filename(sheet.name)}"
                atomic_write_bytes(run.path(rel), encode_png(image))
                run.add_artifact(rel)
                run.record("characters", "t2i", "synthesize_character", {"character": sheet.name}, image)
        run.checkpoint(completed_stage="characters")
        if done("characters"):
            return state

    # stage 3: scenes, strictly in order
    if state.completed_stage == "characters":
        assets = load_assets(run.root, blueprint) if config.ablation == "full" else {}
        policy = config.resolved_bridge_policy()
        previous_clip = None
        if state.scenes_completed:
            k = state.scenes_completed - 1
            previous_clip = read_clip(run.path(clip_dirname(k)), k)
        for scene in blueprint.scenes[state.scenes_completed:]:
            prior = None
            if scene.index > 0 and config.ablation != "no_seed_frame":
                previous = blueprint.scenes[scene.index - 1]
                try:
                    bridge = decide_bridge(scene, previous, policy, backends["scriptwriter"])
                except BackendError as exc:
                    raise PipelineError("scenes", exc, scene.index) from exc
                if policy == "llm":
                    run.record("scenes", "scriptwriter", "bridge", {"scene": scene.index}, bridge, scene.index)
                if bridge:
                    prior = previous_clip.frames[-1]
            seed, clip = run_scene(scene, blueprint, assets, prior, config, backends, run)
            if seed is not None:
                rel = seed_filename(scene.index)
                atomic_write_bytes(run.path(rel), encode_png(seed.image))
                run.add_artifact(rel)
                state.bridged[scene.index] = seed.used_prior_frame
            write_clip_atomic(clip, run.path(clip_dirname(scene.index)))
            run.add_artifact(clip_dirname(scene.index))
            run.checkpoint(scenes_completed=scene.index + 1)
            previous_clip = clip
        run.checkpoint(completed_stage="scenes")
        if done("scenes"):
            return state

    # stage 4: composition
    if state.completed_stage == "scenes":
        clips = load_clips(run.root, blueprint)
        video, cues = compose(clips, blueprint.scenes)
        manifest = final_manifest(clips, blueprint, state)
        if manifest["total_frames"] != video.frame_count:
            raise CompositionError("manifest total disagrees with the concatenated clip")
        write_json(run.path("final/manifest.json"), manifest)
        write_json(run.path("final/cues.json"), cues.to_dict())
        run.add_artifact("final/manifest.json")
        run.add_artifact("final/cues.json")
        run.checkpoint(completed_stage="composed")
    return state


def final_manifest(clips, blueprint: Blueprint, state: RunState) -> dict:
    scenes, start = [], 0
    for scene, clip in zip(blueprint.scenes, clips):
        rel = clip_dirname(scene.index)
        scenes.append(
            {
                "index": scene.index,
                "clip": rel,
                "digest": state.digests[rel],
                "start_frame": start,
                "frame_count": clip.frame_count,
            }
        )
        start += clip.frame_count
    return {
        "fps": clips[0].fps,
        "width": clips[0].width,
        "height": clips[0].height,
        "total_frames": start,
        "scenes": scenes,
    }


def load_video(run_dir) -> tuple[Blueprint, list[Clip]]:
    """Blueprint and verified per-scene clips of a finished run."""
    run = RunDir(run_dir)
    state = run.load(verify=True)
    if not state.terminal:
        raise IncompleteRunError(state.describe())
    blueprint = load_blueprint(run_dir)
    return blueprint, load_clips(run_dir, blueprint)


# -- ablation batch ------------------------------------------------------------------

def run_ablation_batch(config: RunConfig, out_dir, backends: BackendSet | None = None) -> dict[str, RunState]:
    """Run all three configurations into ``out_dir/<ablation>`` on one shared blueprint.

    The full run goes first and its stage-1 script is handed to the others.
    Each sub-run checkpoints independently, so an interrupted batch resumes
    where it stopped.
    """
    out_dir = Path(out_dir)
    states = {}
    shared = None
    for ablation in ABLATIONS:
        sub = replace(config, ablation=ablation, output_dir=str(out_dir / ablation))
        states[ablation] = run_pipeline(sub, blueprint=shared, backends=backends)
        if shared is None:
            shared = load_blueprint(sub.output_dir)
    return states


__all__ = [
    "ABLATIONS",
    "BRIDGE_POLICIES",
    "Cue",
    "CueSheet",
    "RunConfig",
    "RunDir",
    "RunState",
    "SeedFrame",
    "compose",
    "decide_bridge",
    "load_run_config",
    "load_video",
    "resume",
    "run_ablation_batch",
    "run_pipeline",
    "run_scene",
]
