"""Score a finished run directory and write its metric report."""
from __future__ import annotations

import logging
import warnings
from pathlib import Path

import numpy as np

from ._util import atomic_write_text
from .backends import BackendSet, CharacterAsset
from .errors import InsufficientSignalError, InvalidInputError, ScenecraftWarning
from .media import concatenate, sample_uniform
from .metrics.motion import clip_flows, track_grid, world_consistency
from .metrics.report import CharacterScore, ConsistencyReport
from .metrics.similarity import adherence, character_consistency, judge_character_consistency, subject_consistency
from .orchestrator import ABLATIONS, load_assets, load_video, read_run_config

log = logging.getLogger(__name__)

REPORT_FILE = "report.json"


def scene_script_text(scene) -> str:
    """What the script asked this scene to show; the judge's script context."""
    return f"{scene.setting}. {scene.action}. {scene.visual_notes}"


def reference_assets(blueprint, assets: dict, t2i) -> dict[str, CharacterAsset]:
    """Stored assets, with any missing character drawn fresh from its sheet.

    Runs without stage 2 keep no assets on disk; the reference those runs
    are scored against is generated here and never written to the run.
    """
    out = {}
    for sheet in blueprint.characters:
        if sheet.name in assets:
            out[sheet.name] = assets[sheet.name]
        else:
            out[sheet.name] = CharacterAsset(sheet.name, t2i.synthesize_character(sheet, blueprint.art_style))
    return out


def evaluate_run(run_dir, backends: BackendSet | None = None, frames_per_scene: int | None = None,
                 references: dict | None = None, video_id: str | None = None, motion: bool = True,
                 write: bool = True) -> ConsistencyReport:
    """Compute every per-video metric for a composed run.

    ``references`` overrides the character assets used as the "+1" frame,
    which is how an ablation batch scores all three variants against the
    same images. ``motion=False`` skips flow-based metrics (they dominate
    runtime) and leaves them null.
    """
    run_dir = Path(run_dir)
    config = read_run_config(run_dir)
    blueprint, clips = load_video(run_dir)
    backends = backends or BackendSet(config.backends)
    f = config.frames_per_scene_sample if frames_per_scene is None else frames_per_scene
    if f < 1:
        raise InvalidInputError("frames per scene must be >= 1")

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ScenecraftWarning)
        refs = references or reference_assets(blueprint, load_assets(run_dir, blueprint), backends["t2i"])

        characters = []
        for sheet in blueprint.characters:
            own = [clips[s.index] for s in blueprint.scenes if sheet.name in s.characters]
            if not own:
                warnings.warn(f"{sheet.name} appears in no scene; not scored", ScenecraftWarning)
                characters.append(CharacterScore(sheet.name, None, None))
                continue
            desc = sheet.physical_description
            try:
                comp = character_consistency(own, refs[sheet.name], desc, f, backends["segmenter"], backends["embedder"])
            except InsufficientSignalError as exc:
                warnings.warn(f"{sheet.name}: computational score withheld: {exc}", ScenecraftWarning)
                comp = None
            judge = judge_character_consistency(own, refs[sheet.name], desc, f, backends["judge"])
            characters.append(CharacterScore(sheet.name, comp, judge))

        script_scores, prompt_scores = [], []
        for scene, clip in zip(blueprint.scenes, clips):
            frames = [s.image for s in sample_uniform([clip], f)]
            s, p = adherence(frames, scene_script_text(scene), config.user_prompt, backends["judge"])
            script_scores.append(s)
            prompt_scores.append(p)

        embedder = backends["embedder"]
        if config.subject_scope == "video":
            video = concatenate(clips)
            s_subject = subject_consistency(video, embedder) if video.frame_count > 1 else None
        else:
            per = [subject_consistency(c, embedder) for c in clips if c.frame_count > 1]
            s_subject = float(np.mean(per)) if per else None

        s_world = degree = None
        if motion:
            # flows and tracks stay inside a scene; a cut is not motion
            tracks, magnitudes = [], []
            for clip in clips:
                if clip.frame_count < 2:
                    continue
                fwd = clip_flows(clip, config.flow)
                bwd = clip_flows(clip, config.flow, backward=True)
                magnitudes.extend(fl.magnitude().mean() for fl in fwd)
                tracks.extend(
                    track_grid(clip, config.track_spacing, config.flow, config.fb_threshold,
                               config.photometric_threshold, forward=fwd, backward=bwd)
                )
            if tracks:
                s_world = world_consistency(tracks)
                degree = float(np.mean(magnitudes))

    messages = []
    for w in caught:
        if issubclass(w.category, ScenecraftWarning):
            text = f"{w.category.__name__}: {w.message}"
            if text not in messages:
                messages.append(text)
        else:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)

    report = ConsistencyReport(
        video_id=video_id or run_dir.name,
        characters=tuple(characters),
        s_subject=s_subject,
        s_world=s_world,
        dynamic_degree=degree,
        motion_tier=None,
        script_adherence=float(np.mean(script_scores)),
        prompt_adherence=float(np.mean(prompt_scores)),
        warnings=tuple(messages),
    )
    if write:
        atomic_write_text(run_dir / REPORT_FILE, report.to_json())
    return report


def evaluate_ablation(batch_dir, backends: BackendSet | None = None, frames_per_scene: int | None = None,
                      motion: bool = True, write: bool = True) -> dict[str, ConsistencyReport]:
    """Score the three variants of a batch against the full run's character assets."""
    batch_dir = Path(batch_dir)
    full_dir = batch_dir / "full"
    blueprint, _ = load_video(full_dir)
    refs = {name: asset for name, asset in load_assets(full_dir, blueprint).items()}
    out = {}
    for ablation in ABLATIONS:
        out[ablation] = evaluate_run(
            batch_dir / ablation, backends, frames_per_scene, references=refs,
            video_id=f"{batch_dir.name}/{ablation}", motion=motion, write=write,
        )
    return out


__all__ = ["REPORT_FILE", "evaluate_ablation", "evaluate_run", "reference_assets", "scene_script_text"]
