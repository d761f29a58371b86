"""Embedding- and judge-based consistency and adherence scores."""
from __future__ import annotations

import itertools
import warnings
from typing import Sequence

import numpy as np

from ..errors import (
    DroppedFrameWarning,
    InsufficientSignalError,
    InvalidInputError,
    UndefinedSimilarityError,
)
from ..media import Clip, apply_mask, sample_uniform

CONSISTENCY_RUBRIC = "consistency_0_10"
ADHERENCE_RUBRIC = "adherence_1_5"
REFERENCE_SCENE = -1


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedSimilarityError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def cross_scene_mean(vectors: Sequence, scenes: Sequence[int]) -> float:
    """Mean cosine over unordered pairs whose scene labels differ."""
    total, count = 0.0, 0
    for i, j in itertools.combinations(range(len(vectors)), 2):
        if scenes[i] == scenes[j]:
            continue
        total += cosine_similarity(vectors[i], vectors[j])
        count += 1
    if count == 0:
        raise InsufficientSignalError("no cross-scene frame pairs to compare")
    return total / count


def character_consistency(clips: Sequence[Clip], reference, description: str, f: int,
                          segmenter, embedder, include_first: bool = False) -> float:
    """Masked cross-scene similarity of one character.

    Samples ``f`` frames per clip, adds the reference image as its own
    pseudo-scene, masks each to the character region and embeds it
    conditioned on ``description``. Frames whose mask comes back empty are
    dropped; if more than half are dropped the score is refused.
    """
    if not clips:
        raise InvalidInputError("need at least one clip")
    if f < 1:
        raise InvalidInputError("f must be >= 1")
    ref_image = getattr(reference, "canonical", reference)
    samples = sample_uniform(clips, f, include_first)
    items = [(s.image, s.scene_index) for s in samples] + [(ref_image, REFERENCE_SCENE)]

    vectors, scenes, dropped = [], [], 0
    for image, scene in items:
        mask = segmenter.segment(image, description)
        if mask.is_empty():
            dropped += 1
            warnings.warn(
                f"empty character mask in {'reference' if scene == REFERENCE_SCENE else f'scene {scene}'}; frame dropped",
                DroppedFrameWarning,
                stacklevel=2,
            )
            continue
        vectors.append(embedder.embed(apply_mask(image, mask), description))
        scenes.append(scene)
    if dropped * 2 > len(items):
        raise InsufficientSignalError(f"{dropped} of {len(items)} frames had no character region")
    return cross_scene_mean(vectors, scenes)


def judge_character_consistency(clips: Sequence[Clip], reference, description: str, f: int, judge,
                                include_first: bool = False) -> float:
    """Mean 0-10 judge score of each sampled frame against the reference."""
    if not clips:
        raise InvalidInputError("need at least one clip")
    ref_image = getattr(reference, "canonical", reference)
    samples = sample_uniform(clips, f, include_first)
    scores = [judge.judge_frames([s.image], ref_image, CONSISTENCY_RUBRIC, description) for s in samples]
    return float(np.mean(scores))


def subject_consistency(clip: Clip, embedder) -> float:
    """Average cosine between the first frame's embedding and every later frame's."""
    frames = clip.frames
    if len(frames) < 2:
        raise InvalidInputError("subject consistency needs at least two frames")
    anchor = embedder.embed(frames[0])
    sims = [cosine_similarity(embedder.embed(fr), anchor) for fr in frames[1:]]
    return float(np.mean(sims))


def adherence(frames, script_context: str, prompt_context: str, judge) -> tuple[float, float]:
    """(script adherence, prompt adherence), each a 1-5 judge score."""
    frames = list(frames)
    if not frames:
        raise InvalidInputError("adherence needs at least one frame")
    script = judge.judge_frames(frames, None, ADHERENCE_RUBRIC, script_context)
    prompt = judge.judge_frames(frames, None, ADHERENCE_RUBRIC, prompt_context)
    return min(max(script, 1.0), 5.0), min(max(prompt, 1.0), 5.0)
