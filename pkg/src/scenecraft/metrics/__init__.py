"""Consistency, adherence and motion metrics."""
from .flow import FlowField, FlowParams, farneback_flow
from .motion import (
    TIERS,
    TrackRecord,
    classify_motion_tiers,
    clip_flows,
    dynamic_degree,
    track_grid,
    world_consistency,
)
from .report import CharacterScore, ConsistencyReport
from .similarity import (
    adherence,
    character_consistency,
    cosine_similarity,
    cross_scene_mean,
    judge_character_consistency,
    subject_consistency,
)

__all__ = [
    "CharacterScore",
    "ConsistencyReport",
    "FlowField",
    "FlowParams",
    "TIERS",
    "TrackRecord",
    "adherence",
    "character_consistency",
    "classify_motion_tiers",
    "clip_flows",
    "cosine_similarity",
    "cross_scene_mean",
    "dynamic_degree",
    "farneback_flow",
    "judge_character_consistency",
    "subject_consistency",
    "track_grid",
    "world_consistency",
]
