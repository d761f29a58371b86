import json
import shutil
import warnings
from dataclasses import replace

import filelock
import numpy as np
import pytest

from conftest import load_fixture_blueprint, mock_config, read_json, tree
from scenecraft.backends import BackendSet, MockBackend
from scenecraft.errors import (
    BackendUnavailableError,
    BridgeFallbackWarning,
    CompositionError,
    ConfigError,
    CorruptedRunError,
    IncompleteRunError,
    InvalidInputError,
    PipelineError,
    RunLockedError,
)
from scenecraft.media import Clip, Image
from scenecraft.orchestrator import (
    RunConfig,
    RunState,
    SeedFrame,
    compose,
    decide_bridge,
    load_video,
    parse_yes_no,
    resume,
    run_ablation_batch,
    run_pipeline,
)


def frames(n, value=0):
    return tuple(Image(np.full((4, 4, 3), value, np.uint8)) for _ in range(n))


# -- configuration ----------------------------------------------------------------

def test_config_from_dict_and_overrides():
    cfg = RunConfig.from_dict({"ablation": "no-seed-frame", "backends": {"default": {"kind": "mock", "mock_seed": 1}}},
                              user_prompt="p", seed=5)
    assert cfg.ablation == "no_seed_frame"
    assert {c.mock_seed for c in cfg.backends.values()} == {5}
    assert cfg.resolved_bridge_policy() == "heuristic"
    assert RunConfig.from_dict(cfg.to_dict(), user_prompt="p") == replace(cfg, output_dir=None)


@pytest.mark.parametrize(
    "data",
    [
        {"frames_per_scene_sample": 0},
        {"ablation": "half"},
        {"colour": "blue"},
        {"bridge_policy": "sometimes"},
        {"backends": {"t2i": {"kind": "remote"}}},
        {"flow": {"window_size": 4}},
        {"max_scenes": 0},
    ],
)
def test_bad_config_rejected(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data, user_prompt="p")


def test_remote_scriptwriter_defaults_to_llm_bridge():
    cfg = RunConfig.from_dict({"backends": {"scriptwriter": {"kind": "remote", "endpoint": "http://x"}}},
                              user_prompt="p")
    assert cfg.resolved_bridge_policy() == "llm"


# -- a full run ---------------------------------------------------------------------

def test_run_directory_layout(finished_run):
    bp, clips = load_video(finished_run)
    files = tree(finished_run)
    for name in ("run.json", "state.json", "blueprint.json", "provenance.log", "final/manifest.json", "final/cues.json"):
        assert name in files
    for sheet in bp.characters:
        assert any(f.startswith("assets/") and sheet.name.split()[0] in f for f in files)
    for s in bp.scenes:
        assert f"seeds/scene_{s.index}.png" in files
        assert f"clips/scene_{s.index}/manifest.json" in files
        assert clips[s.index].frame_count == round(s.duration_seconds * 24)
    state = read_json(finished_run / "state.json")
    assert state["completed_stage"] == "composed"


def test_manifest_and_cues_are_cumulative(finished_run):
    bp, clips = load_video(finished_run)
    manifest = read_json(finished_run / "final/manifest.json")
    cues = read_json(finished_run / "final/cues.json")
    counts = [c.frame_count for c in clips]
    assert manifest["total_frames"] == sum(counts)
    assert [s["start_frame"] for s in manifest["scenes"]] == [sum(counts[:k]) for k in range(len(counts))]
    assert [c["start_time"] for c in cues["cues"]] == [sum(counts[:k]) / 24 for k in range(len(counts))]
    assert cues["total_duration"] == sum(counts) / 24
    assert [c["sound_effects"] for c in cues["cues"]] == [list(s.sound_effects) for s in bp.scenes]


def test_provenance_respects_stage_order(finished_run):
    entries = [json.loads(line) for line in (finished_run / "provenance.log").read_text().splitlines()]
    assert [e["seq"] for e in entries] == list(range(len(entries)))
    roles = [(e["role"], e["scene"]) for e in entries]
    first_seed = next(i for i, (r, _) in enumerate(roles) if r == "i2i")
    last_asset = max(i for i, (r, _) in enumerate(roles) if r == "t2i")
    assert last_asset < first_seed
    # the seed of scene k comes after every clip of scene k-1
    for i, (role, scene) in enumerate(roles):
        if role == "i2i" and scene > 0:
            clip_prev = max(j for j, (r, s) in enumerate(roles) if r == "i2v" and s == scene - 1)
            assert clip_prev < i


def test_bridge_uses_last_frame_of_previous_clip(tmp_path, cat_blueprint):
    calls = []

    class Spy(MockBackend):
        def synthesize_seed(self, scene, style, refs=(), prior=None, sheets=()):
            calls.append((scene.index, prior))
            return super().synthesize_seed(scene, style, refs, prior, sheets)

    backends = BackendSet.mock(seed=7).replace("i2i", Spy(7))
    cfg = mock_config(tmp_path / "r", bridge_policy="always")
    run_pipeline(cfg, blueprint=cat_blueprint, backends=backends)
    _, clips = load_video(tmp_path / "r")
    assert calls[0] == (0, None)
    for k, prior in calls[1:]:
        assert prior == clips[k - 1].frames[-1]
    state = read_json(tmp_path / "r/state.json")
    assert state["bridged"] == {"0": False, "1": True, "2": True}


def test_heuristic_bridge_follows_setting(tmp_path, cat_blueprint):
    run_pipeline(mock_config(tmp_path / "r"), blueprint=cat_blueprint)
    # scenes 0 and 1 share the alley; scene 2 moves to the rooftop
    assert read_json(tmp_path / "r/state.json")["bridged"] == {"0": False, "1": True, "2": False}


def test_two_runs_are_bit_identical(tmp_path):
    run_pipeline(mock_config(tmp_path / "a"))
    run_pipeline(mock_config(tmp_path / "b"))
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


def test_finished_run_is_left_alone(tmp_path):
    run_pipeline(mock_config(tmp_path / "a"))
    before = tree(tmp_path / "a")
    state = resume(tmp_path / "a")
    assert state.terminal and tree(tmp_path / "a") == before


@pytest.mark.parametrize("stage", ["blueprint", "characters", "scenes"])
def test_stop_and_resume_matches_uninterrupted(tmp_path, stage):
    run_pipeline(mock_config(tmp_path / "ref"))
    state = run_pipeline(mock_config(tmp_path / "cut"), stop_after=stage)
    assert state.completed_stage == stage
    with pytest.raises(IncompleteRunError):
        load_video(tmp_path / "cut")
    resume(tmp_path / "cut")
    assert tree(tmp_path / "cut") == tree(tmp_path / "ref")


class FlakyI2V(MockBackend):
    """Fails once on a given scene, as if the process died mid-scene."""

    def __init__(self, seed, fail_scene):
        super().__init__(seed)
        self.fail_scene = fail_scene

    def synthesize_clip(self, seed, scene, style, sheets=()):
        if scene.index == self.fail_scene:
            raise BackendUnavailableError("service went away")
        return super().synthesize_clip(seed, scene, style, sheets)


def test_failure_mid_scenes_resumes_from_checkpoint(tmp_path, cat_blueprint):
    run_pipeline(mock_config(tmp_path / "ref"), blueprint=cat_blueprint)
    flaky = BackendSet.mock(seed=7).replace("i2v", FlakyI2V(7, fail_scene=2))
    with pytest.raises(PipelineError) as info:
        run_pipeline(mock_config(tmp_path / "cut"), blueprint=cat_blueprint, backends=flaky)
    assert info.value.stage == "scenes" and info.value.scene_index == 2
    state = read_json(tmp_path / "cut/state.json")
    assert state["scenes_completed"] == 2
    run_pipeline(mock_config(tmp_path / "cut"), blueprint=cat_blueprint)
    assert tree(tmp_path / "cut") == tree(tmp_path / "ref")


def test_tampered_artifact_is_detected(tmp_path):
    run_pipeline(mock_config(tmp_path / "r"), stop_after="characters")
    asset = next((tmp_path / "r/assets").glob("*.png"))
    asset.write_bytes(asset.read_bytes() + b"\0")
    with pytest.raises(CorruptedRunError) as info:
        resume(tmp_path / "r")
    assert "assets/" in str(info.value)


def test_tampered_frame_is_detected(finished_run, tmp_path):
    copy = tmp_path / "copy"
    shutil.copytree(finished_run, copy)
    frame = next((copy / "clips/scene_0").glob("frame_*.png"))
    frame.write_bytes(b"not a png")
    with pytest.raises(CorruptedRunError):
        load_video(copy)


def test_config_change_refuses_to_resume(tmp_path):
    run_pipeline(mock_config(tmp_path / "r"), stop_after="blueprint")
    with pytest.raises(ConfigError):
        run_pipeline(mock_config(tmp_path / "r", frames_per_scene_sample=2))


def test_locked_run_directory(tmp_path):
    root = tmp_path / "r"
    root.mkdir()
    held = filelock.FileLock(str(root / ".lock"))
    held.acquire()
    try:
        with pytest.raises(RunLockedError):
            run_pipeline(mock_config(root))
    finally:
        held.release()


def test_output_dir_required():
    with pytest.raises(ConfigError):
        run_pipeline(RunConfig(user_prompt="p"))


# -- ablations ------------------------------------------------------------------------

def test_ablation_containment(tmp_path):
    states = run_ablation_batch(mock_config(tmp_path / "x"), tmp_path / "batch")
    assert all(s.terminal for s in states.values())
    root = tmp_path / "batch"
    assert list((root / "full/assets").glob("*.png"))
    assert list((root / "full/seeds").glob("*.png"))
    assert not (root / "no_character_viz/assets").exists()
    assert list((root / "no_character_viz/seeds").glob("*.png"))
    assert not (root / "no_seed_frame/seeds").exists()
    assert not (root / "no_seed_frame/assets").exists()
    blueprints = {(root / a / "blueprint.json").read_bytes() for a in ("full", "no_character_viz", "no_seed_frame")}
    assert len(blueprints) == 1
    shared = [json.loads(line) for line in (root / "no_seed_frame/provenance.log").read_text().splitlines()]
    assert shared[0]["role"] == "shared"
    assert not any(e["role"] == "i2i" for e in shared)


# -- bridge decisions --------------------------------------------------------------------

class Answer:
    def __init__(self, text):
        self.text = text

    def bridge_answer(self, scene, previous):
        return self.text


@pytest.mark.parametrize("text,expected", [("Yes.", True), ("no, new place", False), ("TRUE", True)])
def test_llm_bridge_answers(cat_blueprint, text, expected):
    s0, s1 = cat_blueprint.scenes[:2]
    assert decide_bridge(s1, s0, "llm", Answer(text)) is expected


def test_unparseable_bridge_answer_falls_back(cat_blueprint):
    s1, s2 = cat_blueprint.scenes[1:]
    with pytest.warns(BridgeFallbackWarning):
        assert decide_bridge(s2, s1, "llm", Answer("perhaps")) is False
    with pytest.warns(BridgeFallbackWarning):
        assert decide_bridge(cat_blueprint.scenes[1], cat_blueprint.scenes[0], "llm", Answer(None)) is True


def test_bridge_policies(cat_blueprint):
    s0, s1, s2 = cat_blueprint.scenes
    assert decide_bridge(s2, s1, "always") and not decide_bridge(s1, s0, "never")
    with pytest.raises(InvalidInputError):
        decide_bridge(s0, s0, "always")
    with pytest.raises(InvalidInputError):
        decide_bridge(s1, s0, "llm")
    assert parse_yes_no("") is None and parse_yes_no(3) is None


def test_seed_frame_invariant():
    with pytest.raises(InvalidInputError):
        SeedFrame(0, frames(1)[0], used_prior_frame=True)


# -- composition -----------------------------------------------------------------------------

def test_eight_second_scene_is_192_frames(tmp_path, cat_blueprint):
    bp = replace(cat_blueprint, scenes=(replace(cat_blueprint.scenes[0], duration_seconds=8.0),))
    bp = replace(bp, characters=bp.characters[:1])
    run_pipeline(mock_config(tmp_path / "r", max_scene_seconds=8.0), blueprint=bp)
    _, clips = load_video(tmp_path / "r")
    assert clips[0].frame_count == 192 and clips[0].fps == 24


def test_compose_sums(cat_blueprint):
    clips = [Clip(frames(n, k), 24, k) for k, n in enumerate((192, 12, 37))]
    video, cues = compose(clips, cat_blueprint.scenes)
    assert video.frame_count == 241
    assert [c.start_time for c in cues.cues] == [0.0, 8.0, 8.5]
    assert [c.end_time for c in cues.cues] == [8.0, 8.5, 241 / 24]
    assert cues.total_duration == 241 / 24
    assert video.frames[192] == clips[1].frames[0]


def test_compose_accepts_any_clip_order(cat_blueprint):
    clips = [Clip(frames(n, k), 24, k) for k, n in enumerate((3, 4, 5))]
    video, _ = compose(list(reversed(clips)), cat_blueprint.scenes)
    assert video.frames[0] == clips[0].frames[0]


def test_compose_errors(cat_blueprint):
    clips = [Clip(frames(2), 24, k) for k in range(3)]
    with pytest.raises(CompositionError):
        compose(clips[:2], cat_blueprint.scenes)
    with pytest.raises(CompositionError):
        compose([clips[0], clips[0], clips[2]], cat_blueprint.scenes)
    gap = (cat_blueprint.scenes[0], cat_blueprint.scenes[1], replace(cat_blueprint.scenes[2], index=3))
    with pytest.raises(CompositionError):
        compose(clips, gap)
    with pytest.raises(CompositionError):
        compose([clips[0], clips[1], Clip(frames(2), 30, 2)], cat_blueprint.scenes)


def test_run_state_round_trip():
    s = RunState("scenes", 3, 2, {"a": "b"}, {1: True}, 7)
    assert RunState.from_dict(json.loads(json.dumps(s.to_dict()))) == s
    assert RunState("characters", 3, 1).describe() == "scenes(1 of 3)"
    with pytest.raises(CorruptedRunError):
        RunState.from_dict({"completed_stage": "painting"})


def test_warning_free_mock_run(tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        run_pipeline(mock_config(tmp_path / "r"), blueprint=load_fixture_blueprint())
