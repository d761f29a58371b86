import json

import numpy as np
import pytest

from conftest import mock_config, read_json, schema_validator
from scenecraft.backends import BackendSet
from scenecraft.errors import IncompleteRunError, InvalidInputError
from scenecraft.evaluation import REPORT_FILE, evaluate_ablation, evaluate_run, reference_assets, scene_script_text
from scenecraft.metrics.report import ConsistencyReport
from scenecraft.orchestrator import load_blueprint, run_ablation_batch, run_pipeline


@pytest.fixture(scope="session")
def full_report(finished_run):
    return evaluate_run(finished_run)


def test_report_is_complete_and_valid(finished_run, full_report):
    doc = read_json(finished_run / REPORT_FILE)
    schema_validator("metric_report").validate(doc)
    assert ConsistencyReport.from_dict(doc) == full_report
    bp = load_blueprint(finished_run)
    assert [c.name for c in full_report.characters] == [c.name for c in bp.characters]
    for c in full_report.characters:
        assert c.computational >= 0.95
        assert c.judge == pytest.approx(10.0)
    for name in ("s_subject", "s_world", "dynamic_degree"):
        assert getattr(full_report, name) is not None
    assert full_report.motion_tier is None
    assert 0 < full_report.s_world <= 1


def test_evaluation_is_deterministic(finished_run, full_report):
    again = evaluate_run(finished_run, write=False)
    assert again == full_report


def test_sampling_width_does_not_break_reports(finished_run, full_report):
    one = evaluate_run(finished_run, frames_per_scene=1, motion=False, write=False)
    assert one.characters and all(c.computational is not None for c in one.characters)
    assert one.s_subject == full_report.s_subject
    with pytest.raises(InvalidInputError):
        evaluate_run(finished_run, frames_per_scene=0, write=False)


def test_scene_scope_averages_per_clip(tmp_path, cat_blueprint):
    run_pipeline(mock_config(tmp_path / "r", subject_scope="scene"), blueprint=cat_blueprint)
    r = evaluate_run(tmp_path / "r", motion=False, write=False)
    assert -1 <= r.s_subject <= 1


def test_incomplete_run_is_refused(tmp_path):
    run_pipeline(mock_config(tmp_path / "r"), stop_after="characters")
    with pytest.raises(IncompleteRunError) as info:
        evaluate_run(tmp_path / "r")
    assert info.value.stage == "characters"


def test_script_context():
    from scenecraft.blueprint import SceneSpec

    s = SceneSpec(0, 1.0, "a dock", "boats sway", (), "wide", (), "calm")
    assert scene_script_text(s) == "a dock. boats sway. wide"


def test_reference_assets_fill_in_missing_characters(cat_blueprint):
    b = BackendSet.mock(seed=7)
    refs = reference_assets(cat_blueprint, {}, b["t2i"])
    assert set(refs) == {"Whiskers", "Pip"}
    assert refs["Pip"].canonical == b["t2i"].synthesize_character(cat_blueprint.characters[1], cat_blueprint.art_style)


class NoMaskSegmenter:
    def segment(self, image, target):
        from scenecraft.media import Mask

        return Mask(np.zeros(image.shape, bool))


def test_withheld_scores_become_warnings(finished_run):
    b = BackendSet.mock(seed=7).replace("segmenter", NoMaskSegmenter())
    r = evaluate_run(finished_run, backends=b, motion=False, write=False)
    assert all(c.computational is None for c in r.characters)
    assert all(c.judge is not None for c in r.characters)
    assert any(w.startswith("ScenecraftWarning:") for w in r.warnings)
    assert any(w.startswith("DroppedFrameWarning:") for w in r.warnings)
    assert len(r.warnings) == len(set(r.warnings))
    json.loads(r.to_json())


def test_ablation_scores_order(tmp_path):
    run_ablation_batch(mock_config(tmp_path / "x"), tmp_path / "batch")
    reports = evaluate_ablation(tmp_path / "batch", motion=False)
    full, b1, b2 = (reports[a] for a in ("full", "no_character_viz", "no_seed_frame"))
    assert full.video_id == "batch/full"
    for cf, c1, c2 in zip(full.characters, b1.characters, b2.characters):
        assert cf.computational > c1.computational > c2.computational
        assert cf.judge >= c1.judge > c2.judge
    for name in ("full", "no_character_viz", "no_seed_frame"):
        assert (tmp_path / "batch" / name / REPORT_FILE).is_file()
