import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import schema_validator
from scenecraft.errors import InvalidInputError
from scenecraft.metrics.report import CharacterScore, ConsistencyReport


def sample_report(**kw):
    base = dict(
        video_id="v1",
        characters=(CharacterScore("Pip", 0.9, 8.5), CharacterScore("Whiskers", None, 7.0)),
        s_subject=0.8,
        s_world=0.7,
        dynamic_degree=1.5,
        motion_tier="Medium",
        script_adherence=3.5,
        prompt_adherence=4.5,
        warnings=("DroppedFrameWarning: x",),
    )
    base.update(kw)
    return ConsistencyReport(**base)


def test_json_matches_schema_and_round_trips():
    r = sample_report()
    doc = json.loads(r.to_json())
    schema_validator("metric_report").validate(doc)
    assert ConsistencyReport.from_dict(doc) == r
    assert r.to_json().endswith("}\n")


def test_nulls_are_allowed():
    r = sample_report(s_subject=None, s_world=None, dynamic_degree=None, motion_tier=None)
    schema_validator("metric_report").validate(r.to_dict())


@pytest.mark.parametrize(
    "field,value",
    [
        ("s_world", 1.2),
        ("s_subject", -1.5),
        ("dynamic_degree", -0.1),
        ("script_adherence", 0.5),
        ("prompt_adherence", 5.5),
        ("motion_tier", "Extreme"),
        ("video_id", ""),
        ("s_world", float("nan")),
    ],
)
def test_out_of_range_fields_rejected(field, value):
    with pytest.raises(InvalidInputError):
        sample_report(**{field: value})


def test_character_scores_checked():
    with pytest.raises(InvalidInputError):
        sample_report(characters=(CharacterScore("a", 1.5, 1.0),))
    with pytest.raises(InvalidInputError):
        sample_report(characters=(CharacterScore("a", 0.5, 11.0),))


def test_schema_rejects_extra_and_missing_fields():
    validator = schema_validator("metric_report")
    doc = sample_report().to_dict()
    assert not list(validator.iter_errors(doc))
    doc["extra"] = 1
    assert list(validator.iter_errors(doc))
    doc = sample_report().to_dict()
    del doc["warnings"]
    assert list(validator.iter_errors(doc))


def test_malformed_dict():
    with pytest.raises(InvalidInputError):
        ConsistencyReport.from_dict({"video_id": "x"})


def test_lookup_and_tier():
    r = sample_report()
    assert r.character("Pip").judge == 8.5
    with pytest.raises(KeyError):
        r.character("Nobody")
    assert r.with_tier("High").motion_tier == "High"


unit = st.floats(0, 1)


@settings(max_examples=100)
@given(unit, st.floats(-1, 1), st.floats(0, 50), st.floats(1, 5), st.floats(1, 5),
       st.sampled_from([None, "Low", "Medium", "High"]))
def test_any_valid_report_validates(world, subject, degree, script, prompt, tier):
    r = sample_report(s_world=world, s_subject=subject, dynamic_degree=degree, script_adherence=script,
                      prompt_adherence=prompt, motion_tier=tier)
    doc = json.loads(r.to_json())
    schema_validator("metric_report").validate(doc)
    assert ConsistencyReport.from_dict(doc) == r
