import json

from hypothesis import given, strategies as st

from spatialrl.rollout import (
    ParseStage,
    coordinate_value_spans,
    decode_answer_records,
    find_answer_span,
    parse_rollout,
    serialize_rollout,
)

SOFA = '{"new_object_id":"sectional_sofa_1","x":1.0,"y":1.82,"z":0.45}'


def test_parses_the_canonical_rollout():
    parsed = parse_rollout(f"<think>plan</think><answer>[{SOFA}]</answer>")
    assert parsed.parse_stage_reached is ParseStage.LAYOUT_EXTRACTED
    assert parsed.think == "plan"
    placement = parsed.layout.placements[0]
    assert placement.object_id == "sectional_sofa_1"
    assert (placement.x, placement.y, placement.z) == (1.0, 1.82, 0.45)


def test_empty_input_reaches_no_tags():
    parsed = parse_rollout("")
    assert parsed.parse_stage_reached is ParseStage.NO_TAGS
    assert parsed.layout is None


def test_bad_json_reaches_tags_only():
    parsed = parse_rollout("<think>t</think><answer>{not json}</answer>")
    assert parsed.parse_stage_reached is ParseStage.TAGS_ONLY
    assert parsed.answer_raw == "{not json}"
    assert parsed.layout is None


def test_answer_may_be_a_single_object():
    parsed = parse_rollout(f"<think>t</think><answer>{SOFA}</answer>")
    assert parsed.parse_stage_reached is ParseStage.LAYOUT_EXTRACTED
    assert len(parsed.layout.placements) == 1


def test_answer_tolerates_surrounding_whitespace():
    parsed = parse_rollout(f"<think>t</think>\n<answer>\n  [{SOFA}]\n</answer>\n")
    assert parsed.parse_stage_reached is ParseStage.LAYOUT_EXTRACTED


def test_tag_matching_is_case_sensitive():
    parsed = parse_rollout(f"<THINK>t</THINK><answer>[{SOFA}]</answer>")
    assert parsed.parse_stage_reached is ParseStage.NO_TAGS


def test_answer_before_think_fails_tag_structure():
    parsed = parse_rollout(f"<answer>[{SOFA}]</answer><think>t</think>")
    assert parsed.parse_stage_reached is ParseStage.NO_TAGS


def test_only_first_pair_counts():
    text = f"<think>a</think><answer>[{SOFA}]</answer><answer>junk</answer>"
    parsed = parse_rollout(text)
    assert parsed.parse_stage_reached is ParseStage.LAYOUT_EXTRACTED
    assert parsed.think == "a"


def test_record_missing_axis_stops_at_json_parsed():
    parsed = parse_rollout('<think>t</think><answer>{"new_object_id":"a","x":1,"y":2}</answer>')
    assert parsed.parse_stage_reached is ParseStage.JSON_PARSED
    assert parsed.layout is None


def test_nan_coordinate_stops_at_json_parsed():
    parsed = parse_rollout('<think>t</think><answer>{"new_object_id":"a","x":NaN,"y":2,"z":3}</answer>')
    assert parsed.parse_stage_reached is ParseStage.JSON_PARSED


def test_empty_array_stops_at_json_parsed():
    parsed = parse_rollout("<think>t</think><answer>[]</answer>")
    assert parsed.parse_stage_reached is ParseStage.JSON_PARSED
    assert parsed.layout is None


def test_scalar_answer_decodes_to_zero_records():
    assert decode_answer_records("42") == []
    assert decode_answer_records("nonsense") is None


@given(st.text(max_size=300))
def test_parse_rollout_is_total(text):
    parsed = parse_rollout(text)
    assert parsed.raw_text == text
    if parsed.layout is not None:
        assert parsed.parse_stage_reached is ParseStage.LAYOUT_EXTRACTED
        assert parsed.layout.placements


@given(
    st.text(max_size=80).filter(lambda s: "</think>" not in s and "<think>" not in s),
    st.text(max_size=80).filter(
        lambda s: "</answer>" not in s and "<answer>" not in s and "<think>" not in s
    ),
)
def test_serialize_then_parse_round_trips(think, answer):
    parsed = parse_rollout(serialize_rollout(think, answer))
    assert parsed.think == think
    assert parsed.answer_raw == answer


def test_find_answer_span_matches_content():
    raw = f"<think>t</think><answer>[{SOFA}]</answer>"
    start, end = find_answer_span(raw)
    assert raw[start:end] == f"[{SOFA}]"


class TestCoordinateValueSpans:
    def test_spans_cover_the_literals(self):
        text = '[{"new_object_id": "a", "x": 1.25, "y": -2.5e1, "z": 0.5}]'
        (record,) = coordinate_value_spans(text)
        assert record.object_id == "a"
        assert text[slice(*record.spans["x"])] == "1.25"
        assert text[slice(*record.spans["y"])] == "-2.5e1"
        assert text[slice(*record.spans["z"])] == "0.5"

    def test_single_object_answer(self):
        text = '{"x": 3, "new_object_id": "b", "y": 4, "z": 5}'
        (record,) = coordinate_value_spans(text)
        assert record.object_id == "b"
        assert text[slice(*record.spans["x"])] == "3"

    def test_nested_structures_are_not_collected(self):
        text = '[{"new_object_id": "a", "meta": {"x": 9}, "x": 1, "y": 2, "z": 3}]'
        (record,) = coordinate_value_spans(text)
        assert text[slice(*record.spans["x"])] == "1"

    def test_string_coordinates_are_ignored(self):
        text = '[{"new_object_id": "a", "x": "high", "y": 2, "z": 3}]'
        (record,) = coordinate_value_spans(text)
        assert "x" not in record.spans
        assert "y" in record.spans

    def test_key_lookalikes_inside_strings_do_not_confuse(self):
        text = '[{"new_object_id": "a \\" tricky", "note": "\\"x\\": 9", "x": 7, "y": 8, "z": 9}]'
        json.loads(text)
        (record,) = coordinate_value_spans(text)
        assert text[slice(*record.spans["x"])] == "7"

    def test_multiple_records_in_order(self):
        text = '[{"new_object_id":"a","x":1,"y":2,"z":3},{"new_object_id":"b","x":4,"y":5,"z":6}]'
        records = coordinate_value_spans(text)
        assert [r.object_id for r in records] == ["a", "b"]
        assert text[slice(*records[1].spans["x"])] == "4"
