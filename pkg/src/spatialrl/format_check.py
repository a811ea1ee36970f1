"""Graded structural-validity reward over a parsed roll-out.

Five rule-based checks run in a fixed order; the first failure decides the
score: tag structure (0), JSON parsing (0.1), object count / name
alignment / coordinate validity (0.5 each), full match (1.0).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .rollout import ParseStage, ParsedRollOut, _is_coordinate_number, decode_answer_records
from .scene import SceneTask


class FailedCheck(str, Enum):
    TAG_STRUCTURE = "tag_structure"
    JSON_PARSE = "json_parse"
    OBJECT_COUNT = "object_count"
    NAME_ALIGNMENT = "name_alignment"
    COORDINATE_VALIDITY = "coordinate_validity"
    NONE = "none"


@dataclass(frozen=True)
class FormatScore:
    score: float
    failed_check: FailedCheck


def format_reward(parsed: ParsedRollOut, task: SceneTask) -> FormatScore:
    if parsed.parse_stage_reached is ParseStage.NO_TAGS:
        return FormatScore(0.0, FailedCheck.TAG_STRUCTURE)
    if parsed.parse_stage_reached is ParseStage.TAGS_ONLY:
        return FormatScore(0.1, FailedCheck.JSON_PARSE)

    records = decode_answer_records(parsed.answer_raw)
    assert records is not None  # stage >= JSON_PARSED guarantees decodable JSON

    if len(records) != len(task.objects):
        return FormatScore(0.5, FailedCheck.OBJECT_COUNT)

    ids = [
        rec.get("new_object_id") if isinstance(rec, dict) else None for rec in records
    ]
    expected = {obj.id for obj in task.objects}
    # Exact correspondence: every task object named once, nothing else,
    # no duplicates.
    if len(set(ids)) != len(ids) or set(ids) != expected:
        return FormatScore(0.5, FailedCheck.NAME_ALIGNMENT)

    for rec in records:
        for axis in ("x", "y", "z"):
            if not _is_coordinate_number(rec.get(axis)):
                return FormatScore(0.5, FailedCheck.COORDINATE_VALIDITY)

    return FormatScore(1.0, FailedCheck.NONE)
