"""Roll-out text handling: tag extraction, answer decoding, literal spans.

A roll-out is one model emission: free-form reasoning wrapped in
``<think>...</think>`` followed by a JSON layout wrapped in
``<answer>...</answer>``. Parsing never fails; how far it got is encoded
in the parse stage.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum

from .scene import Layout, Placement

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
ANSWER_OPEN = "<answer>"
ANSWER_CLOSE = "</answer>"


class ParseStage(str, Enum):
    NO_TAGS = "no_tags"
    TAGS_ONLY = "tags_only"
    JSON_PARSED = "json_parsed"
    LAYOUT_EXTRACTED = "layout_extracted"


@dataclass(frozen=True)
class ParsedRollOut:
    raw_text: str
    think: str | None
    answer_raw: str | None
    layout: Layout | None
    parse_stage_reached: ParseStage


@dataclass(frozen=True)
class TokenRecord:
    """One output token: its span in the roll-out text and its log-probabilities
    under the current, behavior, and reference policy snapshots.

    Within a trajectory, spans are offsets into the concatenation of all
    turn texts. ``meta`` is optional policy-private data (the toy policy
    stores its categorical bookkeeping there); consumers of the advantage
    math ignore it.
    """

    index: int
    span: tuple[int, int]
    logprob_new: float | None
    logprob_old: float | None
    logprob_ref: float | None
    meta: dict | None = None


def _find_tag_block(text: str, open_tag: str, close_tag: str, start: int) -> tuple[int, int] | None:
    """Content span of the first properly paired tag block at or after `start`."""
    t0 = text.find(open_tag, start)
    if t0 == -1:
        return None
    t1 = text.find(close_tag, t0 + len(open_tag))
    if t1 == -1:
        return None
    return (t0 + len(open_tag), t1)


def find_answer_span(raw_text: str) -> tuple[int, int] | None:
    """Content span of the answer block when the tag structure holds."""
    think = _find_tag_block(raw_text, THINK_OPEN, THINK_CLOSE, 0)
    if think is None:
        return None
    return _find_tag_block(raw_text, ANSWER_OPEN, ANSWER_CLOSE, think[1] + len(THINK_CLOSE))


def _is_coordinate_number(value) -> bool:
    return (
        isinstance(value, (int, float))
        and not isinstance(value, bool)
        and math.isfinite(value)
    )


def decode_answer_records(answer_raw: str) -> list | None:
    """Decode the answer into a list of raw placement records.

    A single JSON object counts as one record; a scalar decodes to zero
    records. Returns None when the text is not JSON at all.
    """
    try:
        data = json.loads(answer_raw)
    except (ValueError, RecursionError):
        return None
    if isinstance(data, dict):
        return [data]
    if isinstance(data, list):
        return data
    return []


def _extract_layout(records: list) -> Layout | None:
    if not records:
        return None
    placements = []
    for rec in records:
        if not isinstance(rec, dict):
            return None
        oid = rec.get("new_object_id")
        if not isinstance(oid, str):
            return None
        coords = []
        for axis in ("x", "y", "z"):
            v = rec.get(axis)
            if not _is_coordinate_number(v):
                return None
            coords.append(float(v))
        placements.append(Placement(oid, *coords))
    return Layout(tuple(placements))


def parse_rollout(raw_text: str) -> ParsedRollOut:
    """Total parse of a roll-out; malformations land in parse_stage_reached.

    Tag matching is case-sensitive; only the first think block and the
    first answer block after it are considered.
    """
    think_span = _find_tag_block(raw_text, THINK_OPEN, THINK_CLOSE, 0)
    think = raw_text[think_span[0]:think_span[1]] if think_span else None
    answer_span = None
    if think_span is not None:
        answer_span = _find_tag_block(
            raw_text, ANSWER_OPEN, ANSWER_CLOSE, think_span[1] + len(THINK_CLOSE)
        )
    if answer_span is None:
        return ParsedRollOut(raw_text, think, None, None, ParseStage.NO_TAGS)
    answer_raw = raw_text[answer_span[0]:answer_span[1]]
    records = decode_answer_records(answer_raw)
    if records is None:
        return ParsedRollOut(raw_text, think, answer_raw, None, ParseStage.TAGS_ONLY)
    layout = _extract_layout(records)
    stage = ParseStage.LAYOUT_EXTRACTED if layout is not None else ParseStage.JSON_PARSED
    return ParsedRollOut(raw_text, think, answer_raw, layout, stage)


def serialize_rollout(think: str, answer: str) -> str:
    return f"{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}"


# --- coordinate literal spans ------------------------------------------------
#
# The masking step needs the exact character ranges of the x/y/z number
# literals inside the answer text. json.loads gives no positions, so a small
# scanner walks the (already-validated) JSON and records value spans for the
# relevant keys of each top-level record.

_WS = " \t\n\r"
_ATOM_END = set(_WS) | {",", "]", "}"}
_NUMBER_RE = re.compile(r"-?(?:0|[1-9]\d*)(?:\.\d+)?(?:[eE][-+]?\d+)?\Z")


@dataclass
class RecordSpans:
    object_id: str | None = None
    spans: dict[str, tuple[int, int]] = field(default_factory=dict)


def _skip_ws(s: str, i: int) -> int:
    n = len(s)
    while i < n and s[i] in _WS:
        i += 1
    return i


def _scan_string(s: str, i: int) -> int:
    j = i + 1
    n = len(s)
    while j < n:
        c = s[j]
        if c == "\\":
            j += 2
            continue
        if c == '"':
            return j + 1
        j += 1
    return n


def _scan_atom(s: str, i: int) -> int:
    j = i
    n = len(s)
    while j < n and s[j] not in _ATOM_END:
        j += 1
    return j


def _scan_value(s: str, i: int) -> int:
    c = s[i]
    if c == "{":
        return _scan_object(s, i, None)
    if c == "[":
        return _scan_array(s, i)
    if c == '"':
        return _scan_string(s, i)
    return _scan_atom(s, i)


def _scan_array(s: str, i: int) -> int:
    i = _skip_ws(s, i + 1)
    n = len(s)
    if i < n and s[i] == "]":
        return i + 1
    while i < n:
        i = _skip_ws(s, _scan_value(s, i))
        if i >= n:
            return i
        if s[i] == ",":
            i = _skip_ws(s, i + 1)
            continue
        if s[i] == "]":
            return i + 1
        return i
    return i


def _scan_object(s: str, i: int, collector: RecordSpans | None) -> int:
    i = _skip_ws(s, i + 1)
    n = len(s)
    while i < n:
        if s[i] == "}":
            return i + 1
        if s[i] != '"':
            return i
        key_start = i
        key_end = _scan_string(s, i)
        i = _skip_ws(s, key_end)
        if i >= n or s[i] != ":":
            return i
        i = _skip_ws(s, i + 1)
        if i >= n:
            return i
        v_start = i
        v_end = _scan_value(s, i)
        if collector is not None:
            try:
                key = json.loads(s[key_start:key_end])
            except ValueError:
                key = None
            chunk = s[v_start:v_end]
            if key in ("x", "y", "z") and _NUMBER_RE.match(chunk):
                collector.spans[key] = (v_start, v_end)
            elif key == "new_object_id" and chunk.startswith('"'):
                try:
                    collector.object_id = json.loads(chunk)
                except ValueError:
                    pass
        i = _skip_ws(s, v_end)
        if i >= n:
            return i
        if s[i] == ",":
            i = _skip_ws(s, i + 1)
            continue
        if s[i] == "}":
            return i + 1
        return i
    return i


def coordinate_value_spans(answer_text: str) -> list[RecordSpans]:
    """Per-record spans of the numeric x/y/z literals, in document order.

    Only the records' own top-level keys are collected; nested structures
    are skipped. Spans are relative to `answer_text`.
    """
    s = answer_text
    i = _skip_ws(s, 0)
    records: list[RecordSpans] = []
    if i >= len(s):
        return records
    if s[i] == "{":
        rec = RecordSpans()
        _scan_object(s, i, rec)
        records.append(rec)
        return records
    if s[i] != "[":
        return records
    i = _skip_ws(s, i + 1)
    while i < len(s) and s[i] != "]":
        if s[i] == "{":
            rec = RecordSpans()
            i = _scan_object(s, i, rec)
            records.append(rec)
        else:
            i = _scan_value(s, i)
            records.append(RecordSpans())
        i = _skip_ws(s, i)
        if i < len(s) and s[i] == ",":
            i = _skip_ws(s, i + 1)
        else:
            break
    return records
