"""Rendering-based reward: five 1-10 grades normalized into [0, 1].

Two grade sources exist behind one interface: a remote vision-language
judge reached over HTTP with the canned prompt, and a deterministic
offline stub that scores from the layout's physics statistics. The stub
is the default; nothing in the engine requires a live endpoint.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, replace
from importlib import resources

import requests

from .physics import PhysicsReport, build_scene_graph, physics_report
from .scene import Layout, SceneTask

GRADE_FIELDS = ("realism", "functionality", "layout", "color_scheme", "aesthetic")
UNKNOWN_GRADE_VALUE = 5  # scale midpoint stands in for "unknown"
DEFAULT_COLOR_SCHEME_GRADE = 8


class JudgeError(RuntimeError):
    pass


class JudgeTransportError(JudgeError):
    pass


class JudgeResponseError(JudgeError):
    def __init__(self, message: str, body: str):
        super().__init__(f"{message}: {body[:500]}")
        self.body = body


@dataclass(frozen=True)
class JudgeGrades:
    """Five criteria grades; None encodes the judge answering "unknown"."""

    realism: int | None
    functionality: int | None
    layout: int | None
    color_scheme: int | None
    aesthetic: int | None

    def __post_init__(self):
        for name in GRADE_FIELDS:
            v = getattr(self, name)
            if v is not None and not (isinstance(v, int) and 1 <= v <= 10):
                raise ValueError(f"grade {name} must be an integer in 1..10 or None")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in GRADE_FIELDS)

    def to_dict(self) -> dict:
        return {
            name: (v if v is not None else "unknown")
            for name, v in zip(GRADE_FIELDS, self.as_tuple())
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "JudgeGrades":
        values = {}
        for name in GRADE_FIELDS:
            if name not in doc:
                raise ValueError(f"grade object missing field {name!r}")
            v = doc[name]
            if v == "unknown" or v is None:
                values[name] = None
            elif isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
                raise ValueError(f"grade {name} must be an integer or 'unknown'")
            else:
                values[name] = int(v)
        return cls(**values)


@dataclass(frozen=True)
class RenderReward:
    value: float
    grades: JudgeGrades | None
    source: str  # "stub" | "remote_judge" | "external"

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "grades": self.grades.to_dict() if self.grades is not None else None,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RenderReward":
        grades = doc.get("grades")
        return cls(
            value=float(doc["value"]),
            grades=JudgeGrades.from_dict(grades) if grades is not None else None,
            source=str(doc["source"]),
        )


@dataclass
class JudgeConfig:
    mode: str = "stub"  # "stub" | "remote"
    endpoint: str | None = None
    timeout_s: float = 10.0
    retries: int = 2
    backoff_s: float = 0.5
    api_key_env: str = "LAYOUT_JUDGE_API_KEY"
    color_scheme_grade: int | None = DEFAULT_COLOR_SCHEME_GRADE


def render_reward(grades: JudgeGrades, source: str = "stub") -> RenderReward:
    """Normalized sum of the five grades; unknown resolves to the midpoint."""
    total = sum(
        v if v is not None else UNKNOWN_GRADE_VALUE for v in grades.as_tuple()
    )
    return RenderReward(value=total / 50.0, grades=grades, source=source)


def _clamp_grade(value: float) -> int:
    return max(1, min(10, round(value)))


def stub_grades(
    collision_ratio: float,
    constraint_ratio: float,
    color_scheme_grade: int = DEFAULT_COLOR_SCHEME_GRADE,
) -> JudgeGrades:
    """Deterministic grades from physics statistics.

    Realism tracks collisions, functionality tracks constraint violations,
    layout tracks their mean; color scheme is pinned (the object set is
    fixed per task) and aesthetic averages the first three.
    """
    realism = _clamp_grade(10.0 * (1.0 - collision_ratio))
    functionality = _clamp_grade(10.0 * (1.0 - constraint_ratio))
    layout = _clamp_grade(10.0 * (1.0 - 0.5 * collision_ratio - 0.5 * constraint_ratio))
    aesthetic = _clamp_grade((realism + functionality + layout) / 3.0)
    return JudgeGrades(realism, functionality, layout, color_scheme_grade, aesthetic)


def load_prompt_template() -> str:
    return resources.files("spatialrl.data").joinpath("judge_prompt.txt").read_text()


DEFAULT_EXAMPLE_JSON = json.dumps(
    {name: "1-10 or unknown" for name in GRADE_FIELDS}
)


def build_judge_prompt(user_preference: str, example_json: str | None = None) -> str:
    template = load_prompt_template()
    return template.replace("{user_preference}", user_preference).replace(
        "{example_json}", example_json if example_json is not None else DEFAULT_EXAMPLE_JSON
    )


def _remote_query(
    image: bytes | None,
    preference: str,
    config: JudgeConfig,
    physics: PhysicsReport | None,
) -> JudgeGrades:
    if not config.endpoint:
        raise JudgeError("remote judge mode needs an endpoint URL")
    parts: list[tuple[str, tuple]] = [
        ("prompt", (None, build_judge_prompt(preference))),
    ]
    if physics is not None:
        stats = {
            "collision_ratio": physics.collision_ratio,
            "constraint_ratio": physics.constraint_ratio,
        }
        parts.append(("stats", (None, json.dumps(stats))))
    if image is not None:
        parts.append(("image", ("scene.png", image, "application/octet-stream")))
    headers = {}
    api_key = os.environ.get(config.api_key_env)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    last_error: Exception | None = None
    for attempt in range(config.retries + 1):
        try:
            response = requests.post(
                config.endpoint, files=parts, headers=headers, timeout=config.timeout_s
            )
        except requests.RequestException as exc:
            last_error = exc
        else:
            if response.status_code >= 500:
                last_error = JudgeTransportError(
                    f"judge returned {response.status_code}"
                )
            elif response.status_code >= 400:
                raise JudgeTransportError(
                    f"judge rejected the request ({response.status_code}): "
                    f"{response.text[:500]}"
                )
            else:
                try:
                    return JudgeGrades.from_dict(response.json())
                except (ValueError, KeyError, TypeError) as exc:
                    raise JudgeResponseError(
                        f"unparsable judge response ({exc})", response.text
                    ) from exc
        if attempt < config.retries:
            time.sleep(config.backoff_s * (2**attempt))
    raise JudgeTransportError(f"judge unreachable after {config.retries + 1} attempts") from last_error


def query_judge(
    image_or_layout: bytes | Layout | None,
    preference: str,
    config: JudgeConfig,
    *,
    physics: PhysicsReport | None = None,
    task: SceneTask | None = None,
) -> JudgeGrades:
    """Obtain the five grades for a scene.

    Stub mode scores deterministically from the physics statistics (passed
    directly, or derived from a layout plus its task). Remote mode posts
    the prompt, the stats, and an optional rendered image to the
    configured endpoint and parses the returned grade object.
    """
    if physics is None and isinstance(image_or_layout, Layout):
        if task is None:
            raise JudgeError("scoring a layout needs its task for physics statistics")
        graph = build_scene_graph(image_or_layout, task)
        physics = physics_report(graph)

    if config.mode == "stub":
        if physics is None:
            raise JudgeError("stub judge needs physics statistics or a layout+task")
        pin = (
            config.color_scheme_grade
            if config.color_scheme_grade is not None
            else DEFAULT_COLOR_SCHEME_GRADE
        )
        return stub_grades(physics.collision_ratio, physics.constraint_ratio, pin)
    if config.mode == "remote":
        image = image_or_layout if isinstance(image_or_layout, bytes) else None
        grades = _remote_query(image, preference, config, physics)
        if config.color_scheme_grade is not None:
            grades = replace(grades, color_scheme=config.color_scheme_grade)
        return grades
    raise JudgeError(f"unknown judge mode {config.mode!r}")
