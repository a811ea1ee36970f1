"""Scene domain model: rooms, object inventories, placements, derived boxes.

Coordinates are metres. A placement's (x, y, z) is the centroid of the
object's axis-aligned bounding box, with z vertical. The valid room
interior is [0, length] x [0, width] x [0, height] with the origin at a
floor corner.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path


PLACEMENT_CLASSES = ("floor", "surface", "wall_mounted", "ceiling")


class SchemaError(ValueError):
    """An on-disk document violates its schema. Carries the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class RoomSpec:
    length_m: float
    width_m: float
    height_m: float
    layout_elements: tuple[str, ...] = ()

    def __post_init__(self):
        if not (self.length_m > 0 and self.width_m > 0 and self.height_m > 0):
            raise ValueError("room dimensions must be positive")


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    category: str
    size_m: tuple[float, float, float]
    material: str = ""
    style: str = ""
    placement_class: str = "floor"

    def __post_init__(self):
        if len(self.size_m) != 3 or min(self.size_m) <= 0:
            raise ValueError(f"object {self.id!r}: size_m must be three positive extents")
        if self.placement_class not in PLACEMENT_CLASSES:
            raise ValueError(
                f"object {self.id!r}: placement_class {self.placement_class!r} "
                f"not one of {PLACEMENT_CLASSES}"
            )


@dataclass(frozen=True)
class Placement:
    object_id: str
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"placement {self.object_id!r}: coordinates must be finite")


@dataclass(frozen=True)
class Layout:
    placements: tuple[Placement, ...]


@dataclass(frozen=True)
class SceneTask:
    room: RoomSpec
    objects: tuple[ObjectSpec, ...]
    user_preference: str = ""
    task_id: str = "task"

    def __post_init__(self):
        if not self.objects:
            raise ValueError("a task needs at least one object")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique within a task")

    def object_by_id(self, object_id: str) -> ObjectSpec:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)


@dataclass(frozen=True)
class Aabb:
    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        if any(lo > hi for lo, hi in zip(self.min, self.max)):
            raise ValueError("aabb min must not exceed max")

    @property
    def center(self) -> tuple[float, float, float]:
        return tuple((lo + hi) / 2.0 for lo, hi in zip(self.min, self.max))


def aabb_of(spec: ObjectSpec, placement: Placement) -> Aabb:
    """Box of `spec` placed with its centroid at the placement coordinates."""
    if spec.id != placement.object_id:
        raise ValueError(
            f"placement {placement.object_id!r} does not belong to object {spec.id!r}"
        )
    dx, dy, dz = spec.size_m
    return Aabb(
        min=(placement.x - dx / 2.0, placement.y - dy / 2.0, placement.z - dz / 2.0),
        max=(placement.x + dx / 2.0, placement.y + dy / 2.0, placement.z + dz / 2.0),
    )


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise SchemaError(f"{path}.{key}" if path else key, "missing required field")
    return doc[key]


def _positive_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {type(value).__name__}")
    if not math.isfinite(value) or value <= 0:
        raise SchemaError(path, "must be a positive finite number")
    return float(value)


def task_from_dict(doc: dict, default_id: str = "task") -> SceneTask:
    """Decode the canonical task document; raises SchemaError naming bad fields."""
    if not isinstance(doc, dict):
        raise SchemaError("", "task document must be a JSON object")
    room_doc = _require(doc, "room", "")
    if not isinstance(room_doc, dict):
        raise SchemaError("room", "must be an object with x, y, z extents")
    room = RoomSpec(
        length_m=_positive_number(_require(room_doc, "x", "room"), "room.x"),
        width_m=_positive_number(_require(room_doc, "y", "room"), "room.y"),
        height_m=_positive_number(_require(room_doc, "z", "room"), "room.z"),
        layout_elements=tuple(room_doc.get("layout_elements", ())),
    )
    objects_doc = _require(doc, "objects", "")
    if not isinstance(objects_doc, list) or not objects_doc:
        raise SchemaError("objects", "must be a non-empty array")
    objects = []
    for idx, obj in enumerate(objects_doc):
        path = f"objects[{idx}]"
        if not isinstance(obj, dict):
            raise SchemaError(path, "must be an object")
        size = _require(obj, "size_m", path)
        if not isinstance(size, list) or len(size) != 3:
            raise SchemaError(f"{path}.size_m", "must be an array of three extents")
        oid = _require(obj, "id", path)
        if not isinstance(oid, str) or not oid:
            raise SchemaError(f"{path}.id", "must be a non-empty string")
        placement_class = obj.get("placement_class", "floor")
        if placement_class not in PLACEMENT_CLASSES:
            raise SchemaError(f"{path}.placement_class", f"must be one of {PLACEMENT_CLASSES}")
        objects.append(
            ObjectSpec(
                id=oid,
                category=str(obj.get("category", "")),
                size_m=tuple(
                    _positive_number(size[k], f"{path}.size_m[{k}]") for k in range(3)
                ),
                material=str(obj.get("material", "")),
                style=str(obj.get("style", "")),
                placement_class=placement_class,
            )
        )
    ids = [o.id for o in objects]
    for idx, oid in enumerate(ids):
        if ids.index(oid) != idx:
            raise SchemaError(f"objects[{idx}].id", f"duplicate object id {oid!r}")
    return SceneTask(
        room=room,
        objects=tuple(objects),
        user_preference=str(doc.get("user_preference", "")),
        task_id=str(doc.get("task_id", default_id)),
    )


def task_to_dict(task: SceneTask) -> dict:
    return {
        "task_id": task.task_id,
        "room": {
            "x": task.room.length_m,
            "y": task.room.width_m,
            "z": task.room.height_m,
            "layout_elements": list(task.room.layout_elements),
        },
        "objects": [
            {
                "id": o.id,
                "category": o.category,
                "size_m": list(o.size_m),
                "material": o.material,
                "style": o.style,
                "placement_class": o.placement_class,
            }
            for o in task.objects
        ],
        "user_preference": task.user_preference,
    }


def load_task(path: str | Path) -> SceneTask:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), f"not valid JSON ({exc})") from exc
    return task_from_dict(doc, default_id=path.stem)
