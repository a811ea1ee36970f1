"""Scene-graph construction, collision detection, and the physics reward.

Collision means strictly positive overlap volume; exact face contact is
legal. Constraint violations cover leaving the room box and floating
without support. Ratios are object-denominated, so the reward is
-alpha * collision_ratio - beta * constraint_ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

from .scene import Aabb, Layout, ObjectSpec, Placement, RoomSpec, SceneTask, aabb_of

DEFAULT_ALPHA = 0.2
DEFAULT_BETA = 0.2
DEFAULT_TAU_BOUND = 1e-3   # 1 mm slack on room faces
DEFAULT_TAU_SUPPORT = 0.05  # 5 cm support gap


class ViolationKind(str, Enum):
    OUT_OF_BOUNDS = "out_of_bounds"
    FLOATING = "floating"


class SceneNode(NamedTuple):
    spec: ObjectSpec
    placement: Placement
    box: Aabb


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[SceneNode, ...]
    collision_edges: frozenset[tuple[str, str]]
    violations: dict[str, frozenset[ViolationKind]]

    def colliding_ids(self) -> set[str]:
        return {oid for edge in self.collision_edges for oid in edge}

    def violating_ids(self) -> set[str]:
        return {oid for oid, kinds in self.violations.items() if kinds}


@dataclass(frozen=True)
class PhysicsReport:
    collision_ratio: float
    constraint_ratio: float
    physics_reward: float
    per_object_penalty: dict[str, float]

    @classmethod
    def from_ratios(
        cls,
        collision_ratio: float,
        constraint_ratio: float,
        alpha: float = DEFAULT_ALPHA,
        beta: float = DEFAULT_BETA,
        per_object_penalty: dict[str, float] | None = None,
    ) -> "PhysicsReport":
        return cls(
            collision_ratio=float(collision_ratio),
            constraint_ratio=float(constraint_ratio),
            physics_reward=-alpha * collision_ratio - beta * constraint_ratio,
            per_object_penalty=dict(per_object_penalty or {}),
        )

    def to_dict(self) -> dict:
        return {
            "collision_ratio": float(self.collision_ratio),
            "constraint_ratio": float(self.constraint_ratio),
            "physics_reward": float(self.physics_reward),
            "per_object_penalty": {k: float(v) for k, v in self.per_object_penalty.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PhysicsReport":
        return cls(
            collision_ratio=float(doc["collision_ratio"]),
            constraint_ratio=float(doc["constraint_ratio"]),
            physics_reward=float(doc["physics_reward"]),
            per_object_penalty={k: float(v) for k, v in doc["per_object_penalty"].items()},
        )


def aabbs_overlap_strictly(a: Aabb, b: Aabb) -> bool:
    return all(a.min[k] < b.max[k] and b.min[k] < a.max[k] for k in range(3))


def _horizontal_overlap(a: Aabb, b: Aabb) -> bool:
    return all(a.min[k] < b.max[k] and b.min[k] < a.max[k] for k in range(2))


def check_constraints(
    node: SceneNode,
    room: RoomSpec,
    support_candidates: Sequence[Aabb],
    *,
    tau_bound: float = DEFAULT_TAU_BOUND,
    tau_support: float = DEFAULT_TAU_SUPPORT,
) -> set[ViolationKind]:
    violations: set[ViolationKind] = set()
    box = node.box
    bounds = ((0.0, room.length_m), (0.0, room.width_m), (0.0, room.height_m))
    for k, (lo, hi) in enumerate(bounds):
        if box.min[k] < lo - tau_bound or box.max[k] > hi + tau_bound:
            violations.add(ViolationKind.OUT_OF_BOUNDS)
            break

    placement_class = node.spec.placement_class
    if placement_class == "floor":
        if box.min[2] > tau_support:
            violations.add(ViolationKind.FLOATING)
    elif placement_class == "surface":
        supported = any(
            0.0 <= box.min[2] - cand.max[2] <= tau_support and _horizontal_overlap(box, cand)
            for cand in support_candidates
        )
        if not supported:
            violations.add(ViolationKind.FLOATING)
    # wall_mounted and ceiling objects are exempt from the floating rule
    return violations


def build_scene_graph(
    layout: Layout,
    task: SceneTask,
    *,
    tau_bound: float = DEFAULT_TAU_BOUND,
    tau_support: float = DEFAULT_TAU_SUPPORT,
) -> SceneGraph:
    """Resolve placements against the task inventory and derive collisions
    and constraint violations. Unknown or duplicated placement ids raise;
    callers are expected to gate on the format reward first.
    """
    specs = {obj.id: obj for obj in task.objects}
    nodes: list[SceneNode] = []
    seen: set[str] = set()
    for placement in layout.placements:
        spec = specs.get(placement.object_id)
        if spec is None:
            raise ValueError(f"layout places unknown object id {placement.object_id!r}")
        if placement.object_id in seen:
            raise ValueError(f"layout places object id {placement.object_id!r} twice")
        seen.add(placement.object_id)
        nodes.append(SceneNode(spec, placement, aabb_of(spec, placement)))

    edges: set[tuple[str, str]] = set()
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if aabbs_overlap_strictly(nodes[i].box, nodes[j].box):
                edges.add(tuple(sorted((nodes[i].spec.id, nodes[j].spec.id))))

    violations: dict[str, frozenset[ViolationKind]] = {}
    for i, node in enumerate(nodes):
        others = [n.box for j, n in enumerate(nodes) if j != i]
        kinds = check_constraints(
            node, task.room, others, tau_bound=tau_bound, tau_support=tau_support
        )
        if kinds:
            violations[node.spec.id] = frozenset(kinds)

    return SceneGraph(tuple(nodes), frozenset(edges), violations)


def physics_report(
    graph: SceneGraph, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA
) -> PhysicsReport:
    n = len(graph.nodes)
    if n == 0:
        raise ValueError("physics report over an empty scene graph")
    colliding = graph.colliding_ids()
    violating = graph.violating_ids()
    collision_ratio = len(colliding) / n
    constraint_ratio = len(violating) / n
    penalties = {
        node.spec.id: 0.5 * (node.spec.id in colliding) + 0.5 * (node.spec.id in violating)
        for node in graph.nodes
    }
    return PhysicsReport(
        collision_ratio=collision_ratio,
        constraint_ratio=constraint_ratio,
        physics_reward=-alpha * collision_ratio - beta * constraint_ratio,
        per_object_penalty=penalties,
    )


def worst_case_report(
    task: SceneTask, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA
) -> PhysicsReport:
    """Physics term for roll-outs with no scoreable layout: every object is
    treated as colliding and violating. Keeps the total reward monotone in
    output quality when the layout cannot be checked at all.
    """
    return PhysicsReport(
        collision_ratio=1.0,
        constraint_ratio=1.0,
        physics_reward=-alpha - beta,
        per_object_penalty={obj.id: 1.0 for obj in task.objects},
    )
