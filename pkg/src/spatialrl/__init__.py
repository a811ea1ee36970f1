"""Reward stack, refinement rollouts, and coordinate-masked group-relative
policy optimization for 3D room layout generation."""

__version__ = "0.1.0"

from .scene import (  # noqa: F401
    Aabb,
    Layout,
    ObjectSpec,
    Placement,
    RoomSpec,
    SceneTask,
    SchemaError,
    aabb_of,
    load_task,
    task_from_dict,
)
from .rollout import ParseStage, ParsedRollOut, TokenRecord, parse_rollout  # noqa: F401
from .format_check import FailedCheck, FormatScore, format_reward  # noqa: F401
from .physics import (  # noqa: F401
    PhysicsReport,
    SceneGraph,
    ViolationKind,
    build_scene_graph,
    check_constraints,
    physics_report,
)
from .judge import JudgeConfig, JudgeGrades, RenderReward, query_judge, render_reward  # noqa: F401
from .config import EngineConfig, RewardWeights, StageSchedule, load_config  # noqa: F401
from .trajectory import (  # noqa: F401
    FeedbackRecord,
    RewardBreakdown,
    StagedWeights,
    Trajectory,
    TrajectoryGroup,
    Turn,
    discounted_total,
    run_group,
    run_trajectory,
    score_rollout,
    total_reward,
)
from .advantage import (  # noqa: F401
    AdvantageSet,
    CoordLabel,
    CoordMask,
    compute_group_advantages,
    coord_mask,
    modulate_rewards,
    normalize_group,
    surrogate_objective,
)
from .policy import GridPolicy, GridPolicyParams, logprob_grad, train  # noqa: F401
