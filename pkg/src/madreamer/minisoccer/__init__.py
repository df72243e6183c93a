"""2D kinematic soccer benchmark: dynamics, laser sensing, observations."""

from .laser import (
    LASER_FEATURE_WIDTH,
    LaserScan,
    laser_features,
    laser_scan,
    ray_angles,
)
from .observations import (
    AgentObs,
    comm_input_width,
    field_feature_width,
    field_features,
    field_features_batch,
    field_features_from_raw,
    incoming_comm,
    observe,
    proprio_features,
    stream_widths,
)
from .tasks import RewardCoeffs, TaskSpec, make_task, with_comm
from .world import (
    PhysAction,
    WorldState,
    decode_global_state,
    global_state,
    global_state_width,
    mirror_action,
    mirror_x,
    reset,
    reward,
    speaker_observation,
    step,
    swap_players,
    wrap_angle,
)

__all__ = [
    "TaskSpec",
    "RewardCoeffs",
    "make_task",
    "with_comm",
    "WorldState",
    "PhysAction",
    "reset",
    "step",
    "reward",
    "global_state",
    "decode_global_state",
    "global_state_width",
    "speaker_observation",
    "mirror_x",
    "mirror_action",
    "swap_players",
    "wrap_angle",
    "LaserScan",
    "laser_scan",
    "laser_features",
    "ray_angles",
    "LASER_FEATURE_WIDTH",
    "AgentObs",
    "observe",
    "field_features",
    "field_features_batch",
    "field_features_from_raw",
    "field_feature_width",
    "proprio_features",
    "stream_widths",
    "incoming_comm",
    "comm_input_width",
]
