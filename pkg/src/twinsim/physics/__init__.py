from twinsim.physics.engine import (
    apply_wrench,
    backend_name,
    clamp_to_plane,
    ee_position,
    set_joint_target,
    step,
)
from twinsim.physics.scene import (
    DEFAULT_CONFIG,
    assemble_model,
    build_model,
    build_scene,
    make_world,
    merge_config,
    scene_digest,
    set_tblock_pose,
)
from twinsim.physics.state import (
    Body,
    JointSpec,
    PhysicsError,
    Pose,
    RobotModel,
    RobotState,
    SceneConstructionError,
    SceneModel,
    SimulationDivergedError,
    UnknownBodyError,
    WorldState,
)

__all__ = [
    "apply_wrench",
    "backend_name",
    "clamp_to_plane",
    "ee_position",
    "set_joint_target",
    "step",
    "DEFAULT_CONFIG",
    "assemble_model",
    "build_model",
    "build_scene",
    "make_world",
    "merge_config",
    "scene_digest",
    "set_tblock_pose",
    "Body",
    "JointSpec",
    "PhysicsError",
    "Pose",
    "RobotModel",
    "RobotState",
    "SceneConstructionError",
    "SceneModel",
    "SimulationDivergedError",
    "UnknownBodyError",
    "WorldState",
]
