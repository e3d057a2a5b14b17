"""Flow-matching policy stack: hand-rolled differentiable net, conditional
flow-matching training with Adam, Euler-integration sampling, and binary
checkpoints."""

from .nn import (
    PolicyError,
    TrainingDivergedError,
    flat_grads,
    flat_params,
    param_count,
    set_flat_params,
    zero_grads,
)
from .model import (
    CAMERA_KINDS,
    DEFAULT_HORIZON,
    DEFAULT_WAYPOINTS,
    EULER_STEPS,
    IMAGE_FEAT,
    KINDS,
    ActionTrajectory,
    ImageEncoder,
    ObservationVector,
    Policy,
    VelocityFieldNet,
    cfm_loss,
    encode_observation,
    image_to_float,
    make_policy,
    sample_trajectory,
    tau_embedding,
)
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    checkpoint_from_policy,
    load_checkpoint,
    policy_from_checkpoint,
    save_checkpoint,
)
from .train import (
    DEFAULT_SCHEDULE,
    ArrayDataset,
    TrainConfig,
    TrainResult,
    train,
)

__all__ = [
    "ActionTrajectory",
    "ArrayDataset",
    "CAMERA_KINDS",
    "Checkpoint",
    "CheckpointError",
    "DEFAULT_HORIZON",
    "DEFAULT_SCHEDULE",
    "DEFAULT_WAYPOINTS",
    "EULER_STEPS",
    "IMAGE_FEAT",
    "ImageEncoder",
    "KINDS",
    "ObservationVector",
    "Policy",
    "PolicyError",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "VelocityFieldNet",
    "cfm_loss",
    "checkpoint_from_policy",
    "encode_observation",
    "flat_grads",
    "flat_params",
    "image_to_float",
    "load_checkpoint",
    "make_policy",
    "param_count",
    "policy_from_checkpoint",
    "sample_trajectory",
    "save_checkpoint",
    "set_flat_params",
    "tau_embedding",
    "train",
    "zero_grads",
]
