"""Adam training loop for the flow-matching policy.

Deterministic for a given seed: batch indices, source draws, and tau draws
all derive from the config seed through stable hashes, so two runs on the
same data produce bitwise-identical checkpoints.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..mathutils import stable_hash_u64
from .nn import PolicyError, TrainingDivergedError, flat_params, set_flat_params
from .model import HIDDEN, Policy, cfm_loss, make_policy
from .checkpoint import Checkpoint, checkpoint_from_policy

DEFAULT_SCHEDULE = (1000, 1500, 2500, 5000)


@dataclass(frozen=True)
class TrainConfig:
    kind: str = "state"
    steps: int = 5000
    batch_size: int = 64
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    ema_decay: float = 0.99
    seed: int = 0
    checkpoint_steps: tuple = DEFAULT_SCHEDULE
    m: int = 32
    d: int = 2
    hidden: tuple = HIDDEN
    log_path: str | None = None
    digest: str = ""

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise PolicyError("steps and batch_size must be positive")
        if not self.lr > 0.0:
            raise PolicyError("learning rate must be positive")
        if not 0.0 <= self.ema_decay < 1.0:
            raise PolicyError("ema_decay must lie in [0, 1)")
        object.__setattr__(self, "checkpoint_steps",
                           tuple(int(s) for s in self.checkpoint_steps))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


class ArrayDataset:
    """In-memory (observation, target) pairs for state-kind training."""

    def __init__(self, obs, targets):
        self.obs = np.asarray(obs, dtype=np.float64)
        self.targets = np.asarray(targets, dtype=np.float64)
        if len(self.obs) != len(self.targets):
            raise PolicyError("observation and target counts differ")
        if len(self.obs) == 0:
            raise PolicyError("dataset is empty")

    def __len__(self):
        return len(self.obs)

    def get_batch(self, idx):
        return self.obs[idx], self.targets[idx]


@dataclass
class TrainResult:
    checkpoints: list
    policy: Policy
    log: list  # (step, loss_ema) pairs, one per step


def _write_log(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss_ema"])
        for step, ema in rows:
            w.writerow([step, f"{ema:.9g}"])


def train(dataset, config: TrainConfig) -> TrainResult:
    """Train a policy with Adam on the flow-matching loss.

    Emits a Checkpoint at each scheduled step (parameters after that step's
    update) and persists a step,loss_ema CSV when config.log_path is set.
    A non-finite loss or parameter aborts with TrainingDivergedError carrying
    the last checkpoint reached.
    """
    n = len(dataset)
    if n == 0:
        raise PolicyError("training dataset is empty")
    policy = make_policy(config.kind, m=config.m, d=config.d, seed=config.seed,
                         hidden=config.hidden)
    theta = flat_params(policy)
    mom = np.zeros_like(theta)
    vel = np.zeros_like(theta)
    rng = np.random.default_rng(stable_hash_u64("train-batches", config.seed))
    schedule = set(config.checkpoint_steps)
    checkpoints = []
    log = []
    ema = None
    try:
        for step in range(1, config.steps + 1):
            idx = rng.integers(0, n, size=config.batch_size)
            obs, tgt = dataset.get_batch(idx)
            loss, grad = cfm_loss(policy, obs, tgt,
                                  stable_hash_u64("cfm", config.seed, step))
            mom = config.beta1 * mom + (1.0 - config.beta1) * grad
            vel = config.beta2 * vel + (1.0 - config.beta2) * grad * grad
            mhat = mom / (1.0 - config.beta1 ** step)
            vhat = vel / (1.0 - config.beta2 ** step)
            theta = theta - config.lr * mhat / (np.sqrt(vhat) + config.adam_eps)
            if not np.all(np.isfinite(theta)):
                raise TrainingDivergedError(
                    f"parameters became non-finite at step {step}"
                )
            set_flat_params(policy, theta)
            ema = loss if ema is None else (
                config.ema_decay * ema + (1.0 - config.ema_decay) * loss
            )
            log.append((step, ema))
            if step in schedule:
                checkpoints.append(
                    checkpoint_from_policy(policy, step, config.digest, ema)
                )
    except TrainingDivergedError as e:
        e.last_checkpoint = checkpoints[-1] if checkpoints else None
        if config.log_path:
            _write_log(config.log_path, log)
        raise
    if config.log_path:
        _write_log(config.log_path, log)
    return TrainResult(checkpoints=checkpoints, policy=policy, log=log)
