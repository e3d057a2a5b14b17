"""Conditional flow-matching policy over waypoint trajectories.

A policy is a velocity-field MLP plus, for camera observation kinds, a small
convolutional encoder trained jointly with it. Actions are m waypoints of
(joint target, progress); the net learns the straight-line velocity from a
Gaussian source sample to the demonstrated trajectory, conditioned on the
observation and the interpolation time tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    Chain,
    Conv2d,
    GlobalAvgPool,
    Linear,
    PolicyError,
    Tanh,
    TrainingDivergedError,
    flat_grads,
    mse_loss,
    zero_grads,
)

KINDS = ("state", "static-cam", "gripper-cam")
CAMERA_KINDS = ("static-cam", "gripper-cam")

TAU_FREQS = 8
TAU_DIM = 2 * TAU_FREQS
IMAGE_FEAT = 64
DEFAULT_WAYPOINTS = 32
DEFAULT_HORIZON = 1.0
HIDDEN = (256, 256, 256)
EULER_STEPS = 10


def tau_embedding(tau) -> np.ndarray:
    """Sinusoidal features of the flow time, shape (batch, 16).

    Frequencies form the ladder pi * 2**j, so tau in [0, 1] sweeps phases
    from half a turn up to 128 turns.
    """
    t = np.atleast_1d(np.asarray(tau, dtype=np.float64))
    ang = t[:, None] * (np.pi * 2.0 ** np.arange(TAU_FREQS))[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


@dataclass(frozen=True)
class ObservationVector:
    """Conditioning input: representation kind plus its fixed-size payload."""

    kind: str
    vec: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PolicyError(f"unknown representation kind {self.kind!r}")
        v = np.asarray(self.vec, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise PolicyError("observation vector has non-finite entries")
        object.__setattr__(self, "vec", v)


@dataclass(frozen=True)
class ActionTrajectory:
    """m waypoints of (joint target, progress) spanning ``horizon`` seconds."""

    waypoints: np.ndarray
    horizon: float = DEFAULT_HORIZON

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] < 2:
            raise PolicyError(f"waypoints must be (m, d+1), got {w.shape}")
        if not self.horizon > 0.0:
            raise PolicyError("horizon must be positive")
        object.__setattr__(self, "waypoints", w)

    @property
    def joint_targets(self) -> np.ndarray:
        return self.waypoints[:, :-1]

    @property
    def progress(self) -> np.ndarray:
        return self.waypoints[:, -1]


class VelocityFieldNet:
    """MLP velocity field v(A_tau, tau, obs) over flattened trajectories."""

    def __init__(self, m, d, obs_dim, rng, hidden=HIDDEN):
        self.m = int(m)
        self.d = int(d)
        self.obs_dim = int(obs_dim)
        self.flat_dim = self.m * (self.d + 1)
        self.hidden = tuple(int(h) for h in hidden)
        in_dim = self.flat_dim + TAU_DIM + self.obs_dim
        layers = []
        prev = in_dim
        for h in self.hidden:
            layers.append(Linear(prev, h, rng))
            layers.append(Tanh())
            prev = h
        # zero-initialized output layer: the untrained field is identically
        # zero, so sampling from a fresh net returns the source draw
        layers.append(Linear(prev, self.flat_dim, zero_init=True))
        self.chain = Chain(layers)
        self.in_dim = in_dim

    def forward(self, A_tau, tau, obs):
        A = np.atleast_2d(np.asarray(A_tau, dtype=np.float64))
        o = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        t = np.atleast_1d(np.asarray(tau, dtype=np.float64))
        if A.shape[1] != self.flat_dim:
            raise PolicyError(
                f"trajectory input must have {self.flat_dim} columns, got {A.shape}"
            )
        if o.shape[1] != self.obs_dim:
            raise PolicyError(
                f"observation input must have {self.obs_dim} columns, got {o.shape}"
            )
        if not (A.shape[0] == o.shape[0] == t.shape[0]):
            raise PolicyError("batch sizes disagree across inputs")
        if np.any(t < -1e-12) or np.any(t > 1.0 + 1e-12):
            raise PolicyError("tau must lie in [0, 1]")
        x = np.concatenate([A, tau_embedding(t), o], axis=1)
        return self.chain.forward(x)

    def backward(self, dv):
        """Full input gradient (d A_tau | d tau-embedding | d obs) columns."""
        return self.chain.backward(dv)

    def param_arrays(self):
        return self.chain.param_arrays()

    def grad_arrays(self):
        return self.chain.grad_arrays()


class ImageEncoder:
    """Three stride-2 convs, global average pool, linear head to a feature."""

    def __init__(self, rng, channels=(8, 16, 32), feat_dim=IMAGE_FEAT, c_in=3):
        self.channels = tuple(int(c) for c in channels)
        self.feat_dim = int(feat_dim)
        self.c_in = int(c_in)
        layers = []
        prev = self.c_in
        for c in self.channels:
            layers.append(Conv2d(prev, c, rng))
            layers.append(Tanh())
            prev = c
        self.chain = Chain(layers)
        self.pool = GlobalAvgPool()
        self.head = Linear(prev, self.feat_dim, rng)

    def forward(self, images):
        x = np.asarray(images, dtype=np.float64)
        if x.ndim != 4:
            raise PolicyError(f"encoder expects (batch, c, h, w) images, got {x.shape}")
        y = self.chain.forward(x)
        return self.head.forward(self.pool.forward(y))

    def backward(self, dfeat):
        dy = self.pool.backward(self.head.backward(dfeat))
        return self.chain.backward(dy)

    def param_arrays(self):
        return self.chain.param_arrays() + self.head.param_arrays()

    def grad_arrays(self):
        return self.chain.grad_arrays() + self.head.grad_arrays()


def image_to_float(image) -> np.ndarray:
    """Image or (h, w, 3) uint8 array -> (3, h, w) float64 in [0, 1]."""
    arr = image.to_array() if hasattr(image, "to_array") else np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise PolicyError(f"expected an (h, w, 3) image, got shape {arr.shape}")
    return arr.astype(np.float64).transpose(2, 0, 1) / 255.0


class Policy:
    """Velocity field plus the encoder matching one observation kind."""

    def __init__(self, kind, net, encoder=None):
        if kind not in KINDS:
            raise PolicyError(f"unknown representation kind {kind!r}")
        if kind == "state":
            if encoder is not None:
                raise PolicyError("state policies do not use an image encoder")
            if net.obs_dim != net.d + 7:
                raise PolicyError(
                    f"state policy needs obs_dim {net.d + 7}, net has {net.obs_dim}"
                )
        else:
            if encoder is None:
                raise PolicyError(f"{kind} policies need an image encoder")
            if net.obs_dim != net.d + encoder.feat_dim:
                raise PolicyError(
                    f"{kind} policy needs obs_dim {net.d + encoder.feat_dim}, "
                    f"net has {net.obs_dim}"
                )
        self.kind = kind
        self.net = net
        self.encoder = encoder

    @property
    def m(self):
        return self.net.m

    @property
    def d(self):
        return self.net.d

    @property
    def obs_dim(self):
        return self.net.obs_dim

    def param_arrays(self):
        arrs = list(self.net.param_arrays())
        if self.encoder is not None:
            arrs.extend(self.encoder.param_arrays())
        return arrs

    def grad_arrays(self):
        arrs = list(self.net.grad_arrays())
        if self.encoder is not None:
            arrs.extend(self.encoder.grad_arrays())
        return arrs


def make_policy(kind, m=DEFAULT_WAYPOINTS, d=2, seed=0, hidden=HIDDEN,
                enc_channels=(8, 16, 32)) -> Policy:
    """Freshly initialized policy; deterministic for a given seed.

    The init rng is consumed by the velocity net first, then the encoder,
    so parameter layouts are reproducible across processes.
    """
    from ..mathutils import stable_hash_u64

    rng = np.random.default_rng(stable_hash_u64("policy-init", kind, m, d, seed))
    if kind == "state":
        net = VelocityFieldNet(m, d, d + 7, rng, hidden)
        return Policy(kind, net)
    if kind not in KINDS:
        raise PolicyError(f"unknown representation kind {kind!r}")
    net = VelocityFieldNet(m, d, d + IMAGE_FEAT, rng, hidden)
    encoder = ImageEncoder(rng, channels=enc_channels)
    return Policy(kind, net, encoder)


def encode_observation(kind, q, pose=None, image=None, encoder=None) -> ObservationVector:
    """Build the conditioning vector for one observation kind.

    state: joint positions, object position, object unit quaternion (w,x,y,z).
    camera kinds: joint positions plus the encoder's image feature.
    """
    if kind not in KINDS:
        raise PolicyError(f"unknown representation kind {kind!r}")
    qv = np.asarray(q, dtype=np.float64).ravel()
    if kind == "state":
        if pose is None:
            raise PolicyError("state observations need the tracked object pose")
        if image is not None:
            raise PolicyError("state observations take a pose, not an image")
        p = np.asarray(pose.position, dtype=np.float64)
        quat = np.asarray(pose.orientation, dtype=np.float64)
        if abs(float(quat @ quat) - 1.0) > 1e-6:
            raise PolicyError("object quaternion must be unit norm")
        return ObservationVector(kind, np.concatenate([qv, p, quat]))
    if image is None or encoder is None:
        raise PolicyError(f"{kind} observations need an image and an encoder")
    if pose is not None:
        raise PolicyError(f"{kind} observations take an image, not a pose")
    feat = encoder.forward(image_to_float(image)[None])[0]
    return ObservationVector(kind, np.concatenate([qv, feat]))


def _obs_forward(policy, obs_batch):
    """Run the observation side of the net, caching encoder state for backward."""
    if policy.kind == "state":
        o = np.asarray(obs_batch, dtype=np.float64)
        if o.ndim != 2 or o.shape[1] != policy.obs_dim:
            raise PolicyError(
                f"state batches are (n, {policy.obs_dim}) arrays, got {o.shape}"
            )
        return o
    if not isinstance(obs_batch, tuple) or len(obs_batch) != 2:
        raise PolicyError("camera-kind batches are (q, images) pairs")
    q, images = obs_batch
    q = np.asarray(q, dtype=np.float64)
    feats = policy.encoder.forward(images)
    if q.ndim != 2 or q.shape[0] != feats.shape[0] or q.shape[1] != policy.d:
        raise PolicyError(f"joint batch must be (n, {policy.d}), got {np.shape(q)}")
    return np.concatenate([q, feats], axis=1)


def cfm_loss(policy, obs_batch, targets, seed, source=None):
    """Flow-matching loss over a batch; returns (loss, flat parameter gradient).

    Per sample, draws A0 ~ N(0, I) and tau ~ U(0, 1), interpolates
    A_tau = (1 - tau) A0 + tau A_target, and regresses the net onto the
    straight-line velocity A_target - A0. The loss is the batch mean of the
    squared error norm. ``source`` overrides the A0 draw (degenerate-path
    test hook).
    """
    tgt = np.asarray(targets, dtype=np.float64)
    if tgt.ndim == 3:
        tgt = tgt.reshape(tgt.shape[0], -1)
    if tgt.ndim != 2 or tgt.shape[0] == 0:
        raise PolicyError("target batch must be a non-empty 2-d array")
    if tgt.shape[1] != policy.net.flat_dim:
        raise PolicyError(
            f"targets must have {policy.net.flat_dim} columns, got {tgt.shape}"
        )
    n = tgt.shape[0]
    rng = np.random.default_rng(seed)
    if source is None:
        A0 = rng.standard_normal((n, policy.net.flat_dim))
    else:
        A0 = np.asarray(source, dtype=np.float64).reshape(n, policy.net.flat_dim)
    tau = rng.uniform(0.0, 1.0, n)
    A_tau = (1.0 - tau)[:, None] * A0 + tau[:, None] * tgt
    zero_grads(policy)
    obs = _obs_forward(policy, obs_batch)
    v = policy.net.forward(A_tau, tau, obs)
    u = tgt - A0
    loss, dv = mse_loss(v, u)
    if not np.isfinite(loss):
        raise TrainingDivergedError("flow-matching loss is not finite")
    dx = policy.net.backward(dv)
    if policy.encoder is not None:
        dobs = dx[:, policy.net.flat_dim + TAU_DIM :]
        policy.encoder.backward(dobs[:, policy.d :])
    return loss, flat_grads(policy)


def sample_trajectory(policy, obs, steps=EULER_STEPS, seed=0) -> ActionTrajectory:
    """Integrate the velocity field from a Gaussian source to an action plan.

    Forward Euler with ``steps`` equal increments on tau in [0, 1);
    deterministic given the seed. Progress outputs are clamped to [0, 1].
    """
    if steps < 1:
        raise PolicyError("need at least one integration step")
    if isinstance(obs, ObservationVector):
        if obs.kind != policy.kind:
            raise PolicyError(
                f"policy expects {policy.kind} observations, got {obs.kind}"
            )
        vec = obs.vec
    else:
        vec = np.asarray(obs, dtype=np.float64).ravel()
    if vec.shape != (policy.obs_dim,):
        raise PolicyError(
            f"observation vector must have length {policy.obs_dim}, got {vec.shape}"
        )
    rng = np.random.default_rng(seed)
    A = rng.standard_normal(policy.net.flat_dim)
    ob = vec[None, :]
    for k in range(steps):
        tau = np.array([k / steps])
        v = policy.net.forward(A[None, :], tau, ob)[0]
        A = A + v / steps
    if not np.all(np.isfinite(A)):
        raise PolicyError("sampled trajectory is not finite")
    w = A.reshape(policy.m, policy.d + 1)
    w[:, -1] = np.clip(w[:, -1], 0.0, 1.0)
    return ActionTrajectory(waypoints=w)
