"""Binary checkpoint format for trained policies.

Layout: 8-byte magic, u32 format version, u32 header length, UTF-8 JSON
header (step, kind, dims, digest, parameter count), then the flat parameter
vector as little-endian float32. Parameters are quantized to float32 at save
time; a checkpoint round-trips through disk bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import PolicyError, flat_params, param_count, set_flat_params
from .model import Policy, make_policy

MAGIC = b"TWINCKPT"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<II")


class CheckpointError(PolicyError):
    """Malformed, truncated, or mismatched checkpoint file."""


@dataclass(frozen=True)
class Checkpoint:
    """Flat float32 parameter snapshot plus the metadata to rebuild it."""

    step: int
    kind: str
    params: np.ndarray
    config_digest: str = ""
    dims: dict = field(default_factory=dict)
    loss_ema: float | None = None

    def __post_init__(self):
        p = np.ascontiguousarray(self.params, dtype="<f4")
        object.__setattr__(self, "params", p.ravel())

    def equals(self, other) -> bool:
        return (
            self.step == other.step
            and self.kind == other.kind
            and self.config_digest == other.config_digest
            and self.dims == other.dims
            and self.params.tobytes() == other.params.tobytes()
        )


def checkpoint_from_policy(policy: Policy, step: int, config_digest="",
                           loss_ema=None) -> Checkpoint:
    dims = {"m": policy.m, "d": policy.d, "hidden": list(policy.net.hidden)}
    if policy.encoder is not None:
        dims["enc_channels"] = list(policy.encoder.channels)
    return Checkpoint(
        step=int(step),
        kind=policy.kind,
        params=flat_params(policy).astype("<f4"),
        config_digest=config_digest,
        dims=dims,
        loss_ema=None if loss_ema is None else float(loss_ema),
    )


def policy_from_checkpoint(ck: Checkpoint) -> Policy:
    """Rebuild a runnable policy; float32 parameters widen back to float64."""
    dims = ck.dims
    try:
        m, d = int(dims["m"]), int(dims["d"])
        hidden = tuple(int(h) for h in dims["hidden"])
        enc = tuple(int(c) for c in dims.get("enc_channels", (8, 16, 32)))
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"checkpoint dims are incomplete: {e}") from e
    policy = make_policy(ck.kind, m=m, d=d, seed=0, hidden=hidden, enc_channels=enc)
    expected = param_count(policy)
    if ck.params.size != expected:
        raise CheckpointError(
            f"checkpoint has {ck.params.size} parameters, "
            f"a {ck.kind} policy of these dims needs {expected}"
        )
    set_flat_params(policy, ck.params.astype(np.float64))
    return policy


def save_checkpoint(ck: Checkpoint, path) -> None:
    header = {
        "step": ck.step,
        "kind": ck.kind,
        "dims": ck.dims,
        "digest": ck.config_digest,
        "param_count": int(ck.params.size),
    }
    if ck.loss_ema is not None:
        header["loss_ema"] = ck.loss_ema
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEAD.pack(FORMAT_VERSION, len(blob)))
        f.write(blob)
        f.write(ck.params.tobytes())


def load_checkpoint(path, expect_kind=None) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + _HEAD.size:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes, not a policy checkpoint")
    version, hlen = _HEAD.unpack_from(blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version}, "
            f"this build reads version {FORMAT_VERSION}"
        )
    start = len(MAGIC) + _HEAD.size
    if len(blob) < start + hlen:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(blob[start : start + hlen].decode("utf-8"))
        kind = header["kind"]
        step = int(header["step"])
        n = int(header["param_count"])
        dims = dict(header["dims"])
        digest = header.get("digest", "")
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError,
            ValueError) as e:
        raise CheckpointError(f"{path}: unreadable checkpoint header: {e}") from e
    body = start + hlen
    need = body + 4 * n
    if len(blob) < need:
        raise CheckpointError(
            f"{path}: truncated parameter array, "
            f"expected {n} floats but file holds {(len(blob) - body) // 4}"
        )
    if len(blob) > need:
        raise CheckpointError(f"{path}: {len(blob) - need} trailing bytes")
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(
            f"{path}: checkpoint holds a {kind} policy, expected {expect_kind}"
        )
    params = np.frombuffer(blob[body:need], dtype="<f4").copy()
    return Checkpoint(
        step=step,
        kind=kind,
        params=params,
        config_digest=digest,
        dims=dims,
        loss_ema=header.get("loss_ema"),
    )
