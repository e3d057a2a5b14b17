"""Checkpoint serialization: bit-exact round trips and format errors."""

import struct

import numpy as np
import pytest

from twinsim.policy import (
    CheckpointError,
    checkpoint_from_policy,
    load_checkpoint,
    make_policy,
    policy_from_checkpoint,
    save_checkpoint,
)
from twinsim.policy.checkpoint import FORMAT_VERSION, MAGIC


def _small_policy(kind="state", seed=1):
    if kind == "state":
        return make_policy(kind, m=3, d=2, seed=seed, hidden=(8, 8))
    return make_policy(kind, m=3, d=2, seed=seed, hidden=(8,), enc_channels=(2, 3, 4))


def _randomized(policy, seed=0):
    rng = np.random.default_rng(seed)
    for a in policy.param_arrays():
        a += 0.1 * rng.standard_normal(a.shape)
    return policy


def test_round_trip_is_bit_exact(tmp_path):
    policy = _randomized(_small_policy())
    ck = checkpoint_from_policy(policy, step=1500, config_digest="abc123",
                                loss_ema=0.25)
    path = tmp_path / "p.ckpt"
    save_checkpoint(ck, path)
    back = load_checkpoint(path)

    assert back.step == 1500
    assert back.kind == "state"
    assert back.config_digest == "abc123"
    assert back.dims == ck.dims
    assert back.loss_ema == pytest.approx(0.25)
    assert back.params.tobytes() == ck.params.tobytes()
    assert ck.equals(back)

    # saving the loaded checkpoint again reproduces the file byte for byte
    path2 = tmp_path / "p2.ckpt"
    save_checkpoint(back, path2)
    assert path2.read_bytes() == path.read_bytes()


def test_policy_round_trip_preserves_behavior(tmp_path):
    policy = _randomized(_small_policy("gripper-cam"), seed=4)
    ck = checkpoint_from_policy(policy, step=5000)
    path = tmp_path / "cam.ckpt"
    save_checkpoint(ck, path)
    rebuilt = policy_from_checkpoint(load_checkpoint(path))
    rebuilt2 = policy_from_checkpoint(load_checkpoint(path))

    rng = np.random.default_rng(5)
    A = rng.standard_normal((2, 9))
    tau = rng.uniform(0, 1, 2)
    obs = rng.standard_normal((2, 66))
    # float32 quantization bounds the drift from the float64 original
    np.testing.assert_allclose(rebuilt.net.forward(A, tau, obs),
                               policy.net.forward(A, tau, obs),
                               rtol=0, atol=1e-5)
    # and the rebuild itself is exact
    np.testing.assert_array_equal(rebuilt.net.forward(A, tau, obs),
                                  rebuilt2.net.forward(A, tau, obs))
    assert rebuilt.encoder is not None


def test_corrupted_magic_is_a_format_error(tmp_path):
    policy = _small_policy()
    path = tmp_path / "x.ckpt"
    save_checkpoint(checkpoint_from_policy(policy, 1), path)
    blob = bytearray(path.read_bytes())
    blob[:8] = b"NOTCKPT!"
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_version_mismatch_is_rejected(tmp_path):
    policy = _small_policy()
    path = tmp_path / "x.ckpt"
    save_checkpoint(checkpoint_from_policy(policy, 1), path)
    blob = bytearray(path.read_bytes())
    struct.pack_into("<I", blob, len(MAGIC), FORMAT_VERSION + 9)
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_truncated_file_is_rejected(tmp_path):
    policy = _small_policy()
    path = tmp_path / "x.ckpt"
    save_checkpoint(checkpoint_from_policy(policy, 1), path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 17])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)
    path.write_bytes(blob[:10])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_bytes(blob + b"junk")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)


def test_kind_mismatch_is_an_explicit_error(tmp_path):
    path = tmp_path / "cam.ckpt"
    save_checkpoint(checkpoint_from_policy(_small_policy("static-cam"), 1), path)
    with pytest.raises(CheckpointError, match="static-cam.*expected state"):
        load_checkpoint(path, expect_kind="state")
    ck = load_checkpoint(path, expect_kind="static-cam")
    assert ck.kind == "static-cam"


def test_param_count_mismatch_is_rejected(tmp_path):
    policy = _small_policy()
    ck = checkpoint_from_policy(policy, 1)
    clipped = type(ck)(step=ck.step, kind=ck.kind, params=ck.params[:-3],
                       config_digest=ck.config_digest, dims=ck.dims)
    with pytest.raises(CheckpointError, match="parameters"):
        policy_from_checkpoint(clipped)
