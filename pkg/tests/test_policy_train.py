"""Training loop behavior: convergence, determinism, schedule, divergence."""

import numpy as np
import pytest

from twinsim.policy import (
    ArrayDataset,
    DEFAULT_SCHEDULE,
    PolicyError,
    TrainConfig,
    TrainingDivergedError,
    policy_from_checkpoint,
    train,
)

M, D = 4, 2
FLAT = M * (D + 1)


def _dataset(n=240, seed=42):
    rng = np.random.default_rng(seed)
    obs = rng.standard_normal((n, 9))
    w = rng.standard_normal((9, FLAT)) * 0.4
    tgt = 1.5 + obs @ w + 0.1 * rng.standard_normal((n, FLAT))
    return ArrayDataset(obs, tgt)


def _config(**kw):
    base = dict(steps=1400, batch_size=32, m=M, d=D, hidden=(32, 32, 32),
                checkpoint_steps=(120, 180, 300, 600), seed=3)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def result():
    return train(_dataset(), _config())


def test_loss_ema_halves(result):
    assert result.log[-1][1] <= 0.5 * result.log[0][1]


def test_loss_ema_monotone_over_10x_windows(result):
    ema = dict(result.log)
    for step, value in ema.items():
        if 10 * step in ema:
            assert ema[10 * step] <= 1.05 * value


def test_checkpoints_follow_schedule(result):
    assert [c.step for c in result.checkpoints] == [120, 180, 300, 600]
    for c in result.checkpoints:
        assert c.kind == "state"
        assert c.loss_ema is not None
    emas = dict(result.log)
    assert result.checkpoints[0].loss_ema == pytest.approx(emas[120])


def test_checkpointed_policy_is_runnable(result):
    from twinsim.policy import sample_trajectory

    policy = policy_from_checkpoint(result.checkpoints[-1])
    traj = sample_trajectory(policy, np.zeros(9), seed=1)
    assert traj.waypoints.shape == (M, D + 1)
    assert np.all(np.isfinite(traj.waypoints))


def test_training_is_deterministic():
    cfg = _config(steps=120, checkpoint_steps=(120,))
    a = train(_dataset(), cfg)
    b = train(_dataset(), cfg)
    assert a.checkpoints[-1].params.tobytes() == b.checkpoints[-1].params.tobytes()
    assert a.log == b.log
    c = train(_dataset(), _config(steps=120, checkpoint_steps=(120,), seed=4))
    assert a.checkpoints[-1].params.tobytes() != c.checkpoints[-1].params.tobytes()


def test_log_csv_is_persisted(tmp_path):
    path = tmp_path / "train.csv"
    res = train(_dataset(), _config(steps=40, checkpoint_steps=(40,),
                                    log_path=str(path)))
    lines = path.read_text().splitlines()
    assert lines[0] == "step,loss_ema"
    assert len(lines) == 41
    step, ema = lines[-1].split(",")
    assert int(step) == 40
    assert float(ema) == pytest.approx(res.log[-1][1], rel=1e-8)


class _PoisonedDataset:
    """Returns clean batches until a cutoff step, then NaN targets."""

    def __init__(self, clean_batches):
        self.inner = _dataset()
        self.calls = 0
        self.cutoff = clean_batches

    def __len__(self):
        return len(self.inner)

    def get_batch(self, idx):
        self.calls += 1
        obs, tgt = self.inner.get_batch(idx)
        if self.calls > self.cutoff:
            tgt = np.full_like(tgt, np.nan)
        return obs, tgt


def test_divergence_aborts_with_last_good_checkpoint():
    cfg = _config(steps=50, checkpoint_steps=(2,))
    with pytest.raises(TrainingDivergedError) as err:
        train(_PoisonedDataset(clean_batches=4), cfg)
    assert err.value.last_checkpoint is not None
    assert err.value.last_checkpoint.step == 2

    with pytest.raises(TrainingDivergedError) as err:
        train(_PoisonedDataset(clean_batches=0), cfg)
    assert err.value.last_checkpoint is None


def test_divergence_still_writes_partial_log(tmp_path):
    path = tmp_path / "diverged.csv"
    cfg = _config(steps=50, checkpoint_steps=(2,), log_path=str(path))
    with pytest.raises(TrainingDivergedError):
        train(_PoisonedDataset(clean_batches=4), cfg)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,loss_ema"
    assert len(lines) == 5  # four clean steps logged before the abort


class _CameraDataset:
    """(q, image) observation pairs for a camera-kind policy."""

    def __init__(self, n=80, seed=9):
        rng = np.random.default_rng(seed)
        self.q = rng.standard_normal((n, D))
        self.images = rng.uniform(0.0, 1.0, (n, 3, 8, 8))
        mean = self.images.mean(axis=(1, 2, 3))
        self.tgt = np.outer(2.0 * mean + 1.0, np.ones(FLAT))

    def __len__(self):
        return len(self.q)

    def get_batch(self, idx):
        return (self.q[idx], self.images[idx]), self.tgt[idx]


def test_camera_kind_trains_through_the_encoder():
    cfg = _config(kind="static-cam", steps=150, batch_size=16, hidden=(8,),
                  checkpoint_steps=(150,))
    res = train(_CameraDataset(), cfg)
    assert res.log[-1][1] < res.log[0][1]
    ck = res.checkpoints[-1]
    assert ck.kind == "static-cam"
    assert "enc_channels" in ck.dims
    rebuilt = policy_from_checkpoint(ck)
    assert rebuilt.encoder is not None


def test_config_and_dataset_validation():
    with pytest.raises(PolicyError):
        TrainConfig(steps=0)
    with pytest.raises(PolicyError):
        TrainConfig(lr=0.0)
    with pytest.raises(PolicyError):
        TrainConfig(ema_decay=1.0)
    with pytest.raises(PolicyError):
        TrainConfig(batch_size=0)
    with pytest.raises(PolicyError):
        ArrayDataset(np.zeros((3, 9)), np.zeros((4, FLAT)))
    with pytest.raises(PolicyError):
        ArrayDataset(np.zeros((0, 9)), np.zeros((0, FLAT)))


def test_default_checkpoint_schedule():
    assert DEFAULT_SCHEDULE == (1000, 1500, 2500, 5000)
    assert TrainConfig().checkpoint_steps == DEFAULT_SCHEDULE
