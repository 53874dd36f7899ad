import numpy as np
import pytest
import torch

from orunet.augment import AugmentConfig
from orunet.data import SynthSpec, load_dataset_index, load_frame, make_folds, make_synthetic_dataset
from orunet.model import ModelConfig, build_model
from orunet.seeding import substream_seed
from orunet.trainer import (
    TrainConfig,
    load_checkpoint,
    poly_lr,
    read_log,
    save_checkpoint,
    sgd_nesterov_step,
    train_fold,
    train_model,
)

TINY = dict(base_features=4, num_stages=3, blocks_per_stage=[1, 1, 1], deep_supervision_heads=2)


class TestPolyLR:
    def test_endpoints(self):
        cfg = TrainConfig(epochs=2000)
        assert poly_lr(0, cfg) == 1.0
        assert poly_lr(2000, cfg) == 0.0

    def test_midpoint(self):
        cfg = TrainConfig(epochs=100, poly_exponent=0.9)
        assert poly_lr(50, cfg) == pytest.approx(0.5 ** 0.9, abs=1e-12)
        assert poly_lr(50, cfg) == pytest.approx(0.535887, abs=1e-6)

    def test_strictly_decreasing(self):
        cfg = TrainConfig(epochs=300, initial_lr=0.1)
        lrs = [poly_lr(e, cfg) for e in range(301)]
        assert all(a > b for a, b in zip(lrs, lrs[1:]))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            poly_lr(11, TrainConfig(epochs=10))
        with pytest.raises(ValueError):
            poly_lr(-1, TrainConfig(epochs=10))


class TestNesterov:
    def test_hand_update(self):
        p, g, v = torch.tensor([1.0]), torch.tensor([1.0]), torch.tensor([0.0])
        sgd_nesterov_step([p], [g], [v], lr=0.1, momentum=0.9)
        assert v.item() == pytest.approx(1.0)
        assert p.item() == pytest.approx(0.81)

    def test_plain_sgd(self):
        p, g, v = torch.tensor([2.0, -1.0]), torch.tensor([0.5, 0.25]), torch.zeros(2)
        sgd_nesterov_step([p], [g], [v], lr=0.2, momentum=0.0)
        assert p.tolist() == pytest.approx([1.9, -1.05])

    def test_zero_gradient(self):
        p, v = torch.tensor([3.0]), torch.zeros(1)
        sgd_nesterov_step([p], [torch.zeros(1)], [v], lr=1.0, momentum=0.9)
        assert p.item() == 3.0

    def test_matches_torch_optimizer(self):
        torch.manual_seed(0)
        ref = torch.randn(5, requires_grad=True)
        ours = ref.detach().clone()
        opt = torch.optim.SGD([ref], lr=0.3, momentum=0.9, nesterov=True)
        buf = torch.zeros(5)
        for step in range(4):
            g = torch.randn(5)
            ref.grad = g.clone()
            opt.step()
            sgd_nesterov_step([ours], [g], [buf], 0.3, 0.9)
        torch.testing.assert_close(ours, ref.detach())

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            sgd_nesterov_step([torch.zeros(2)], [torch.zeros(3)], [torch.zeros(2)], 0.1, 0.9)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"batch_size": 0}, {"initial_lr": 0}, {"momentum": 1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


@pytest.fixture(scope="module")
def frames():
    rng = np.random.default_rng(0)
    from orunet.data import synth_frame, preprocess, preprocess_mask
    spec = SynthSpec(height=32, width=48)
    out = []
    for _ in range(3):
        raw, m = synth_frame(rng, spec)
        out.append((preprocess(raw), preprocess_mask(m)))
    return out


def _cfgs(**train):
    kw = dict(batch_size=2, epochs=4, batches_per_epoch=2, initial_lr=0.05, patch_size=(16, 24),
              checkpoint_every=2, seed=3)
    kw.update(train)
    return ModelConfig(**TINY), TrainConfig(**kw), AugmentConfig()


class TestTrainModel:
    def test_zero_epochs_is_initialization(self, frames, tmp_path):
        mc, tc, ac = _cfgs(epochs=0)
        ckpt = train_model(frames, mc, tc, ac, tmp_path)
        init = build_model(mc, substream_seed(tc.seed, "init", 0)).state_dict()
        for k, v in ckpt.model.state_dict().items():
            assert torch.equal(v, init[k]), k
        assert ckpt.epoch == 0
        assert (tmp_path / "fold0_final.ckpt").exists()

    def test_outputs_and_log(self, frames, tmp_path):
        mc, tc, ac = _cfgs()
        train_model(frames, mc, tc, ac, tmp_path, fold_index=1)
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["fold1_epoch2.ckpt", "fold1_epoch4.ckpt", "fold1_final.ckpt", "fold1_train.log"]
        rows = read_log(tmp_path / "fold1_train.log")
        assert [r["epoch"] for r in rows] == [0, 1, 2, 3]
        assert [r["lr"] for r in rows] == pytest.approx([poly_lr(e, tc) for e in range(4)], abs=1e-8)
        line = (tmp_path / "fold1_train.log").read_text().splitlines()[0].split()
        assert line[0::2] == ["epoch", "lr", "loss", "seconds"]

    def test_momentum_shapes(self, frames, tmp_path):
        mc, tc, ac = _cfgs(epochs=1)
        ckpt = train_model(frames, mc, tc, ac, tmp_path)
        params = dict(ckpt.model.named_parameters())
        assert set(ckpt.momentum) == set(params)
        assert all(ckpt.momentum[k].shape == p.shape for k, p in params.items())

    def test_deterministic(self, frames, tmp_path):
        mc, tc, ac = _cfgs(epochs=2, checkpoint_every=0)
        a = train_model(frames, mc, tc, ac, tmp_path / "a")
        b = train_model(frames, mc, tc, ac, tmp_path / "b")
        for k, v in a.model.state_dict().items():
            assert torch.equal(v, b.model.state_dict()[k]), k

    def test_resume_reproduces_trajectory(self, frames, tmp_path):
        mc, tc, ac = _cfgs()
        full = train_model(frames, mc, tc, ac, tmp_path / "full")
        resumed = train_model(frames, mc, tc, ac, tmp_path / "part",
                              resume=tmp_path / "full" / "fold0_epoch2.ckpt")
        full_log = read_log(tmp_path / "full" / "fold0_train.log")
        part_log = read_log(tmp_path / "part" / "fold0_train.log")
        assert part_log[0]["epoch"] == 2
        assert (part_log[0]["lr"], part_log[0]["loss"]) == (full_log[2]["lr"], full_log[2]["loss"])
        for k, v in full.model.state_dict().items():
            assert torch.equal(v, resumed.model.state_dict()[k]), k

    def test_empty_training_set(self, tmp_path):
        mc, tc, ac = _cfgs()
        with pytest.raises(ValueError, match="empty"):
            train_model([], mc, tc, ac, tmp_path)

    def test_patch_not_divisible(self, frames, tmp_path):
        mc, tc, ac = _cfgs(patch_size=(18, 24))
        with pytest.raises(ValueError, match="divisible"):
            train_model(frames, mc, tc, ac, tmp_path)


class TestCheckpoint:
    def test_roundtrip_bytes(self, frames, tmp_path):
        mc, tc, ac = _cfgs(epochs=1)
        ckpt = train_model(frames, mc, tc, ac, tmp_path)
        first = tmp_path / "fold0_final.ckpt"
        save_checkpoint(tmp_path / "again.ckpt", load_checkpoint(first))
        assert first.read_bytes() == (tmp_path / "again.ckpt").read_bytes()
        loaded = load_checkpoint(first)
        assert loaded.model_config == mc and loaded.train_config == tc
        assert loaded.epoch == ckpt.epoch

    def test_shape_validation(self, tmp_path):
        from orunet.io import read_archive, write_archive
        mc = ModelConfig(**TINY)
        ckpt_path = tmp_path / "a.ckpt"
        from orunet.trainer import Checkpoint
        model = build_model(mc, 0)
        save_checkpoint(ckpt_path, Checkpoint(model, {}, 0, {}))
        texts, tensors = read_archive(ckpt_path)
        tensors["model/stem.weight"] = np.zeros((1, 1, 1, 1), np.float32)
        write_archive(tmp_path / "b.ckpt", texts, tensors)
        with pytest.raises(ValueError, match="stem.weight"):
            load_checkpoint(tmp_path / "b.ckpt")


def test_train_fold_uses_only_training_surgeries(tmp_path):
    spec = SynthSpec(surgeries_per_type=2, frames_per_surgery=1, height=32, width=48)
    make_synthetic_dataset(tmp_path / "data", spec, np.random.default_rng(0))
    folds = make_folds(load_dataset_index(tmp_path / "data"))
    from orunet.trainer import fold_frames
    recs, frames = fold_frames(tmp_path / "data", folds[0])
    assert {r.surgery for r in recs} == {("Prokto", 2), ("Rectum", 2)}
    mc, tc, ac = _cfgs(epochs=1)
    ckpt = train_fold(tmp_path / "data", folds[0], mc, tc, ac, tmp_path / "out")
    assert ckpt.epoch == 1
