from dataclasses import replace

import numpy as np
import pytest

from modules.errors import ConfigError, LabelError, ShapeError, TrainingAborted
from modules.gradcheck import grad_check
from modules.model_io import load_model, save_model
from modules.network import NetConfig, build_model
from modules.phantom import PhantomSpec, generate_phantom
from modules.tensor import Tensor
from modules.trainer import (
    ABLATION_MODES,
    SGD,
    TrainConfig,
    check_mode,
    cross_entropy,
    evaluate_model,
    mode_of,
    net_config_for_mode,
    sgd_step,
    train,
)

PHANTOM_CONFIG = NetConfig(base_channels=2, levels=2, state_dim=2, num_directions=2, patch_extents=(8, 8, 8))


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss = cross_entropy(Tensor(np.zeros((3, 2, 2, 2))), np.zeros((2, 2, 2), dtype=int))
        assert loss.item() == pytest.approx(np.log(3.0), abs=1e-12)

    def test_saturated_logits(self):
        labels = np.array([0, 2, 1, 1]).reshape(1, 2, 2)
        logits = np.zeros((3, 1, 2, 2))
        logits[labels[None] == np.arange(3)[:, None, None, None]] = 100.0
        assert cross_entropy(Tensor(logits), labels).item() < 1e-10

    def test_gradient(self, rng):
        labels = rng.integers(0, 3, size=(2, 2, 2))
        assert grad_check(lambda z: cross_entropy(z, labels), Tensor(rng.normal(size=(3, 2, 2, 2)))) < 1e-6

    def test_label_out_of_range(self):
        with pytest.raises(LabelError):
            cross_entropy(Tensor(np.zeros((3, 1, 1, 2))), np.array([[[0, 3]]]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cross_entropy(Tensor(np.zeros((3, 2, 2, 2))), np.zeros((2, 2, 1), dtype=int))


class TestSGDStep:
    @pytest.mark.parametrize("grad,wd,expected", [(0.0, 0.0, 1.0), (1.0, 0.0, 0.9), (0.0, 0.5, 0.95)])
    def test_update(self, grad, wd, expected):
        out = sgd_step({"w": np.array([1.0])}, {"w": np.array([grad])}, lr=0.1, weight_decay=wd)
        assert out["w"][0] == pytest.approx(expected, abs=1e-15)

    def test_inputs_unchanged(self):
        params = {"w": np.array([1.0, 2.0])}
        sgd_step(params, {"w": np.array([1.0, 1.0])}, lr=0.5, weight_decay=0.1)
        assert params["w"].tolist() == [1.0, 2.0]

    def test_decay_mask(self):
        out = sgd_step(
            {"w": np.array([1.0]), "norm.gain": np.array([1.0])},
            {"w": np.array([0.0]), "norm.gain": np.array([0.0])},
            lr=0.1, weight_decay=0.5, decay_mask={"w": True, "norm.gain": False},
        )
        assert out["w"][0] == pytest.approx(0.95)
        assert out["norm.gain"][0] == 1.0

    def test_momentum_accumulates(self):
        velocity = {}
        params = {"w": np.array([0.0])}
        grads = {"w": np.array([1.0])}
        params = sgd_step(params, grads, 0.1, 0.0, velocity=velocity, momentum=0.5)
        params = sgd_step(params, grads, 0.1, 0.0, velocity=velocity, momentum=0.5)
        assert params["w"][0] == pytest.approx(-0.1 - 0.15)

    def test_non_finite_gradient_names_parameter(self):
        with pytest.raises(TrainingAborted, match="decoder.0.up.weight") as info:
            sgd_step({"decoder.0.up.weight": np.ones(2)}, {"decoder.0.up.weight": np.array([1.0, np.nan])}, 0.1, 0.0)
        assert info.value.parameter == "decoder.0.up.weight"

    def test_negative_lr(self):
        with pytest.raises(ValueError):
            sgd_step({"w": np.ones(1)}, {"w": np.ones(1)}, -0.1, 0.0)

    def test_optimizer_skips_decay_on_norms(self, tiny_config):
        model = build_model(tiny_config)
        optimizer = SGD(model, lr=0.1, weight_decay=0.5)
        gain = model.encoders[0].levels[0].mamba.ln_in.gain
        before = gain.data.copy()
        optimizer.zero_grad()
        optimizer.step()
        np.testing.assert_array_equal(gain.data, before)
        assert not optimizer.decay_mask["encoders.0.levels.0.mamba.ln_in.gain"]
        assert optimizer.decay_mask["head.weight"]


class TestTrainConfig:
    @pytest.mark.parametrize("changes", [
        {"learning_rate": -1e-3},
        {"weight_decay": -1.0},
        {"batch_size": 2},
        {"epochs": 0},
        {"momentum": 1.0},
        {"mode": "transformer"},
        {"max_steps": 0},
    ])
    def test_invalid(self, changes):
        with pytest.raises(ConfigError):
            replace(TrainConfig(), **changes).validate()

    def test_zero_learning_rate_allowed(self):
        TrainConfig(learning_rate=0.0).validate()

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"lr": 0.1})

    def test_dict_round_trip(self):
        cfg = TrainConfig(learning_rate=0.01, epochs=3, max_steps=10)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestModes:
    def test_every_mode_round_trips(self):
        for mode in ABLATION_MODES:
            assert mode_of(net_config_for_mode(NetConfig(), mode)) == mode

    def test_single_modality_reads_one_channel(self):
        config = net_config_for_mode(NetConfig(num_modalities=2), "single-modality", modality=1)
        assert config.num_modalities == 1
        assert config.modality_indices == [1]
        assert config.encoder_type == "conv"

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            net_config_for_mode(NetConfig(), "attention-only")

    def test_modality_out_of_range(self):
        with pytest.raises(ConfigError):
            net_config_for_mode(NetConfig(num_modalities=2), "single-modality", modality=2)

    def test_model_mode_mismatch(self, tiny_config):
        with pytest.raises(ConfigError, match="simple-fusion"):
            check_mode(build_model(tiny_config), TrainConfig(mode="simple-fusion"))


class TestTrainLoop:
    def test_zero_learning_rate_freezes_parameters(self, phantom_samples):
        model = build_model(PHANTOM_CONFIG)
        before = {name: value.copy() for name, value in model.state_dict().items()}
        _, log = train(model, phantom_samples[:2], TrainConfig(learning_rate=0.0, epochs=2, eval_every=0))
        assert log.steps == 4
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(value, before[name])

    def test_identical_seeds_identical_losses(self, phantom_samples):
        cfg = TrainConfig(learning_rate=1e-2, epochs=2, eval_every=0)
        _, first = train(build_model(PHANTOM_CONFIG), phantom_samples[:2], cfg)
        _, second = train(build_model(PHANTOM_CONFIG), phantom_samples[:2], cfg)
        assert first.losses == second.losses
        assert first.rng_digests == second.rng_digests
        assert len(set(first.rng_digests)) == 2

    def test_max_steps_caps_training(self, phantom_samples):
        _, log = train(build_model(PHANTOM_CONFIG), phantom_samples, TrainConfig(epochs=5, max_steps=3, eval_every=0))
        assert log.steps == 3
        assert len(log.losses) == 3

    def test_training_reduces_loss(self, phantom_samples):
        cfg = TrainConfig(learning_rate=0.05, epochs=10, eval_every=0)
        _, log = train(build_model(PHANTOM_CONFIG), phantom_samples[:1], cfg)
        assert log.losses[-1] < log.losses[0]

    def test_validation_and_checkpoint(self, tmp_path, phantom_samples):
        checkpoint = tmp_path / "model.ckpt"
        cfg = TrainConfig(epochs=2, eval_every=1, checkpoint_every=1)
        _, log = train(build_model(PHANTOM_CONFIG), phantom_samples[:1], cfg, phantom_samples[1:2], checkpoint)
        assert checkpoint.exists()
        assert [record["epoch"] for record in log.epochs] == [1, 2]
        assert 0.0 <= log.epochs[-1]["val_mean_dice"] <= 1.0

    def test_log_saved_as_json(self, tmp_path, phantom_samples):
        _, log = train(build_model(PHANTOM_CONFIG), phantom_samples[:1], TrainConfig(epochs=1, eval_every=0))
        path = log.save(tmp_path / "train.log.json")
        assert '"losses"' in path.read_text(encoding="utf-8")

    def test_nan_loss_aborts_without_checkpoint(self, tmp_path, phantom_samples):
        model = build_model(PHANTOM_CONFIG)
        model.head.bias.data[:] = np.nan
        with pytest.raises(TrainingAborted, match="nenhum checkpoint gravado") as info:
            train(model, phantom_samples[:1], TrainConfig(epochs=1, eval_every=0), checkpoint_path=tmp_path / "m.ckpt")
        assert "mantido" not in str(info.value)
        assert info.value.log.aborted is not None
        assert info.value.log.steps == 0

    def test_nan_loss_keeps_existing_checkpoint(self, tmp_path, phantom_samples):
        checkpoint = tmp_path / "m.ckpt"
        save_model(build_model(PHANTOM_CONFIG), checkpoint)
        model = build_model(PHANTOM_CONFIG)
        model.head.bias.data[:] = np.nan
        with pytest.raises(TrainingAborted, match="ultimo checkpoint valido mantido"):
            train(model, phantom_samples[:1], TrainConfig(epochs=1, eval_every=0), checkpoint_path=checkpoint)
        assert load_model(checkpoint).config == PHANTOM_CONFIG

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            train(build_model(PHANTOM_CONFIG), [], TrainConfig())

    def test_evaluate_model(self, phantom_samples):
        report = evaluate_model(build_model(PHANTOM_CONFIG), phantom_samples[:2])
        assert report.samples == 2
        assert report.classes == ["whole", "core", "shell"]


@pytest.mark.slow
def test_overfits_single_phantom():
    sample = generate_phantom(PhantomSpec(extents=(16, 16, 16), num_samples=1, seed=7))[0]
    model = build_model(NetConfig(base_channels=8, levels=3, state_dim=8, seed=7))
    cfg = TrainConfig(learning_rate=1e-3, weight_decay=1e-5, epochs=300, max_steps=300, eval_every=0)
    model, log = train(model, [sample], cfg)
    assert log.steps <= 300
    assert evaluate_model(model, [sample]).mean_dice >= 0.90
