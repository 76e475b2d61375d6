from dataclasses import replace

import numpy as np
import pytest

from modules.errors import ModelFileError
from modules.model_io import MAGIC, load_model, save_model
from modules.network import build_model, forward
from modules.tensor import no_grad


@pytest.fixture
def trained_like(tiny_config):
    """Modelo com parâmetros fora da inicialização"""
    model = build_model(replace(tiny_config, zero_init_residual=False))
    rng = np.random.default_rng(11)
    for tensor in model.parameters():
        tensor.data = tensor.data + 0.01 * rng.normal(size=tensor.shape)
    return model


def test_round_trip_parameters_bitwise(tmp_path, trained_like):
    path = save_model(trained_like, tmp_path / "model.bin")
    loaded = load_model(path)
    original = trained_like.state_dict()
    restored = loaded.state_dict()
    assert list(original) == list(restored)
    for name in original:
        assert original[name].tobytes() == restored[name].tobytes(), name
    assert loaded.config == trained_like.config


def test_round_trip_forward_identical(tmp_path, trained_like):
    loaded = load_model(save_model(trained_like, tmp_path / "model.bin"))
    inputs = [np.random.default_rng(1).uniform(size=(1, 4, 4, 4)) for _ in range(2)]
    with no_grad():
        np.testing.assert_array_equal(forward(inputs, loaded).data, forward(inputs, trained_like).data)


def test_same_model_same_bytes(tmp_path, trained_like):
    first = save_model(trained_like, tmp_path / "a.bin").read_bytes()
    second = save_model(trained_like, tmp_path / "b.bin").read_bytes()
    assert first == second
    assert first.startswith(MAGIC)


def test_no_temporary_file_left(tmp_path, trained_like):
    save_model(trained_like, tmp_path / "model.bin")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["model.bin"]


def test_wrong_modality_count_names_both(tmp_path, tiny_config):
    path = save_model(build_model(replace(tiny_config, num_modalities=1)), tmp_path / "m1.bin")
    with pytest.raises(ModelFileError, match="num_modalities: esperado 2, encontrado 1"):
        load_model(path, expected_config=tiny_config)


def test_corrupted_payload(tmp_path, trained_like):
    path = save_model(trained_like, tmp_path / "model.bin")
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ModelFileError, match="checksum"):
        load_model(path)


def test_truncated_file(tmp_path, trained_like):
    path = save_model(trained_like, tmp_path / "model.bin")
    path.write_bytes(path.read_bytes()[:100])
    with pytest.raises(ModelFileError):
        load_model(path)


def test_not_a_model(tmp_path):
    path = tmp_path / "notes.bin"
    path.write_bytes(b"x" * 128)
    with pytest.raises(ModelFileError, match="nao e um arquivo de modelo"):
        load_model(path)


def test_missing_file(tmp_path):
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "absent.bin")
