import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from modules.network import NetConfig  # noqa: E402
from modules.phantom import PhantomSpec, generate_phantom  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="executa testes de aceitacao longos")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: treino completo (overfit, ablacao); requer --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="use --runslow para executar")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_config():
    """Rede mínima: 2 níveis, 2 canais base, volumes 4³"""
    return NetConfig(
        num_modalities=2,
        base_channels=2,
        levels=2,
        state_dim=2,
        num_directions=2,
        patch_extents=(4, 4, 4),
        seed=3,
    )


@pytest.fixture
def phantom_samples():
    spec = PhantomSpec(extents=(8, 8, 8), num_samples=4, seed=3, noise_sigma=0.02)
    return generate_phantom(spec)


@pytest.fixture
def small_config_file(tmp_path):
    """Documento de configuração com rede mínima e phantoms 8³"""
    document = {
        "net": {"base_channels": 2, "levels": 2, "state_dim": 2, "num_directions": 2, "patch_extents": [8, 8, 8]},
        "train": {"epochs": 1, "eval_every": 0, "seed": 3},
        "phantom": {"extents": [8, 8, 8], "num_samples": 3, "seed": 3},
    }
    path = tmp_path / "small.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return str(path)
