"""
Módulo de Conjuntos de Dados
Divisão treino/validação/teste, persistência em diretório e recortes
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from modules.errors import ConfigError, ShapeError, VolumeFormatError
from modules.volume_io import ModalityVolumeSet, is_volume_dir, read_volume, write_volume

logger = logging.getLogger(__name__)

SPLIT_PRESETS: Dict[str, Tuple[float, float, float]] = {
    "brats": (0.7, 0.1, 0.2),
    "hecktor": (0.6, 0.2, 0.2),
}


def resolve_fractions(fractions) -> Tuple[float, float, float]:
    if isinstance(fractions, str):
        if fractions not in SPLIT_PRESETS:
            raise ConfigError(f"preset de divisao desconhecido: {fractions} (disponiveis: {sorted(SPLIT_PRESETS)})")
        return SPLIT_PRESETS[fractions]
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fracoes de divisao devem ser tres valores somando 1, recebido {fractions}")
    return fractions


def split(
    dataset: Sequence[ModalityVolumeSet],
    fractions=SPLIT_PRESETS["brats"],
    seed: int = 0,
) -> Tuple[List[ModalityVolumeSet], List[ModalityVolumeSet], List[ModalityVolumeSet]]:
    """
    Divide o conjunto de forma determinística

    Args:
        dataset: Amostras
        fractions: (treino, validação, teste) ou nome de preset
        seed: Semente da permutação

    Returns:
        (treino, validação, teste); validação e teste usam piso, o resto vai para treino
    """
    if len(dataset) == 0:
        raise ValueError("split exige um conjunto de dados nao vazio")
    _, val_fraction, test_fraction = resolve_fractions(fractions)
    total = len(dataset)
    n_val = int(np.floor(total * val_fraction + 1e-9))
    n_test = int(np.floor(total * test_fraction + 1e-9))
    n_train = total - n_val - n_test

    order = np.random.default_rng(seed).permutation(total)
    train = [dataset[i] for i in order[:n_train]]
    val = [dataset[i] for i in order[n_train:n_train + n_val]]
    test = [dataset[i] for i in order[n_train + n_val:]]
    logger.info(f"[DADOS] Divisao {n_train}/{n_val}/{n_test} (seed={seed})")
    return train, val, test


def save_dataset(samples: Sequence[ModalityVolumeSet], directory) -> Path:
    """Grava cada amostra em DIR/<sample_id>/"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for sample in samples:
        write_volume(directory / sample.sample_id, sample)
    logger.info(f"[DADOS] {len(samples)} amostras gravadas em {directory}")
    return directory


def load_dataset(directory) -> List[ModalityVolumeSet]:
    """
    Lê um diretório de volume único ou um diretório de amostras

    Args:
        directory: DIR com header.json, ou DIR/<sample_id>/header.json

    Returns:
        Amostras em ordem de nome de diretório
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise VolumeFormatError(f"diretorio de dados nao encontrado: {directory}")
    if is_volume_dir(directory):
        return [read_volume(directory)]
    samples = [read_volume(child) for child in sorted(directory.iterdir()) if is_volume_dir(child)]
    if not samples:
        raise VolumeFormatError(f"nenhum volume encontrado em {directory}")
    logger.info(f"[DADOS] {len(samples)} amostras carregadas de {directory}")
    return samples


def select_modalities(sample: ModalityVolumeSet, indices: Sequence[int]) -> ModalityVolumeSet:
    """Nova amostra contendo apenas as modalidades indicadas, na ordem dada"""
    indices = [int(i) for i in indices]
    if not indices or min(indices) < 0 or max(indices) >= sample.num_modalities:
        raise ShapeError(f"indices de modalidade {indices} invalidos para M={sample.num_modalities}")
    return ModalityVolumeSet(
        modalities=[sample.modalities[i] for i in indices],
        label=sample.label,
        spacing=sample.spacing,
        sample_id=sample.sample_id,
        num_classes=sample.num_classes,
    )


def center_crop(sample: ModalityVolumeSet, extents: Sequence[int]) -> ModalityVolumeSet:
    """Recorte central D×H×W de todas as modalidades e do rótulo"""
    extents = tuple(int(e) for e in extents)
    if len(extents) != 3 or any(e < 1 or e > s for e, s in zip(extents, sample.extents)):
        raise ShapeError(f"recorte {extents} invalido para volume {sample.extents}")
    starts = [(s - e) // 2 for s, e in zip(sample.extents, extents)]
    window = tuple(slice(start, start + e) for start, e in zip(starts, extents))
    return ModalityVolumeSet(
        modalities=[volume[(slice(None),) + window].copy() for volume in sample.modalities],
        label=sample.label[window].copy(),
        spacing=sample.spacing,
        sample_id=sample.sample_id,
        num_classes=sample.num_classes,
    )


CROPPED_PRESETS = ("hecktor",)


def evaluation_samples(
    samples: Sequence[ModalityVolumeSet],
    preset,
    extents: Sequence[int],
) -> List[ModalityVolumeSet]:
    """
    Amostras de teste na forma avaliada pelo preset

    hecktor avalia recortes centrais de até `extents` por eixo; os demais presets usam o volume inteiro.
    """
    if not isinstance(preset, str) or preset not in CROPPED_PRESETS:
        return list(samples)
    cropped = [center_crop(s, [min(e, s_e) for e, s_e in zip(extents, s.extents)]) for s in samples]
    if cropped:
        logger.info(f"[DADOS] Avaliacao {preset}: recorte central {cropped[0].extents}")
    return cropped
