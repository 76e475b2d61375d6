"""
Módulo de Volumes
Amostra multimodal em memória e formato em disco (cabeçalho JSON + payloads brutos)
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from modules.errors import VolumeFormatError

logger = logging.getLogger(__name__)

HEADER_FILE = "header.json"
LABEL_FILE = "label.raw"
FORMAT_VERSION = 1
INTENSITY_DTYPES = {"float32": "<f4"}
LABEL_DTYPES = {"uint8": "u1"}


def modality_file(index: int) -> str:
    return f"modality_{index}.raw"


@dataclass
class ModalityVolumeSet:
    """
    Amostra com M volumes de intensidade 1×D×H×W em [0, 1] e um rótulo D×H×W

    Em memória as intensidades são float64; em disco, float32.
    """
    modalities: List[np.ndarray]
    label: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    sample_id: str = "sample"
    num_classes: int = 3

    @property
    def extents(self) -> Tuple[int, int, int]:
        return tuple(self.label.shape)

    @property
    def num_modalities(self) -> int:
        return len(self.modalities)

    def validate(self):
        if self.label.ndim != 3:
            raise VolumeFormatError(f"rotulo deve ser D×H×W, recebido {self.label.shape}")
        for index, volume in enumerate(self.modalities):
            if volume.shape != (1,) + self.extents:
                raise VolumeFormatError(
                    f"modalidade {index} com forma {volume.shape}, esperado {(1,) + self.extents}"
                )
        if self.label.size and (self.label.min() < 0 or self.label.max() >= self.num_classes):
            raise VolumeFormatError(
                f"rotulos fora de [0, {self.num_classes}) na amostra {self.sample_id}"
            )
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise VolumeFormatError(f"espacamento invalido: {self.spacing}")


def _write_header(directory: Path, header: dict):
    with open(directory / HEADER_FILE, "w", encoding="utf-8") as f:
        json.dump(header, f, indent=2, ensure_ascii=False, sort_keys=True)


def write_volume(path, sample: ModalityVolumeSet) -> Path:
    """
    Grava uma amostra em um diretório

    Args:
        path: Diretório de destino (criado se não existir)
        sample: Amostra a gravar

    Returns:
        Caminho do diretório
    """
    sample.validate()
    if sample.label.size and (sample.label.min() < 0 or sample.label.max() > 255):
        raise VolumeFormatError(
            f"rotulos fora de [0, 255] nao cabem em uint8: [{sample.label.min()}, {sample.label.max()}]"
        )
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    header = {
        "format_version": FORMAT_VERSION,
        "sample_id": sample.sample_id,
        "extents": list(sample.extents),
        "num_modalities": sample.num_modalities,
        "spacing": [float(s) for s in sample.spacing],
        "dtype": "float32",
        "label_dtype": "uint8",
        "num_classes": int(sample.num_classes),
    }
    _write_header(directory, header)
    for index, volume in enumerate(sample.modalities):
        (directory / modality_file(index)).write_bytes(np.ascontiguousarray(volume, dtype="<f4").tobytes())
    (directory / LABEL_FILE).write_bytes(np.ascontiguousarray(sample.label, dtype="u1").tobytes())
    logger.debug(f"[DADOS] Volume gravado: {directory} (M={sample.num_modalities})")
    return directory


def write_mask(
    path,
    mask: np.ndarray,
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0),
    sample_id: str = "mask",
    num_classes: int = 3,
) -> Path:
    """Grava apenas um rótulo (M = 0), formato de saída do comando segment"""
    return write_volume(path, ModalityVolumeSet([], np.asarray(mask), tuple(spacing), sample_id, num_classes))


def _read_payload(file_path: Path, dtype: str, count: int) -> np.ndarray:
    if not file_path.exists():
        raise VolumeFormatError(f"arquivo de payload ausente: {file_path.name}")
    raw = file_path.read_bytes()
    expected = count * np.dtype(dtype).itemsize
    if len(raw) != expected:
        raise VolumeFormatError(
            f"{file_path.name}: tamanho divergente, esperado {expected} bytes, encontrado {len(raw)}"
        )
    return np.frombuffer(raw, dtype=dtype)


def read_volume(path) -> ModalityVolumeSet:
    """
    Lê uma amostra gravada por write_volume

    Args:
        path: Diretório com header.json e payloads

    Returns:
        ModalityVolumeSet com intensidades em float64
    """
    directory = Path(path)
    header_path = directory / HEADER_FILE
    if not header_path.exists():
        raise VolumeFormatError(f"cabecalho nao encontrado em {directory}")
    try:
        with open(header_path, "r", encoding="utf-8") as f:
            header = json.load(f)
        extents = tuple(int(e) for e in header["extents"])
        num_modalities = int(header["num_modalities"])
        dtype_name = header["dtype"]
        label_dtype_name = header.get("label_dtype", "uint8")
    except (KeyError, TypeError, ValueError) as e:
        raise VolumeFormatError(f"cabecalho invalido em {header_path}: {e}") from e

    if dtype_name not in INTENSITY_DTYPES:
        raise VolumeFormatError(f"dtype de intensidade desconhecido: {dtype_name}")
    if label_dtype_name not in LABEL_DTYPES:
        raise VolumeFormatError(f"dtype de rotulo desconhecido: {label_dtype_name}")
    if len(extents) != 3 or min(extents) < 1:
        raise VolumeFormatError(f"extensoes invalidas no cabecalho: {extents}")

    present = sorted(p.name for p in directory.glob("modality_*.raw"))
    if len(present) != num_modalities:
        raise VolumeFormatError(
            f"cabecalho declara M={num_modalities}, mas ha {len(present)} arquivos de intensidade"
        )

    count = int(np.prod(extents))
    modalities = [
        _read_payload(directory / modality_file(k), INTENSITY_DTYPES[dtype_name], count)
        .astype(np.float64)
        .reshape((1,) + extents)
        for k in range(num_modalities)
    ]
    label = _read_payload(directory / LABEL_FILE, LABEL_DTYPES[label_dtype_name], count)
    sample = ModalityVolumeSet(
        modalities=modalities,
        label=label.astype(np.int64).reshape(extents),
        spacing=tuple(float(s) for s in header.get("spacing", (1.0, 1.0, 1.0))),
        sample_id=str(header.get("sample_id", directory.name)),
        num_classes=int(header.get("num_classes", 3)),
    )
    sample.validate()
    return sample


def is_volume_dir(path) -> bool:
    return (Path(path) / HEADER_FILE).exists()


def read_mask(path) -> Tuple[np.ndarray, Tuple[float, float, float]]:
    """Rótulo e espaçamento de um diretório de volume (com ou sem modalidades)"""
    sample = read_volume(path)
    return sample.label, sample.spacing


def sample_from_arrays(
    modalities: List[np.ndarray],
    label: Optional[np.ndarray] = None,
    sample_id: str = "sample",
    num_classes: int = 3,
) -> ModalityVolumeSet:
    """Monta uma amostra a partir de volumes D×H×W ou 1×D×H×W"""
    volumes = []
    for volume in modalities:
        volume = np.asarray(volume, dtype=np.float64)
        volumes.append(volume[None] if volume.ndim == 3 else volume)
    extents = volumes[0].shape[1:]
    if label is None:
        label = np.zeros(extents, dtype=np.int64)
    return ModalityVolumeSet(volumes, np.asarray(label, dtype=np.int64), sample_id=sample_id, num_classes=num_classes)
