"""
Módulo de Persistência de Modelos
Formato binário determinístico: magic + cabeçalho JSON + float64 little-endian + SHA-256
"""

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from modules.errors import ConfigError, ModelFileError
from modules.network import NetConfig, SegModel, build_model
from modules.params import parameter

logger = logging.getLogger(__name__)

MAGIC = b"SEGMAMBA"
FORMAT_VERSION = 1
DIGEST_SIZE = 32


def _encode(model: SegModel) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, tensor in model.named_parameters():
        payload = np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(payload)})
        chunks.append(payload)
        offset += len(payload)
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "config": model.config.to_dict(), "parameters": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    body = MAGIC + struct.pack("<I", FORMAT_VERSION) + struct.pack("<Q", len(header)) + header + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def save_model(model: SegModel, path) -> Path:
    """
    Salva o modelo; o mesmo modelo sempre produz os mesmos bytes

    Args:
        model: Rede a salvar
        path: Arquivo de destino

    Returns:
        Caminho gravado
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = _encode(model)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    logger.info(f"[MODELO] Modelo salvo em {path} ({len(blob)} bytes, {model.count_params()} parametros)")
    return path


def load_model(path, expected_config: Optional[NetConfig] = None) -> SegModel:
    """
    Carrega um modelo salvo por save_model

    Args:
        path: Arquivo do modelo
        expected_config: Se informado, a configuração gravada deve coincidir

    Returns:
        SegModel com os parâmetros gravados
    """
    path = Path(path)
    if not path.exists():
        raise ModelFileError(f"arquivo de modelo nao encontrado: {path}")
    blob = path.read_bytes()
    prefix = len(MAGIC) + 4 + 8
    if len(blob) < prefix + DIGEST_SIZE or not blob.startswith(MAGIC):
        raise ModelFileError(f"{path.name} nao e um arquivo de modelo valido")

    body, digest = blob[:-DIGEST_SIZE], blob[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFileError(f"{path.name}: checksum SHA-256 divergente (arquivo corrompido)")

    (version,) = struct.unpack("<I", body[len(MAGIC):len(MAGIC) + 4])
    if version != FORMAT_VERSION:
        raise ModelFileError(f"versao de formato nao suportada: {version}")
    (header_size,) = struct.unpack("<Q", body[len(MAGIC) + 4:prefix])
    try:
        header = json.loads(body[prefix:prefix + header_size].decode("utf-8"))
        config = NetConfig.from_dict(header["config"])
    except (KeyError, ValueError, ConfigError) as e:
        raise ModelFileError(f"cabecalho de modelo invalido: {e}") from e

    if expected_config is not None:
        differences = expected_config.diff(config)
        if differences:
            raise ModelFileError("configuracao do modelo divergente: " + "; ".join(differences))

    payload = body[prefix + header_size:]
    model = build_model(config)
    stored = {entry["name"]: entry for entry in header["parameters"]}
    expected_names = [name for name, _ in model.named_parameters()]
    if sorted(stored) != sorted(expected_names):
        missing = sorted(set(expected_names) - set(stored))
        extra = sorted(set(stored) - set(expected_names))
        raise ModelFileError(f"parametros divergentes: ausentes {missing}, sobrando {extra}")

    for name, tensor in model.named_parameters():
        entry = stored[name]
        if tuple(entry["shape"]) != tensor.shape:
            raise ModelFileError(f"{name}: forma esperada {tensor.shape}, encontrada {tuple(entry['shape'])}")
        start, size = entry["offset"], entry["nbytes"]
        if start + size > len(payload) or size != tensor.size * 8:
            raise ModelFileError(f"{name}: payload truncado ou tamanho divergente")
        data = np.frombuffer(payload[start:start + size], dtype="<f8").reshape(tensor.shape)
        _assign(model, name, data)

    logger.info(f"[MODELO] Modelo carregado de {path} ({model.count_params()} parametros)")
    return model


def _assign(model: SegModel, name: str, data: np.ndarray):
    """Substitui o tensor apontado por um caminho 'a.b.0.c'"""
    *path, leaf = name.split(".")
    owner = model
    for part in path:
        owner = owner[int(part)] if part.isdigit() else getattr(owner, part)
    setattr(owner, leaf, parameter(np.array(data)))
