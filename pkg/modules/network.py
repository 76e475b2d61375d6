"""
Módulo da Rede
Encoders Mamba por modalidade, fusão bi-nível por nível, gargalo Mamba e decoder de Res blocks
"""

import copy
import logging
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from modules.blocks import (
    MambaBlockParams,
    ResBlockParams,
    downsample,
    init_downsample,
    init_mamba_block,
    init_res_block,
    init_upsample,
    mamba_block,
    res_block,
    upsample,
)
from modules.errors import ConfigError, ShapeError
from modules.functional import conv3d
from modules.fusion import FusionParams, bi_level_fuse, init_fusion, merge_modalities, simple_sum_fuse
from modules.params import ConvParams, ParamGroup, init_conv, parameter
from modules.scan3d import ScanDirection, default_directions
from modules.tensor import Tensor, as_tensor, concat, no_grad
from modules.volume_io import ModalityVolumeSet

logger = logging.getLogger(__name__)

ENCODER_TYPES = ("mamba", "conv")
FUSION_TYPES = ("bilevel", "sum")


@dataclass
class NetConfig:
    """Arquitetura da rede; espelhada no documento JSON de configuração"""
    num_modalities: int = 2
    base_channels: int = 8
    levels: int = 3
    num_classes: int = 3
    state_dim: int = 8
    num_directions: int = 6
    patch_extents: Tuple[int, int, int] = (16, 16, 16)
    expansion: int = 2
    encoder_type: str = "mamba"
    fusion_type: str = "bilevel"
    modality_indices: Optional[List[int]] = None
    zero_init_residual: bool = True
    seed: int = 0

    @property
    def divisor(self) -> int:
        return 2 ** (self.levels - 1)

    def level_channels(self, level: int) -> int:
        return self.base_channels * 2 ** level

    def validate(self):
        """Levanta ConfigError na primeira violação encontrada"""
        for name in ("num_modalities", "base_channels", "levels", "state_dim", "expansion"):
            if getattr(self, name) < 1:
                raise ConfigError(f"NetConfig.{name} deve ser >= 1, recebido {getattr(self, name)}")
        if self.num_classes < 2:
            raise ConfigError(f"NetConfig.num_classes deve ser >= 2, recebido {self.num_classes}")
        if self.num_directions not in (2, 6, 12):
            raise ConfigError(f"NetConfig.num_directions deve ser 2, 6 ou 12, recebido {self.num_directions}")
        if self.encoder_type not in ENCODER_TYPES:
            raise ConfigError(f"NetConfig.encoder_type desconhecido: {self.encoder_type}")
        if self.fusion_type not in FUSION_TYPES:
            raise ConfigError(f"NetConfig.fusion_type desconhecido: {self.fusion_type}")
        if len(self.patch_extents) != 3 or any(e < 1 or e % self.divisor for e in self.patch_extents):
            raise ConfigError(
                f"NetConfig.patch_extents {tuple(self.patch_extents)} devem ser multiplos de {self.divisor}"
            )
        if self.modality_indices is not None:
            indices = list(self.modality_indices)
            if len(indices) != self.num_modalities or len(set(indices)) != len(indices) or min(indices) < 0:
                raise ConfigError(
                    f"NetConfig.modality_indices {indices} deve listar {self.num_modalities} indices distintos"
                )

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["patch_extents"] = list(self.patch_extents)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "NetConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"NetConfig: chaves desconhecidas {unknown}")
        values = dict(data)
        if "patch_extents" in values:
            values["patch_extents"] = tuple(int(e) for e in values["patch_extents"])
        if values.get("modality_indices") is not None:
            values["modality_indices"] = [int(i) for i in values["modality_indices"]]
        config = cls(**values)
        config.validate()
        return config

    def diff(self, other: "NetConfig") -> List[str]:
        """Campos divergentes no formato 'campo: esperado X, encontrado Y'"""
        mine, theirs = self.to_dict(), other.to_dict()
        return [
            f"{key}: esperado {mine[key]}, encontrado {theirs[key]}"
            for key in mine
            if mine[key] != theirs[key]
        ]


@dataclass
class EncoderLevelParams(ParamGroup):
    mamba: Optional[MambaBlockParams]
    res: ResBlockParams
    down: Optional[ConvParams] = None


@dataclass
class EncoderParams(ParamGroup):
    stem: ConvParams
    levels: List[EncoderLevelParams]


@dataclass
class DecoderLevelParams(ParamGroup):
    up: ConvParams
    res: ResBlockParams


@dataclass
class SegModel(ParamGroup):
    """
    Rede completa

    decoder é ordenado do nível mais profundo ao mais raso;
    fusion fica vazio quando fusion_type == "sum".
    """
    config: NetConfig
    encoders: List[EncoderParams]
    fusion: List[FusionParams]
    bottleneck: Union[MambaBlockParams, ResBlockParams]
    decoder: List[DecoderLevelParams]
    head: ConvParams

    @property
    def directions(self) -> List[ScanDirection]:
        return default_directions(self.config.num_directions)

    def count_params(self) -> int:
        return int(sum(t.size for t in self.parameters()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self.named_parameters()}

    def zero_grad(self):
        for tensor in self.parameters():
            tensor.zero_grad()

    def permute_modalities(self, perm: Sequence[int]) -> "SegModel":
        """
        Cópia cuja modalidade j usa o encoder (e os blocos de fusão) da modalidade perm[j]

        Alimentar a cópia com as modalidades reordenadas por perm reproduz os logits originais.
        """
        perm = [int(p) for p in perm]
        count = self.config.num_modalities
        if sorted(perm) != list(range(count)):
            raise ConfigError(f"permutacao invalida {perm} para {count} modalidades")
        permuted = copy.deepcopy(self)
        permuted.encoders = [permuted.encoders[p] for p in perm]
        for block in permuted.fusion:
            c = block.channels
            columns = np.concatenate([np.arange(p * c, (p + 1) * c) for p in perm])
            block.W1_mod = parameter(block.W1_mod.data[:, columns])
            block.W1_ch = parameter(block.W1_ch.data[:, columns])
            block.W2_mod = parameter(block.W2_mod.data[perm])
        if permuted.config.modality_indices is not None:
            permuted.config.modality_indices = [self.config.modality_indices[p] for p in perm]
        return permuted


def build_model(config: NetConfig) -> SegModel:
    """
    Constrói e inicializa a rede de forma determinística a partir de config.seed

    Args:
        config: Arquitetura validada

    Returns:
        SegModel
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    zero = config.zero_init_residual
    use_mamba = config.encoder_type == "mamba"
    levels = config.levels

    encoders = []
    for _ in range(config.num_modalities):
        encoder_levels = []
        for level in range(levels):
            c = config.level_channels(level)
            encoder_levels.append(EncoderLevelParams(
                mamba=init_mamba_block(rng, c, config.state_dim, config.expansion, zero) if use_mamba else None,
                res=init_res_block(rng, c, c, zero),
                down=init_downsample(rng, c) if level < levels - 1 else None,
            ))
        encoders.append(EncoderParams(init_conv(rng, config.base_channels, 1, 3), encoder_levels))

    fusion = []
    if config.fusion_type == "bilevel":
        fusion = [
            init_fusion(rng, config.num_modalities, config.level_channels(level), zero)
            for level in range(levels)
        ]

    deepest = config.level_channels(levels - 1)
    if use_mamba:
        bottleneck = init_mamba_block(rng, deepest, config.state_dim, config.expansion, zero)
    else:
        bottleneck = init_res_block(rng, deepest, deepest, zero)

    decoder = []
    for level in range(levels - 2, -1, -1):
        c = config.level_channels(level)
        decoder.append(DecoderLevelParams(
            up=init_upsample(rng, config.level_channels(level + 1)),
            res=init_res_block(rng, 2 * c, c, zero),
        ))

    model = SegModel(
        config=config,
        encoders=encoders,
        fusion=fusion,
        bottleneck=bottleneck,
        decoder=decoder,
        head=init_conv(rng, config.num_classes, config.base_channels, 1),
    )
    logger.info(
        f"[REDE] Modelo construido: encoder={config.encoder_type}, fusao={config.fusion_type}, "
        f"M={config.num_modalities}, niveis={levels}, parametros={model.count_params()}"
    )
    return model


def count_params(model: SegModel) -> int:
    return model.count_params()


def encode_modality(x_m, m: int, model: SegModel) -> List[Tensor]:
    """
    Encoder específico da modalidade m

    Args:
        x_m: Volume 1×D×H×W
        m: Índice da modalidade (posição entre as entradas do modelo)
        model: Rede

    Returns:
        Características por nível, nível ℓ com forma (base·2^ℓ)×D/2^ℓ×H/2^ℓ×W/2^ℓ
    """
    config = model.config
    x = as_tensor(x_m)
    if x.ndim != 4 or x.shape[0] != 1:
        raise ShapeError(f"encode_modality exige volume 1×D×H×W, recebido {x.shape}")
    if any(e % config.divisor for e in x.shape[1:]):
        raise ShapeError(f"extensoes {x.shape[1:]} nao sao multiplas de {config.divisor}")
    if not 0 <= m < len(model.encoders):
        raise ShapeError(f"modalidade {m} fora do intervalo [0, {len(model.encoders)})")

    encoder = model.encoders[m]
    directions = model.directions
    h = conv3d(x, encoder.stem.weight, encoder.stem.bias, padding=1)
    features = []
    for level in encoder.levels:
        if level.mamba is not None:
            h = mamba_block(h, level.mamba, directions)
        h = res_block(h, level.res)
        features.append(h)
        if level.down is not None:
            h = downsample(h, level.down)
    return features


def model_inputs(sample, config: NetConfig) -> List[np.ndarray]:
    """Seleciona, da amostra, os volumes lidos pelo modelo"""
    volumes = sample.modalities if isinstance(sample, ModalityVolumeSet) else list(sample)
    if config.modality_indices is not None:
        if max(config.modality_indices) >= len(volumes):
            raise ShapeError(
                f"modelo le as modalidades {config.modality_indices}, amostra tem apenas {len(volumes)}"
            )
        return [volumes[i] for i in config.modality_indices]
    if len(volumes) != config.num_modalities:
        raise ShapeError(
            f"numero de modalidades divergente: modelo espera {config.num_modalities}, amostra tem {len(volumes)}"
        )
    return list(volumes)


def fuse_level(features: Sequence[Tensor], model: SegModel, level: int) -> Tensor:
    if model.config.fusion_type == "bilevel":
        return merge_modalities(bi_level_fuse(features, model.fusion[level]))
    return simple_sum_fuse(features)


def forward(sample, model: SegModel) -> Tensor:
    """
    Logits por voxel num_classes×D×H×W

    Args:
        sample: ModalityVolumeSet ou sequência de volumes 1×D×H×W
        model: Rede

    Returns:
        Logits na resolução de entrada
    """
    config = model.config
    inputs = model_inputs(sample, config)
    per_modality = [encode_modality(x, m, model) for m, x in enumerate(inputs)]
    fused = [
        fuse_level([features[level] for features in per_modality], model, level)
        for level in range(config.levels)
    ]

    h = fused[-1]
    if isinstance(model.bottleneck, MambaBlockParams):
        h = mamba_block(h, model.bottleneck, model.directions)
    else:
        h = res_block(h, model.bottleneck)

    for index, stage in enumerate(model.decoder):
        skip = fused[config.levels - 2 - index]
        h = upsample(h, stage.up)
        h = res_block(concat([h, skip], 0), stage.res)

    return conv3d(h, model.head.weight, model.head.bias)


def predict_mask(logits) -> np.ndarray:
    """Argmax por voxel; empates ficam com o menor índice de classe"""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return np.argmax(data, axis=0).astype(np.int64)


def segment(sample, model: SegModel) -> np.ndarray:
    """Inferência sem fita: forward seguido de predict_mask"""
    with no_grad():
        return predict_mask(forward(sample, model))
