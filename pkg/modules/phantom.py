"""
Módulo de Phantoms Sintéticos
Volumes multimodais com lesões elipsoidais (casca + núcleo) e visibilidade por modalidade
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Tuple

import numpy as np

from modules.errors import ConfigError
from modules.volume_io import ModalityVolumeSet

logger = logging.getLogger(__name__)

BACKGROUND, SHELL, CORE = 0, 1, 2
NUM_CLASSES = 3
BACKGROUND_LEVEL = 0.2


@dataclass
class PhantomSpec:
    """
    Parâmetros do gerador

    radius_range é fração da extensão por eixo; core_scale_range é o raio do núcleo
    relativo ao elipsoide externo.
    """
    extents: Tuple[int, int, int] = (16, 16, 16)
    num_samples: int = 20
    seed: int = 7
    num_modalities: int = 2
    lesion_count: Tuple[int, int] = (1, 1)
    radius_range: Tuple[float, float] = (0.25, 0.4)
    core_scale_range: Tuple[float, float] = (0.4, 0.6)
    noise_sigma: float = 0.05
    conjunction: bool = True
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    max_attempts: int = 50

    def validate(self):
        if len(self.extents) != 3 or min(self.extents) < 8:
            raise ConfigError(f"PhantomSpec.extents devem ser >= 8 por eixo, recebido {tuple(self.extents)}")
        if self.num_samples < 1:
            raise ConfigError(f"PhantomSpec.num_samples deve ser >= 1, recebido {self.num_samples}")
        if self.num_modalities < 2:
            raise ConfigError(f"PhantomSpec.num_modalities deve ser >= 2, recebido {self.num_modalities}")
        low, high = self.lesion_count
        if not 1 <= low <= high:
            raise ConfigError(f"PhantomSpec.lesion_count invalido: {tuple(self.lesion_count)}")
        low, high = self.radius_range
        if not 0 < low <= high < 0.5:
            raise ConfigError(f"PhantomSpec.radius_range deve satisfazer 0 < min <= max < 0.5, recebido {(low, high)}")
        if low * min(self.extents) < 1.0:
            raise ConfigError(
                f"PhantomSpec.radius_range {(low, high)} gera raios menores que um voxel em {tuple(self.extents)}"
            )
        if any(high * e >= (e - 1) / 2.0 for e in self.extents):
            raise ConfigError(
                f"PhantomSpec.radius_range {(low, high)} nao cabe no volume {tuple(self.extents)}"
            )
        low, high = self.core_scale_range
        if not 0 < low <= high < 1:
            raise ConfigError(f"PhantomSpec.core_scale_range deve estar em (0, 1), recebido {(low, high)}")
        if self.noise_sigma < 0:
            raise ConfigError(f"PhantomSpec.noise_sigma deve ser >= 0, recebido {self.noise_sigma}")
        if self.max_attempts < 1:
            raise ConfigError("PhantomSpec.max_attempts deve ser >= 1")

    def to_dict(self) -> Dict:
        data = asdict(self)
        for key in ("extents", "lesion_count", "radius_range", "core_scale_range", "spacing"):
            data[key] = list(data[key])
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "PhantomSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"PhantomSpec: chaves desconhecidas {unknown}")
        values = dict(data)
        for key in ("extents", "lesion_count", "radius_range", "core_scale_range", "spacing"):
            if key in values:
                values[key] = tuple(values[key])
        spec = cls(**values)
        spec.validate()
        return spec


def rendering_table(num_modalities: int, conjunction: bool = True) -> np.ndarray:
    """
    Intensidade sem ruído por (modalidade, classe)

    Com conjunction, a modalidade 0 mostra casca ∪ núcleo e a modalidade 1 apenas o núcleo:
    a casca só se separa do fundo e do núcleo usando as duas. Modalidades extras mostram
    o tumor inteiro com contraste reduzido.
    """
    if conjunction:
        table = [[BACKGROUND_LEVEL, 0.7, 0.7], [BACKGROUND_LEVEL, BACKGROUND_LEVEL, 0.7]]
    else:
        table = [[BACKGROUND_LEVEL, 0.5, 0.8], [BACKGROUND_LEVEL, BACKGROUND_LEVEL, 0.7]]
    table += [[BACKGROUND_LEVEL, 0.45, 0.45]] * (num_modalities - 2)
    return np.array(table, dtype=np.float64)


def _draw_label(rng: np.random.Generator, spec: PhantomSpec, grid: List[np.ndarray]) -> np.ndarray:
    extents = np.array(spec.extents, dtype=np.float64)
    label = np.zeros(spec.extents, dtype=np.int64)
    cores = np.zeros(spec.extents, dtype=bool)
    count = int(rng.integers(spec.lesion_count[0], spec.lesion_count[1] + 1))
    for _ in range(count):
        radii = rng.uniform(*spec.radius_range, size=3) * extents
        center = rng.uniform(radii, extents - 1.0 - radii)
        scale = rng.uniform(*spec.core_scale_range)
        direction = rng.normal(size=3)
        direction /= max(np.linalg.norm(direction), 1e-12)
        offset = direction * rng.uniform(0.0, 1.0 - scale)

        normalized = [(g - c) / r for g, c, r in zip(grid, center, radii)]
        outer = sum(z * z for z in normalized) <= 1.0
        inner = sum(((z - o) / scale) ** 2 for z, o in zip(normalized, offset)) <= 1.0
        label[outer] = SHELL
        cores |= inner & outer
    label[cores] = CORE
    return label


def generate_sample(spec: PhantomSpec, index: int) -> ModalityVolumeSet:
    """Amostra index com semente derivada (seed, index); independente das demais"""
    rng = np.random.default_rng([spec.seed, index])
    grid = np.meshgrid(*(np.arange(e, dtype=np.float64) for e in spec.extents), indexing="ij")
    for _ in range(spec.max_attempts):
        label = _draw_label(rng, spec, grid)
        if len(np.unique(label)) == NUM_CLASSES:
            break
    else:
        raise ConfigError(
            f"PhantomSpec inviavel: nenhuma das {spec.max_attempts} tentativas gerou as tres classes "
            f"(extents={tuple(spec.extents)}, radius_range={tuple(spec.radius_range)})"
        )

    table = rendering_table(spec.num_modalities, spec.conjunction)
    modalities = []
    for m in range(spec.num_modalities):
        clean = table[m][label]
        noisy = clean + rng.normal(0.0, spec.noise_sigma, size=label.shape) if spec.noise_sigma > 0 else clean
        volume = np.clip(noisy, 0.0, 1.0).astype(np.float32).astype(np.float64)
        modalities.append(volume[None])

    return ModalityVolumeSet(
        modalities=modalities,
        label=label,
        spacing=tuple(float(s) for s in spec.spacing),
        sample_id=f"phantom_{spec.seed}_{index:04d}",
        num_classes=NUM_CLASSES,
    )


def generate_phantom(spec: PhantomSpec) -> List[ModalityVolumeSet]:
    """
    Gera o conjunto completo; spec e seed idênticos produzem bytes idênticos

    Args:
        spec: Parâmetros do gerador

    Returns:
        Lista com spec.num_samples amostras
    """
    spec.validate()
    samples = [generate_sample(spec, i) for i in range(spec.num_samples)]
    logger.info(
        f"[DADOS] {len(samples)} phantoms gerados (seed={spec.seed}, extents={tuple(spec.extents)}, "
        f"M={spec.num_modalities}, conjuncao={spec.conjunction})"
    )
    return samples
