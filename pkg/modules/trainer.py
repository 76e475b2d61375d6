"""
Módulo de Treinamento
Perda de entropia cruzada, SGD com L2 clássico e laço de treino determinístico
"""

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.errors import ConfigError, LabelError, ShapeError, TrainingAborted
from modules.functional import log_softmax
from modules.metrics import MetricReport, average_reports, evaluate
from modules.model_io import save_model
from modules.network import NetConfig, SegModel, forward, segment
from modules.params import is_norm_parameter
from modules.tensor import Tensor, backward, tape_scope
from modules.volume_io import ModalityVolumeSet

logger = logging.getLogger(__name__)

# Linhas da tabela de ablação: (descrição, encoder, fusão, usa só uma modalidade)
ABLATION_MODES: Dict[str, Dict] = {
    "single-modality": {
        "description": "Encoder convolucional, apenas uma modalidade",
        "encoder_type": "conv",
        "fusion_type": "sum",
        "single": True,
    },
    "simple-fusion": {
        "description": "Encoders convolucionais, fusao por soma",
        "encoder_type": "conv",
        "fusion_type": "sum",
        "single": False,
    },
    "mamba-encoder": {
        "description": "Encoders Mamba (SS3D), fusao por soma",
        "encoder_type": "mamba",
        "fusion_type": "sum",
        "single": False,
    },
    "full": {
        "description": "Encoders Mamba + fusao bi-nivel",
        "encoder_type": "mamba",
        "fusion_type": "bilevel",
        "single": False,
    },
}


def net_config_for_mode(base: NetConfig, mode: str, modality: int = 0, available_modalities: int = None) -> NetConfig:
    """
    Ajusta a arquitetura base a um modo de ablação

    Args:
        base: Configuração de referência (normalmente a do modo full)
        mode: Nome do modo
        modality: Modalidade usada no modo single-modality
        available_modalities: Modalidades presentes nas amostras (padrão base.num_modalities)

    Returns:
        Nova NetConfig validada
    """
    if mode not in ABLATION_MODES:
        raise ConfigError(f"modo de ablacao desconhecido: {mode} (disponiveis: {list(ABLATION_MODES)})")
    entry = ABLATION_MODES[mode]
    available = base.num_modalities if available_modalities is None else available_modalities
    if entry["single"]:
        if not 0 <= modality < available:
            raise ConfigError(f"modalidade {modality} fora de [0, {available})")
        config = replace(base, encoder_type=entry["encoder_type"], fusion_type=entry["fusion_type"],
                         num_modalities=1, modality_indices=[modality])
    else:
        config = replace(base, encoder_type=entry["encoder_type"], fusion_type=entry["fusion_type"],
                         num_modalities=available, modality_indices=None)
    config.validate()
    return config


def mode_of(config: NetConfig) -> str:
    """Modo de ablação correspondente a uma arquitetura"""
    single = config.modality_indices is not None and config.num_modalities == 1
    for name, entry in ABLATION_MODES.items():
        if (entry["encoder_type"], entry["fusion_type"], entry["single"]) == (
            config.encoder_type, config.fusion_type, single
        ):
            return name
    raise ConfigError(
        f"arquitetura sem modo de ablacao: encoder={config.encoder_type}, fusao={config.fusion_type}, "
        f"modalidades={config.modality_indices}"
    )


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    momentum: float = 0.0
    epochs: int = 50
    batch_size: int = 1
    seed: int = 7
    checkpoint_every: int = 0
    mode: str = "full"
    modality: int = 0
    split: str = "brats"
    max_steps: Optional[int] = None
    eval_every: int = 1

    def validate(self):
        if self.learning_rate < 0:
            raise ConfigError(f"TrainConfig.learning_rate deve ser >= 0, recebido {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"TrainConfig.weight_decay deve ser >= 0, recebido {self.weight_decay}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"TrainConfig.momentum deve estar em [0, 1), recebido {self.momentum}")
        if self.epochs < 1:
            raise ConfigError(f"TrainConfig.epochs deve ser >= 1, recebido {self.epochs}")
        if self.batch_size != 1:
            raise ConfigError(f"TrainConfig.batch_size suportado apenas igual a 1, recebido {self.batch_size}")
        if self.mode not in ABLATION_MODES:
            raise ConfigError(f"TrainConfig.mode desconhecido: {self.mode}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError(f"TrainConfig.max_steps deve ser >= 1, recebido {self.max_steps}")
        if self.checkpoint_every < 0 or self.eval_every < 0:
            raise ConfigError("TrainConfig.checkpoint_every e eval_every devem ser >= 0")

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"TrainConfig: chaves desconhecidas {unknown}")
        config = cls(**data)
        config.validate()
        return config


@dataclass
class TrainLog:
    losses: List[float] = field(default_factory=list)
    epochs: List[Dict] = field(default_factory=list)
    rng_digests: List[str] = field(default_factory=list)
    wall_clock: float = 0.0
    steps: int = 0
    aborted: Optional[str] = None

    def to_dict(self) -> Dict:
        return asdict(self)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
        return path


def rng_digest(rng: np.random.Generator) -> str:
    state = json.dumps(rng.bit_generator.state, sort_keys=True, default=str)
    return hashlib.sha256(state.encode("utf-8")).hexdigest()[:16]


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Média sobre voxels de −log softmax(logits)[rótulo]

    Args:
        logits: K×D×H×W
        labels: D×H×W inteiros em [0, K)

    Returns:
        Tensor escalar
    """
    labels = np.asarray(labels)
    num_classes = logits.shape[0]
    if labels.shape != logits.shape[1:]:
        raise ShapeError(f"cross_entropy: rotulos {labels.shape} nao batem com logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelError(f"cross_entropy: rotulos fora de [0, {num_classes})")
    onehot = np.moveaxis(np.eye(num_classes)[labels], -1, 0)
    return (log_softmax(logits, axis=0) * onehot).sum() * (-1.0 / labels.size)


def sgd_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    lr: float,
    weight_decay: float,
    decay_mask: Optional[Dict[str, bool]] = None,
    velocity: Optional[Dict[str, np.ndarray]] = None,
    momentum: float = 0.0,
) -> Dict[str, np.ndarray]:
    """
    w ← w − lr·(g + weight_decay·w), com L2 acoplado ao gradiente

    Args:
        params: Nome -> valores atuais
        grads: Nome -> gradientes
        lr: Taxa de aprendizado (0 congela os parâmetros)
        weight_decay: Coeficiente L2
        decay_mask: Nome -> aplica L2 (padrão: todos)
        velocity: Buffers de momento, atualizados no lugar quando momentum > 0
        momentum: Coeficiente de momento

    Returns:
        Novos valores; as entradas não são modificadas
    """
    if lr < 0:
        raise ValueError(f"lr deve ser nao negativo, recebido {lr}")
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingAborted(f"gradiente nao finito no parametro {name}", parameter=name)

    updated = {}
    for name, value in params.items():
        direction = np.asarray(grads.get(name, 0.0), dtype=np.float64)
        if weight_decay and (decay_mask is None or decay_mask.get(name, True)):
            direction = direction + weight_decay * value
        if momentum and velocity is not None:
            buffer = momentum * velocity.get(name, np.zeros_like(value)) + direction
            velocity[name] = buffer
            direction = buffer
        updated[name] = value - lr * direction
    return updated


class SGD:
    """
    Otimizador sobre os parâmetros de um modelo

    Ganhos e vieses de normalização ficam fora do weight decay.
    """

    def __init__(self, model: SegModel, lr: float, weight_decay: float = 0.0, momentum: float = 0.0):
        self.named = list(model.named_parameters())
        self.lr = lr
        self.weight_decay = weight_decay
        self.momentum = momentum
        self.decay_mask = {name: not is_norm_parameter(name) for name, _ in self.named}
        self.velocity: Dict[str, np.ndarray] = {}

    def zero_grad(self):
        for _, tensor in self.named:
            tensor.zero_grad()

    def step(self):
        params = {name: tensor.data for name, tensor in self.named}
        grads = {
            name: tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            for name, tensor in self.named
        }
        updated = sgd_step(params, grads, self.lr, self.weight_decay, self.decay_mask, self.velocity, self.momentum)
        for name, tensor in self.named:
            tensor.data = updated[name]


def check_mode(model: SegModel, cfg: TrainConfig):
    actual = mode_of(model.config)
    if actual != cfg.mode:
        raise ConfigError(f"modelo construido para o modo {actual}, configuracao de treino pede {cfg.mode}")


def evaluate_model(
    model: SegModel,
    samples: Sequence[ModalityVolumeSet],
    class_map: Optional[Dict[str, Sequence[int]]] = None,
    percentile: float = 100.0,
) -> MetricReport:
    """Segmenta cada amostra e devolve a média dos relatórios"""
    if not samples:
        raise ValueError("evaluate_model exige ao menos uma amostra")
    reports = [
        evaluate(segment(sample, model), sample.label, class_map, sample.spacing, percentile)
        for sample in samples
    ]
    return average_reports(reports)


def train(
    model: SegModel,
    dataset: Sequence[ModalityVolumeSet],
    cfg: TrainConfig,
    val_set: Optional[Sequence[ModalityVolumeSet]] = None,
    checkpoint_path=None,
) -> Tuple[SegModel, TrainLog]:
    """
    Treina com SGD, uma amostra por passo, em ordem embaralhada por época

    Args:
        model: Rede construída para cfg.mode
        dataset: Amostras de treino
        cfg: Configuração de treino
        val_set: Amostras de validação avaliadas a cada cfg.eval_every épocas
        checkpoint_path: Arquivo de checkpoint gravado a cada cfg.checkpoint_every épocas

    Returns:
        (modelo treinado, TrainLog)
    """
    cfg.validate()
    if len(dataset) == 0:
        raise ValueError("train exige um conjunto de treino nao vazio")
    check_mode(model, cfg)
    if cfg.learning_rate == 0:
        logger.warning("[AVISO] learning_rate = 0: parametros permanecem congelados")

    rng = np.random.default_rng(cfg.seed)
    optimizer = SGD(model, cfg.learning_rate, cfg.weight_decay, cfg.momentum)
    log = TrainLog()
    start = time.perf_counter()
    logger.info(
        f"[TREINO] Inicio: modo={cfg.mode}, amostras={len(dataset)}, epocas={cfg.epochs}, "
        f"lr={cfg.learning_rate}, wd={cfg.weight_decay}"
    )

    for epoch in range(cfg.epochs):
        log.rng_digests.append(rng_digest(rng))
        order = rng.permutation(len(dataset))
        epoch_losses = []
        for index in order:
            sample = dataset[int(index)]
            optimizer.zero_grad()
            with tape_scope():
                loss = cross_entropy(forward(sample, model), sample.label)
                value = loss.item()
                if not np.isfinite(value):
                    _abort(log, f"perda nao finita no passo {log.steps + 1}", None, checkpoint_path, start)
                backward(loss)
            try:
                optimizer.step()
            except TrainingAborted as e:
                _abort(log, str(e), e.parameter, checkpoint_path, start)

            log.losses.append(value)
            epoch_losses.append(value)
            log.steps += 1
            logger.info(f"[TREINO] passo {log.steps} perda {value:.6f}")
            if cfg.max_steps is not None and log.steps >= cfg.max_steps:
                break

        record = {"epoch": epoch + 1, "steps": log.steps, "mean_loss": float(np.mean(epoch_losses))}
        if val_set and cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            report = evaluate_model(model, val_set)
            record.update({"val_mean_dice": report.mean_dice, "val_mean_hausdorff": report.mean_hausdorff})
            logger.info(
                f"[TREINO] epoca {epoch + 1}: dice medio {report.mean_dice:.4f}, "
                f"hausdorff medio {report.mean_hausdorff}"
            )
        log.epochs.append(record)

        if checkpoint_path and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_model(model, checkpoint_path)
        if cfg.max_steps is not None and log.steps >= cfg.max_steps:
            break

    log.wall_clock = time.perf_counter() - start
    logger.info(f"[TREINO] Concluido: {log.steps} passos em {log.wall_clock:.1f}s")
    return model, log


def _abort(log: TrainLog, message: str, parameter: Optional[str], checkpoint_path, start: float):
    log.aborted = message
    log.wall_clock = time.perf_counter() - start
    retained = ""
    if checkpoint_path and Path(checkpoint_path).exists():
        retained = f"; ultimo checkpoint valido mantido em {checkpoint_path}"
    elif checkpoint_path:
        retained = f"; nenhum checkpoint gravado em {checkpoint_path}"
    logger.error(f"[ERRO] Treino interrompido: {message}{retained}")
    error = TrainingAborted(f"{message}{retained}", parameter=parameter)
    error.log = log
    raise error
