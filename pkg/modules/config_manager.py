"""
Módulo de Configuração
Carrega, valida e salva o documento JSON (net/train/phantom) e cataloga os modos de ablação
"""

import json
import logging
from pathlib import Path
from typing import Dict, Optional

from modules.errors import ConfigError
from modules.network import NetConfig
from modules.phantom import PhantomSpec
from modules.trainer import ABLATION_MODES, TrainConfig, net_config_for_mode

logger = logging.getLogger(__name__)

SECTIONS = ("net", "train", "phantom")


class ConfigManager:
    """Configuração do sistema de segmentação"""

    def __init__(self, config_file: Optional[str] = None):
        """
        Inicializa o gerenciador

        Args:
            config_file: Documento JSON; None usa apenas os valores padrão
        """
        self.config_file = Path(config_file) if config_file else None
        self.config = self._load_config()
        self.net = NetConfig.from_dict(self.config["net"])
        self.train = TrainConfig.from_dict(self.config["train"])
        self.phantom = PhantomSpec.from_dict(self.config["phantom"])

    @staticmethod
    def default_config() -> Dict:
        return {
            "net": NetConfig().to_dict(),
            "train": TrainConfig().to_dict(),
            "phantom": PhantomSpec().to_dict(),
        }

    def _load_config(self) -> Dict:
        """Carrega o JSON e completa as seções ausentes com os padrões"""
        config = self.default_config()
        if self.config_file is None:
            return config
        if not self.config_file.exists():
            raise ConfigError(f"arquivo de configuracao nao encontrado: {self.config_file}")
        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"JSON invalido em {self.config_file}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"{self.config_file}: documento deve ser um objeto JSON")

        unknown = sorted(set(loaded) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"{self.config_file}: secoes desconhecidas {unknown}")
        for section in SECTIONS:
            config[section].update(loaded.get(section, {}))
        logger.info(f"[CONFIG] Configuracao carregada de {self.config_file}")
        return config

    def to_dict(self) -> Dict:
        return {"net": self.net.to_dict(), "train": self.train.to_dict(), "phantom": self.phantom.to_dict()}

    def save(self, path: Optional[str] = None) -> Path:
        """Salva a configuração atual (no arquivo de origem por padrão)"""
        target = Path(path) if path else self.config_file
        if target is None:
            raise ConfigError("nenhum arquivo de destino para salvar a configuracao")
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
        logger.info(f"[CONFIG] Configuracao salva em {target}")
        return target

    def apply_seed(self, seed: Optional[int]):
        """--seed substitui todas as sementes do documento"""
        if seed is None:
            return
        self.net.seed = seed
        self.train.seed = seed
        self.phantom.seed = seed
        logger.info(f"[CONFIG] Semente global: {seed}")

    def net_for_mode(self, mode: Optional[str] = None, available_modalities: Optional[int] = None) -> NetConfig:
        """Arquitetura do modo pedido (padrão: modo do treino)"""
        return net_config_for_mode(self.net, mode or self.train.mode, self.train.modality, available_modalities)

    def list_modes(self) -> Dict:
        return ABLATION_MODES

    def print_modes(self):
        """Imprime a tabela de modos de ablação"""
        active = self.train.mode
        print("\n" + "=" * 90)
        print(" " * 30 + "MODOS DE ABLACAO")
        print("=" * 90)
        print(f"{'#':<4} {'Modo':<18} {'Encoder':<10} {'Fusao':<10} {'Descricao':<40}")
        print("-" * 90)
        for idx, (name, info) in enumerate(ABLATION_MODES.items(), 1):
            marker = " [ATIVO]" if name == active else ""
            print(f"{idx:<4} {name:<18} {info['encoder_type']:<10} {info['fusion_type']:<10} "
                  f"{info['description']}{marker}")
        print("=" * 90 + "\n")
