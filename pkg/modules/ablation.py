"""
Módulo de Ablação
Treina e avalia os quatro modos sobre a mesma divisão e monta a tabela comparativa
"""

import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from modules.dataset import evaluation_samples, split
from modules.metrics import MetricReport, render_table
from modules.network import NetConfig, build_model
from modules.trainer import ABLATION_MODES, TrainConfig, evaluate_model, net_config_for_mode, train
from modules.volume_io import ModalityVolumeSet

logger = logging.getLogger(__name__)

TABLE_ORDER = ["single-modality", "simple-fusion", "mamba-encoder", "full"]


def ablate(
    samples: Sequence[ModalityVolumeSet],
    net_config: NetConfig,
    train_config: TrainConfig,
    modes: Optional[Sequence[str]] = None,
) -> Dict[str, MetricReport]:
    """
    Executa os modos de ablação com a mesma divisão e as mesmas sementes

    Args:
        samples: Conjunto completo (dividido por train_config.split e train_config.seed)
        net_config: Arquitetura base
        train_config: Hiperparâmetros comuns a todos os modos
        modes: Subconjunto de modos (padrão: os quatro, na ordem da tabela)

    Returns:
        Modo -> relatório médio no conjunto de teste
    """
    modes = list(TABLE_ORDER if modes is None else modes)
    train_set, val_set, test_set = split(samples, train_config.split, train_config.seed)
    if not test_set:
        test_set = val_set or train_set
        logger.warning("[AVISO] Divisao sem amostras de teste; avaliando no conjunto disponivel")

    test_set = evaluation_samples(test_set, train_config.split, net_config.patch_extents)
    available = samples[0].num_modalities
    results: Dict[str, MetricReport] = {}
    for mode in modes:
        config = net_config_for_mode(net_config, mode, train_config.modality, available)
        model = build_model(config)
        logger.info(f"[ABLACAO] Modo {mode}: {model.count_params()} parametros")
        model, _ = train(model, train_set, replace(train_config, mode=mode), val_set=val_set)
        results[mode] = evaluate_model(model, test_set)
        logger.info(f"[ABLACAO] Modo {mode}: dice medio {results[mode].mean_dice:.4f}")
    return results


def trend_holds(results: Dict[str, MetricReport], margin: float = 0.10) -> bool:
    """full ≥ mamba-encoder ≥ simple-fusion > single-modality e full − single ≥ margin"""
    dice = {mode: results[mode].mean_dice for mode in TABLE_ORDER}
    return (
        dice["full"] >= dice["mamba-encoder"] >= dice["simple-fusion"] > dice["single-modality"]
        and dice["full"] - dice["single-modality"] >= margin
    )


def comparison_document(results: Dict[str, MetricReport]) -> Dict:
    rows = [(mode, results[mode]) for mode in TABLE_ORDER if mode in results]
    document = {
        "rows": [
            {"mode": mode, "description": ABLATION_MODES[mode]["description"], **report.to_dict()}
            for mode, report in rows
        ],
        "table": render_table(rows),
    }
    if all(mode in results for mode in TABLE_ORDER):
        document["trend_holds"] = trend_holds(results)
    return document


def save_comparison(results: Dict[str, MetricReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(comparison_document(results), f, indent=2, ensure_ascii=False)
    logger.info(f"[ABLACAO] Tabela comparativa salva em {path}")
    return path
