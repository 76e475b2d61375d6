"""
Módulo do Sistema de Segmentação
Fachada que integra dados, rede, treino e avaliação para a CLI e a API
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional

from modules.ablation import ablate, comparison_document, save_comparison
from modules.config_manager import ConfigManager
from modules.dataset import load_dataset, save_dataset, split
from modules.errors import ModelFileError, VolumeFormatError
from modules.gradcheck_suite import run_suite, summarize
from modules.metrics import MetricReport, average_reports, evaluate
from modules.model_io import load_model, save_model
from modules.network import SegModel, build_model, segment
from modules.phantom import PhantomSpec, generate_phantom
from modules.trainer import TrainLog, mode_of, train
from modules.volume_io import ModalityVolumeSet, is_volume_dir, write_mask

logger = logging.getLogger(__name__)


class SegmentationSystem:
    """
    Sistema principal
    Cada comando da CLI corresponde a um método
    """

    def __init__(self, config_file: Optional[str] = None, model_path: Optional[str] = None, seed: Optional[int] = None):
        """
        Inicializa o sistema

        Args:
            config_file: Documento JSON de configuração (None usa os padrões)
            model_path: Modelo salvo a carregar para segment/serve
            seed: Substitui todas as sementes da configuração
        """
        logger.info("[SISTEMA] Inicializando sistema de segmentacao...")
        self.config_manager = ConfigManager(config_file)
        self.config_manager.apply_seed(seed)
        self.model_path = Path(model_path) if model_path else None
        self.model: Optional[SegModel] = load_model(model_path) if model_path else None
        logger.info("[SISTEMA] Sistema inicializado")

    def make_data(self, out_dir: str, spec: Optional[PhantomSpec] = None) -> List[ModalityVolumeSet]:
        """Gera phantoms e grava um diretório por amostra"""
        spec = spec or self.config_manager.phantom
        samples = generate_phantom(spec)
        save_dataset(samples, out_dir)
        return samples

    def train(self, data_dir: str, out_path: str) -> TrainLog:
        """
        Treina no conjunto de treino da divisão configurada e salva o modelo

        O log de treino vai para <out_path>.log.json.
        """
        samples = load_dataset(data_dir)
        train_cfg = self.config_manager.train
        train_set, val_set, _ = split(samples, train_cfg.split, train_cfg.seed)
        net_config = self.config_manager.net_for_mode(available_modalities=samples[0].num_modalities)
        model = build_model(net_config)

        checkpoint = Path(str(out_path) + ".ckpt") if train_cfg.checkpoint_every else None
        model, log = train(model, train_set, train_cfg, val_set=val_set, checkpoint_path=checkpoint)
        save_model(model, out_path)
        log.save(str(out_path) + ".log.json")
        self.model = model
        self.model_path = Path(out_path)
        return log

    def _require_model(self) -> SegModel:
        if self.model is None:
            raise ModelFileError("nenhum modelo carregado (use --model)")
        return self.model

    def segment(self, input_dir: str, out_dir: Optional[str] = None) -> Dict[str, object]:
        """
        Segmenta um volume ou um diretório de volumes

        Returns:
            sample_id -> máscara D×H×W
        """
        model = self._require_model()
        samples = load_dataset(input_dir)
        masks = {}
        for sample in samples:
            mask = segment(sample, model)
            masks[sample.sample_id] = mask
            if out_dir is not None:
                target = Path(out_dir) if len(samples) == 1 and is_volume_dir(input_dir) else Path(out_dir) / sample.sample_id
                write_mask(target, mask, sample.spacing, sample.sample_id, model.config.num_classes)
        logger.info(f"[SISTEMA] {len(masks)} volume(s) segmentado(s)")
        return masks

    def evaluate(
        self,
        pred_dir: str,
        gt_dir: str,
        report_path: Optional[str] = None,
        percentile: float = 100.0,
    ) -> MetricReport:
        """Compara predições e referências pareadas por sample_id"""
        predictions = load_dataset(pred_dir)
        references = load_dataset(gt_dir)
        if len(predictions) == 1 and len(references) == 1:
            pairs = [(predictions[0], references[0])]
        else:
            by_id = {sample.sample_id: sample for sample in references}
            missing = sorted(p.sample_id for p in predictions if p.sample_id not in by_id)
            if missing or len(predictions) != len(references):
                raise VolumeFormatError(
                    f"predicoes e referencias nao pareiam: ausentes na referencia {missing}, "
                    f"{len(predictions)} predicoes vs {len(references)} referencias"
                )
            pairs = [(p, by_id[p.sample_id]) for p in predictions]

        report = average_reports([
            evaluate(pred.label, gt.label, spacing=gt.spacing, percentile=percentile) for pred, gt in pairs
        ])
        if report_path:
            Path(report_path).parent.mkdir(parents=True, exist_ok=True)
            Path(report_path).write_text(report.to_json(), encoding="utf-8")
            logger.info(f"[METRICAS] Relatorio salvo em {report_path}")
        return report

    def gradcheck(self, include_network: bool = True) -> Dict:
        results = run_suite(self.config_manager.net, seed=self.config_manager.train.seed,
                            include_network=include_network)
        return summarize(results)

    def ablate(self, data_dir: str, out_path: Optional[str] = None) -> Dict:
        samples = load_dataset(data_dir)
        results = ablate(samples, self.config_manager.net, self.config_manager.train)
        if out_path:
            save_comparison(results, out_path)
        return comparison_document(results)

    def get_stats(self) -> Dict:
        """
        Retorna estatísticas do sistema

        Returns:
            Dicionário com configuração e, se houver, o modelo carregado
        """
        stats = {"config": self.config_manager.to_dict(), "model_loaded": self.model is not None}
        if self.model is not None:
            stats.update({
                "model_path": str(self.model_path) if self.model_path else None,
                "parameters": self.model.count_params(),
                "mode": mode_of(self.model.config),
                "net": self.model.config.to_dict(),
            })
        return stats
