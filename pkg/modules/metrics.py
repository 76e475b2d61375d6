"""
Módulo de Métricas
Dice, distância de Hausdorff exata e agregação multi-classe
"""

import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from modules.errors import LabelError, ShapeError

logger = logging.getLogger(__name__)

# Classes compostas sobre os rótulos do phantom (0 fundo, 1 casca, 2 núcleo)
BRATS_STYLE_CLASSES: Dict[str, Tuple[int, ...]] = {
    "whole": (1, 2),
    "core": (2,),
    "shell": (1,),
}


def _check_masks(P: np.ndarray, G: np.ndarray, op: str) -> Tuple[np.ndarray, np.ndarray]:
    P = np.asarray(P)
    G = np.asarray(G)
    if P.shape != G.shape:
        raise ShapeError(f"{op}: extensoes divergentes {P.shape} e {G.shape}")
    for name, mask in (("P", P), ("G", G)):
        if mask.dtype != bool and not np.isin(mask, (0, 1)).all():
            raise ShapeError(f"{op}: mascara {name} nao e binaria")
    return P.astype(bool), G.astype(bool)


def dice(P: np.ndarray, G: np.ndarray) -> float:
    """
    2|P∩G| / (|P| + |G|)

    Duas máscaras vazias concordam perfeitamente (1.0).
    """
    P, G = _check_masks(P, G, "dice")
    total = int(P.sum()) + int(G.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(P, G).sum()) / total


def _directed_distances(A: np.ndarray, B: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Distância de cada voxel de A ao voxel mais próximo de B"""
    to_b = ndimage.distance_transform_edt(~B, sampling=spacing)
    return to_b[A]


def hausdorff(
    P: np.ndarray,
    G: np.ndarray,
    spacing: Sequence[float] = (1.0, 1.0, 1.0),
    percentile: float = 100.0,
) -> Optional[float]:
    """
    Distância de Hausdorff entre centros de voxel, em mm

    Args:
        P: Máscara predita
        G: Máscara de referência
        spacing: Espaçamento por eixo
        percentile: 100 para o máximo exato, 95 para HD95

    Returns:
        Máximo das duas distâncias dirigidas, ou None se alguma máscara for vazia
    """
    P, G = _check_masks(P, G, "hausdorff")
    if not 0 < percentile <= 100:
        raise ValueError(f"percentil deve estar em (0, 100], recebido {percentile}")
    if len(spacing) != P.ndim:
        raise ShapeError(f"hausdorff: espacamento {tuple(spacing)} para mascara {P.ndim}D")
    if not P.any() or not G.any():
        return None

    spacing = tuple(float(s) for s in spacing)
    forward = _directed_distances(P, G, spacing)
    backward = _directed_distances(G, P, spacing)
    if percentile >= 100:
        return float(max(forward.max(), backward.max()))
    return float(max(np.percentile(forward, percentile), np.percentile(backward, percentile)))


@dataclass
class MetricReport:
    """
    Dice e Hausdorff por classe

    Hausdorff None é indefinido (máscara vazia) e fica fora da média;
    undefined_hausdorff conta essas ocorrências.
    """
    classes: List[str]
    dice: Dict[str, float]
    hausdorff: Dict[str, Optional[float]]
    percentile: float = 100.0
    samples: int = 1
    undefined_hausdorff: int = 0

    @property
    def mean_dice(self) -> float:
        return float(np.mean([self.dice[c] for c in self.classes]))

    @property
    def mean_hausdorff(self) -> Optional[float]:
        defined = [self.hausdorff[c] for c in self.classes if self.hausdorff[c] is not None]
        return float(np.mean(defined)) if defined else None

    def to_dict(self) -> Dict:
        return {
            "classes": list(self.classes),
            "dice": {c: self.dice[c] for c in self.classes},
            "hausdorff": {c: self.hausdorff[c] for c in self.classes},
            "mean_dice": self.mean_dice,
            "mean_hausdorff": self.mean_hausdorff,
            "hausdorff_percentile": self.percentile,
            "undefined_hausdorff": self.undefined_hausdorff,
            "samples": self.samples,
            "conventions": {
                "empty_vs_empty_dice": 1.0,
                "empty_mask_hausdorff": None,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: Dict) -> "MetricReport":
        return cls(
            classes=list(data["classes"]),
            dice=dict(data["dice"]),
            hausdorff=dict(data["hausdorff"]),
            percentile=float(data.get("hausdorff_percentile", 100.0)),
            samples=int(data.get("samples", 1)),
            undefined_hausdorff=int(data.get("undefined_hausdorff", 0)),
        )


def evaluate(
    pred: np.ndarray,
    gt: np.ndarray,
    class_map: Optional[Dict[str, Sequence[int]]] = None,
    spacing: Sequence[float] = (1.0, 1.0, 1.0),
    percentile: float = 100.0,
) -> MetricReport:
    """
    Avalia um volume de rótulos contra a referência

    Args:
        pred: Rótulos preditos D×H×W
        gt: Rótulos de referência D×H×W
        class_map: Nome da classe -> rótulos unidos (padrão BRATS_STYLE_CLASSES)
        spacing: Espaçamento em mm
        percentile: Percentil do Hausdorff

    Returns:
        MetricReport com uma entrada por classe
    """
    class_map = BRATS_STYLE_CLASSES if class_map is None else class_map
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"evaluate: extensoes divergentes {pred.shape} e {gt.shape}")

    known = {0}.union(*(set(labels) for labels in class_map.values()))
    for name, volume in (("predicao", pred), ("referencia", gt)):
        unknown = sorted(set(np.unique(volume).tolist()) - known)
        if unknown:
            raise LabelError(f"rotulos desconhecidos na {name}: {unknown} (conhecidos: {sorted(known)})")

    classes = list(class_map)
    dice_values: Dict[str, float] = {}
    hd_values: Dict[str, Optional[float]] = {}
    for name in classes:
        labels = list(class_map[name])
        P, G = np.isin(pred, labels), np.isin(gt, labels)
        dice_values[name] = dice(P, G)
        hd_values[name] = hausdorff(P, G, spacing, percentile)
    undefined = sum(1 for value in hd_values.values() if value is None)
    if undefined:
        logger.warning(f"[METRICAS] Hausdorff indefinido (mascara vazia) em {undefined} classe(s)")
    return MetricReport(classes, dice_values, hd_values, percentile, 1, undefined)


def average_reports(reports: Sequence[MetricReport]) -> MetricReport:
    """Média por classe sobre amostras; Hausdorff indefinido é ignorado e contado"""
    if not reports:
        raise ValueError("average_reports exige ao menos um relatorio")
    classes = reports[0].classes
    dice_values = {c: float(np.mean([r.dice[c] for r in reports])) for c in classes}
    hd_values = {}
    for c in classes:
        defined = [r.hausdorff[c] for r in reports if r.hausdorff[c] is not None]
        hd_values[c] = float(np.mean(defined)) if defined else None
    return MetricReport(
        classes=list(classes),
        dice=dice_values,
        hausdorff=hd_values,
        percentile=reports[0].percentile,
        samples=sum(r.samples for r in reports),
        undefined_hausdorff=sum(r.undefined_hausdorff for r in reports),
    )


def _cell(value: Optional[float], scale: float = 1.0) -> str:
    return "n/a" if value is None else f"{value * scale:.2f}"


def render_table(rows: Union[Dict[str, MetricReport], Sequence[Tuple[str, MetricReport]]]) -> str:
    """
    Tabela alinhada: bloco de Dice (%) e bloco de Hausdorff (mm), uma linha por método
    """
    items = list(rows.items()) if isinstance(rows, dict) else list(rows)
    if not items:
        return ""
    classes = items[0][1].classes
    columns = classes + ["Mean"]
    name_width = max(len("Method"), *(len(name) for name, _ in items))
    cell = max(8, *(len(c) + 1 for c in columns))
    block = cell * len(columns)

    lines = [
        " " * name_width + " | " + "Dice Score (%)".ljust(block) + " | " + "Hausdorff Distance (mm)",
        "Method".ljust(name_width) + " | "
        + "".join(c.rjust(cell) for c in columns) + " | "
        + "".join(c.rjust(cell) for c in columns),
    ]
    lines.append("-" * len(lines[1]))
    for name, report in items:
        dice_cells = [_cell(report.dice[c], 100.0) for c in classes] + [_cell(report.mean_dice, 100.0)]
        hd_cells = [_cell(report.hausdorff[c]) for c in classes] + [_cell(report.mean_hausdorff)]
        lines.append(
            name.ljust(name_width) + " | "
            + "".join(v.rjust(cell) for v in dice_cells) + " | "
            + "".join(v.rjust(cell) for v in hd_cells)
        )
    return "\n".join(lines)
