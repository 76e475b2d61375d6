#!/usr/bin/env python3
"""
SegMamba - Segmentação 3D Multimodal
Encoders Mamba por modalidade, fusão bi-nível e decoder residual, executados em CPU

Versão: 1.0.0
"""

import logging
import sys
import warnings
from datetime import datetime
from pathlib import Path

warnings.filterwarnings("ignore", category=RuntimeWarning, module="numpy")

logger = logging.getLogger(__name__)


def setup_logging(logs_dir: str = "logs") -> Path:
    """
    Configura o logger raiz: arquivo diário verboso e console limpo

    Args:
        logs_dir: Pasta dos arquivos de log

    Returns:
        Caminho do arquivo de log do dia
    """
    logs_path = Path(logs_dir)
    logs_path.mkdir(exist_ok=True)
    log_filename = logs_path / f"segmamba_{datetime.now().strftime('%Y%m%d')}.log"

    root = logging.getLogger()
    root.setLevel(logging.INFO)

    # Handler para arquivo - VERBOSO (tudo)
    file_handler = logging.FileHandler(log_filename, encoding="utf-8", mode="a")
    file_handler.setLevel(logging.INFO)
    file_handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))

    # Handler para console - LIMPO (apenas avisos e erros, fora do stdout JSON)
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.WARNING)
    console_handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))

    root.addHandler(file_handler)
    root.addHandler(console_handler)

    logging.getLogger("werkzeug").setLevel(logging.WARNING)
    return log_filename


def check_dependencies() -> bool:
    """Verifica se as dependências estão instaladas"""
    required_packages = [
        ("numpy", "numpy"),
        ("scipy", "scipy"),
        ("flask", "flask"),
    ]

    missing = []
    for module_name, package_name in required_packages:
        try:
            __import__(module_name)
        except ImportError:
            missing.append(package_name)

    if missing:
        logger.error("[ERRO] Dependencias faltando!")
        print("\n[ERRO] Dependencias necessarias nao instaladas:", file=sys.stderr)
        for pkg in missing:
            print(f"   - {pkg}", file=sys.stderr)
        print("\n[INFO] Instale com: pip install " + " ".join(missing), file=sys.stderr)
        return False

    logger.info("[SISTEMA] Todas as dependencias instaladas")
    return True


def main() -> int:
    log_filename = setup_logging()
    logger.info(f"[SISTEMA] Iniciado - Log: {log_filename}")
    if not check_dependencies():
        return 1

    from modules.cli import cli

    return cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
