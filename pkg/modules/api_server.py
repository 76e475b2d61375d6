"""
API REST para o Sistema de Segmentação
Permite segmentar e avaliar volumes via HTTP POST
"""

import logging

from flask import Flask, jsonify, request

from modules import __version__
from modules.errors import SegMambaError

logger = logging.getLogger(__name__)


class SegmentationAPI:
    """
    Servidor API REST para o SegmentationSystem
    """

    def __init__(self, system, host: str = "127.0.0.1", port: int = 5000):
        """
        Inicializa o servidor API

        Args:
            system: Instância do SegmentationSystem
            host: Host para o servidor (padrão: 127.0.0.1)
            port: Porta para o servidor (padrão: 5000)
        """
        self.system = system
        self.host = host
        self.port = port
        self.app = Flask(__name__)

        self._setup_routes()

        logger.info(f"[API] API REST inicializada em {host}:{port}")

    @staticmethod
    def _failure(error: Exception):
        status = 400 if isinstance(error, SegMambaError) else 500
        logger.error(f"[API] {type(error).__name__}: {error}")
        return jsonify({"success": False, "error": str(error), "type": type(error).__name__}), status

    @staticmethod
    def _json_body():
        if not request.is_json:
            return None
        return request.get_json(silent=True)

    def _setup_routes(self):
        """Configura as rotas da API"""

        @self.app.route("/health", methods=["GET"])
        def health_check():
            return jsonify({
                "status": "online",
                "service": "SegMamba API",
                "version": __version__,
                "model_loaded": self.system.model is not None,
            }), 200

        @self.app.route("/stats", methods=["GET"])
        def get_stats():
            try:
                return jsonify({"success": True, "stats": self.system.get_stats()}), 200
            except Exception as e:
                return self._failure(e)

        @self.app.route("/segment", methods=["POST"])
        def segment():
            """
            Body JSON esperado:
            {
                "input": "diretorio do volume ou do conjunto",
                "out": "diretorio de saida das mascaras" (opcional)
            }
            """
            data = self._json_body()
            if data is None:
                return jsonify({"success": False, "error": "Content-Type deve ser application/json"}), 400
            if not str(data.get("input", "")).strip():
                return jsonify({"success": False, "error": "Campo 'input' é obrigatório"}), 400
            try:
                logger.info(f"[API] Segmentacao solicitada: {data['input']}")
                masks = self.system.segment(data["input"], data.get("out"))
                summary = {
                    sample_id: {
                        "extents": list(mask.shape),
                        "voxels_per_class": {int(c): int((mask == c).sum()) for c in sorted(set(mask.ravel().tolist()))},
                    }
                    for sample_id, mask in masks.items()
                }
                return jsonify({"success": True, "samples": summary, "out": data.get("out")}), 200
            except Exception as e:
                return self._failure(e)

        @self.app.route("/evaluate", methods=["POST"])
        def evaluate():
            """
            Body JSON esperado:
            {
                "pred": "diretorio das predicoes",
                "gt": "diretorio das referencias",
                "percentile": 100 (opcional)
            }
            """
            data = self._json_body()
            if data is None:
                return jsonify({"success": False, "error": "Content-Type deve ser application/json"}), 400
            missing = [key for key in ("pred", "gt") if not str(data.get(key, "")).strip()]
            if missing:
                return jsonify({"success": False, "error": f"Campos obrigatorios ausentes: {missing}"}), 400
            try:
                report = self.system.evaluate(data["pred"], data["gt"], percentile=float(data.get("percentile", 100.0)))
                return jsonify({"success": True, "report": report.to_dict()}), 200
            except Exception as e:
                return self._failure(e)

    def run(self, debug: bool = False):
        """
        Inicia o servidor API

        Args:
            debug: Se True, ativa modo debug do Flask
        """
        logger.info(f"[API] Iniciando servidor em http://{self.host}:{self.port}")
        logger.info("[API] Endpoints disponiveis:")
        logger.info("[API]   GET  /health    - Health check")
        logger.info("[API]   GET  /stats     - Configuracao e modelo carregado")
        logger.info("[API]   POST /segment   - Segmentar volumes")
        logger.info("[API]   POST /evaluate  - Avaliar predicoes")

        if not debug:
            logging.getLogger("werkzeug").setLevel(logging.ERROR)

        try:
            self.app.run(host=self.host, port=self.port, debug=debug, use_reloader=False)
        except Exception as e:
            logger.error(f"[API] Erro ao iniciar servidor: {str(e)}")
            raise
