"""
Módulo da Linha de Comando
Subcomandos make-data, train, segment, evaluate, gradcheck, ablate, modes e serve
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from modules.errors import SegMambaError
from modules.phantom import PhantomSpec
from modules.segmentation_system import SegmentationSystem

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segmamba",
        description="Segmentacao 3D multimodal com encoders Mamba e fusao bi-nivel",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="substitui todas as sementes da configuracao")
    common.add_argument("--config", default=None, help="documento JSON com secoes net/train/phantom")
    commands = parser.add_subparsers(dest="command", required=True)

    make_data = commands.add_parser("make-data", parents=[common], help="gera phantoms sinteticos")
    make_data.add_argument("--spec", default=None, help="PhantomSpec em JSON (padrao: secao phantom da configuracao)")
    make_data.add_argument("--out", required=True)

    train = commands.add_parser("train", parents=[common], help="treina um modelo")
    train.add_argument("--data", required=True)
    train.add_argument("--out", required=True)

    segment = commands.add_parser("segment", parents=[common], help="segmenta volumes com um modelo salvo")
    segment.add_argument("--model", required=True)
    segment.add_argument("--input", required=True)
    segment.add_argument("--out", required=True)

    evaluate = commands.add_parser("evaluate", parents=[common], help="compara predicoes com referencias")
    evaluate.add_argument("--pred", required=True)
    evaluate.add_argument("--gt", required=True)
    evaluate.add_argument("--report", default=None)
    evaluate.add_argument("--percentile", type=float, default=100.0, help="95 para HD95")

    gradcheck = commands.add_parser("gradcheck", parents=[common], help="bateria de diferencas finitas")
    gradcheck.add_argument("--skip-network", action="store_true")

    ablate = commands.add_parser("ablate", parents=[common], help="executa os quatro modos de ablacao")
    ablate.add_argument("--data", required=True)
    ablate.add_argument("--out", required=True)

    commands.add_parser("modes", parents=[common], help="lista os modos de ablacao")

    serve = commands.add_parser("serve", parents=[common], help="inicia a API REST")
    serve.add_argument("--model", default=None)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=5000)
    return parser


def _load_phantom_spec(path: str) -> PhantomSpec:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return PhantomSpec.from_dict(data.get("phantom", data))


def _emit(document) -> None:
    print(json.dumps(document, indent=2, ensure_ascii=False))


def _run(args) -> int:
    if args.command == "modes":
        SegmentationSystem(args.config, seed=args.seed).config_manager.print_modes()
        return 0

    model = getattr(args, "model", None)
    system = SegmentationSystem(args.config, model_path=model, seed=args.seed)

    if args.command == "make-data":
        spec = _load_phantom_spec(args.spec) if args.spec else None
        if spec is not None and args.seed is not None:
            spec.seed = args.seed
        samples = system.make_data(args.out, spec)
        _emit({"samples": len(samples), "out": args.out})
        return 0

    if args.command == "train":
        log = system.train(args.data, args.out)
        _emit({"model": args.out, "steps": log.steps, "final_loss": log.losses[-1] if log.losses else None,
               "wall_clock": log.wall_clock})
        return 0

    if args.command == "segment":
        masks = system.segment(args.input, args.out)
        _emit({"segmented": sorted(masks), "out": args.out})
        return 0

    if args.command == "evaluate":
        report = system.evaluate(args.pred, args.gt, args.report, args.percentile)
        _emit(report.to_dict())
        return 0

    if args.command == "gradcheck":
        summary = system.gradcheck(include_network=not args.skip_network)
        _emit(summary)
        return 0 if summary["passed"] else 1

    if args.command == "ablate":
        document = system.ablate(args.data, args.out)
        print(document["table"])
        return 0

    if args.command == "serve":
        from modules.api_server import SegmentationAPI

        SegmentationAPI(system, host=args.host, port=args.port).run()
        return 0

    return 2


def cli(argv: Optional[List[str]] = None) -> int:
    """
    Ponto de entrada da linha de comando

    Args:
        argv: Argumentos (padrão: sys.argv[1:])

    Returns:
        0 em sucesso, 1 em erro de execução, 2 em erro de uso
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2

    try:
        return _run(args)
    except (SegMambaError, OSError, json.JSONDecodeError) as e:
        logger.error(f"[ERRO] {type(e).__name__}: {e}")
        print(json.dumps({"error": type(e).__name__, "message": str(e)}, ensure_ascii=False), file=sys.stderr)
        return 1
