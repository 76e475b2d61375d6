"""
Módulo de Erros
Hierarquia de exceções usada por todos os módulos do sistema
"""


class SegMambaError(Exception):
    """Erro base do sistema de segmentação"""


class ShapeError(SegMambaError, ValueError):
    """Formas de tensores incompatíveis com o contrato da operação"""


class ConfigError(SegMambaError, ValueError):
    """Configuração inválida ou divergente"""


class VolumeFormatError(SegMambaError, ValueError):
    """Cabeçalho ou payload de volume inconsistente"""


class ModelFileError(SegMambaError, ValueError):
    """Arquivo de modelo corrompido ou incompatível"""


class TrainingAborted(SegMambaError, RuntimeError):
    """Treino interrompido por perda ou gradiente não finito"""

    def __init__(self, message: str, parameter: str = None):
        super().__init__(message)
        self.parameter = parameter


class LabelError(SegMambaError, ValueError):
    """Rótulo fora do mapa de classes avaliado"""
