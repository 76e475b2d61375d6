"""
Módulos do Sistema de Segmentação SegMamba
Segmentação 3D multimodal com encoders Mamba, fusão bi-nível e decoder residual, em NumPy
"""

__version__ = "1.0.0"
