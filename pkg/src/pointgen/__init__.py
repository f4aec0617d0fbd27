"""Autoregressive point-by-point 3D point cloud generation.

Core pieces: a small reverse-mode autodiff engine over float64 matrices
(`autodiff`), point cloud preparation (`data`), prefix context operators
(`context`), the three-branch coordinate model (`model`), sequential
sampling (`sampler`), evaluation artifacts (`evaluate`), checkpoints
(`checkpoint`) and the command-line interface (`cli`).
"""

from .context import ContextOpKind
from .data import Dataset, QuantizedPointCloud, TriangleMesh
from .model import Model, ModelConfig
from .sampler import SamplerSettings, complete, generate

__all__ = [
    "ContextOpKind",
    "Dataset",
    "QuantizedPointCloud",
    "TriangleMesh",
    "Model",
    "ModelConfig",
    "SamplerSettings",
    "complete",
    "generate",
]

__version__ = "0.1.0"
