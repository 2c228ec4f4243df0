"""Long-sequence forecasting with seasonal-trend decomposition and knowledge-extraction attention."""

__version__ = "0.1.0"

from .decomp import DecompPair, mstw_decompose
from .errors import (
    ConfigurationError,
    DimensionError,
    IncompatibleCheckpointError,
    IngestionError,
    InsufficientDataError,
    KedformerError,
    NumericError,
    OrderingError,
)
from .keda import AttentionConfig, Variant, keda_attention
from .model import KEDformer, ModelConfig, configure_ablation
from .train import TrainConfig, train_loop

__all__ = [
    "AttentionConfig", "ConfigurationError", "DecompPair", "DimensionError", "IncompatibleCheckpointError",
    "IngestionError", "InsufficientDataError", "KEDformer", "KedformerError", "ModelConfig", "NumericError",
    "OrderingError", "TrainConfig", "Variant", "configure_ablation", "keda_attention", "mstw_decompose",
    "train_loop",
]
