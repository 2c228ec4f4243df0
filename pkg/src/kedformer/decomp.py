"""Seasonal-trend decomposition block.

The trend is a replicate-padded centered moving average and the seasonal
part is the residual, so ``seasonal + trend`` reconstructs the input.
"""

from dataclasses import dataclass

from .errors import ConfigurationError
from .numerics import Tensor, as_tensor, avg_pool_1d, sub

DEFAULT_KERNEL = 25


@dataclass(frozen=True)
class DecompPair:
    seasonal: Tensor
    trend: Tensor


def mstw_decompose(x, kernel=DEFAULT_KERNEL):
    """Split ``x`` of shape ``(..., L, d)`` into seasonal and trend parts.

    Differentiable when ``x`` requires a gradient.
    """
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-2] < 1:
        raise ConfigurationError(f"decomposition needs a (..., L, d) input with L >= 1, got {x.shape}")
    trend = avg_pool_1d(x, kernel)
    return DecompPair(seasonal=sub(x, trend), trend=trend)
