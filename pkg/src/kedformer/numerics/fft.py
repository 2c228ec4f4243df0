"""Real FFT helpers.

Backed by ``numpy.fft`` (pocketfft), which is mixed-radix: any length is
transformed exactly, so correlations stay circular without padding.
"""

import numpy as np

from ..errors import ConfigurationError


def real_fft(x, axis=-1):
    """Half spectrum of a real sequence: ``L // 2 + 1`` complex bins."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] < 1:
        raise ConfigurationError("real_fft needs at least one sample")
    return np.fft.rfft(x, axis=axis)


def inverse_real_fft(spectrum, n, axis=-1):
    """Inverse of :func:`real_fft`; ``n`` is the original length."""
    return np.fft.irfft(spectrum, n=n, axis=axis)
