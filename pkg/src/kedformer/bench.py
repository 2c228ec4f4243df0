"""Attention scaling benchmark: median wall-clock per length and log-log slopes."""

import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .keda import AttentionConfig, Variant, keda_attention

DEFAULT_GRID = (256, 512, 1024, 2048, 4096, 8192)


@dataclass
class BenchRow:
    mechanism: str
    length: int
    seconds: float


def time_call(fn, repeats):
    """Median of ``repeats`` timings after one untimed warm-up call."""
    fn()
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return float(np.median(samples))


def loglog_slope(lengths, seconds):
    """Least-squares slope of log(seconds) against log(length)."""
    slope, _ = np.polyfit(np.log(np.asarray(lengths, float)), np.log(np.asarray(seconds, float)), 1)
    return float(slope)


def run_scaling(grid=DEFAULT_GRID, repeats=5, d_model=64, heads=8, factor=3.0, seed=0, threads=1):
    """Time the knowledge-extraction and canonical forward passes over ``grid``.

    Returns ``(rows, slopes)`` where ``slopes`` maps mechanism name to the
    fitted log-log exponent. BLAS is pinned to ``threads`` worker threads.
    """
    rng = np.random.default_rng(seed)
    mechanisms = {
        "KEDatt": AttentionConfig(factor=factor, heads=heads, variant=Variant.KEDATT),
        "canonical": AttentionConfig(factor=factor, heads=heads, variant=Variant.CANONICAL),
    }
    rows = []
    with threadpool_limits(limits=threads):
        for length in grid:
            q, k, v = (rng.standard_normal((length, d_model)) for _ in range(3))
            for name, cfg in mechanisms.items():
                seconds = time_call(lambda: keda_attention(q, k, v, cfg), repeats)
                rows.append(BenchRow(name, int(length), seconds))
    slopes = {
        name: loglog_slope([r.length for r in rows if r.mechanism == name],
                           [r.seconds for r in rows if r.mechanism == name])
        for name in mechanisms
    }
    return rows, slopes
