"""Series ingestion, chronological splits, scaling and rolling windows."""

import csv
import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IngestionError, InsufficientDataError, OrderingError

SYNTHETIC_KINDS = ("sine_trend", "multi_period", "random_walk")


@dataclass(frozen=True)
class SeriesFrame:
    timestamps: np.ndarray  # float seconds since epoch (or plain step index)
    values: np.ndarray  # (T, D)
    names: tuple = field(default_factory=tuple)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise IngestionError(f"values must be (T, D), got shape {values.shape}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", np.asarray(self.timestamps, dtype=np.float64))
        if not self.names:
            object.__setattr__(self, "names", tuple(f"f{i}" for i in range(values.shape[1])))

    def __len__(self):
        return self.values.shape[0]

    @property
    def n_features(self):
        return self.values.shape[1]

    def slice(self, start, stop):
        return SeriesFrame(self.timestamps[start:stop], self.values[start:stop], self.names)

    def with_values(self, values):
        return SeriesFrame(self.timestamps, values, self.names)


def _parse_timestamp(text):
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    stamp = dt.datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=dt.timezone.utc)
    return stamp.timestamp()


def load_csv(path, forward_fill=False):
    """Read ``timestamp, feature...`` rows into a :class:`SeriesFrame`.

    The timestamp column accepts ISO-8601 strings or epoch numbers. Empty
    cells are an error unless ``forward_fill`` is set, in which case they
    take the previous row's value (a gap in the first row is still an error).
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path} is empty") from None
        if len(header) < 2:
            raise IngestionError(f"{path}: need a timestamp column and at least one feature")
        names = tuple(h.strip() for h in header[1:])
        stamps, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise IngestionError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                stamp = _parse_timestamp(row[0])
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: unparseable timestamp {row[0]!r}") from None
            values = []
            for col, cell in enumerate(row[1:], start=1):
                cell = cell.strip()
                if not cell:
                    if forward_fill and rows:
                        values.append(rows[-1][col - 1])
                        continue
                    raise IngestionError(f"{path}:{lineno}: missing value in column {header[col]!r}")
                try:
                    value = float(cell)
                except ValueError:
                    raise IngestionError(f"{path}:{lineno}: non-numeric value {cell!r}") from None
                if not math.isfinite(value):
                    raise IngestionError(f"{path}:{lineno}: non-finite value {cell!r}")
                values.append(value)
            if stamps and stamp <= stamps[-1]:
                raise OrderingError(f"{path}:{lineno}: timestamp {row[0]!r} does not follow the previous row")
            stamps.append(stamp)
            rows.append(values)
    if not rows:
        raise IngestionError(f"{path} has no data rows")
    return SeriesFrame(np.array(stamps), np.array(rows), names)


def save_csv(frame, path, timestamp_header="date"):
    """Inverse of :func:`load_csv`; values written with round-trip precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([timestamp_header, *frame.names])
        for stamp, row in zip(frame.timestamps, frame.values):
            writer.writerow([format_timestamp(stamp), *(repr(float(v)) for v in row)])


def format_timestamp(stamp):
    if float(stamp).is_integer() and abs(stamp) < 1e7:
        return str(int(stamp))
    return dt.datetime.fromtimestamp(float(stamp), tz=dt.timezone.utc).strftime("%Y-%m-%d %H:%M:%S")


# ------------------------------------------------------------------ splits
@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2

    def __post_init__(self):
        ratios = (self.train, self.val, self.test)
        if any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
            raise ConfigurationError(f"split ratios must be non-negative and sum to 1, got {ratios}")


def split_bounds(T, spec):
    """Segment boundaries ``(0, a, b, T)`` with ``a = floor(train*T)``, ``b = a + floor(val*T)``."""
    a = math.floor(spec.train * T + 1e-9)
    b = a + math.floor(spec.val * T + 1e-9)
    return 0, a, b, T


def chronological_split(frame, spec=SplitSpec(), min_len=1):
    """Contiguous train/val/test segments; each must hold ``min_len`` rows."""
    bounds = split_bounds(len(frame), spec)
    parts = [frame.slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    for name, part in zip(("train", "val", "test"), parts):
        if len(part) < max(min_len, 1):
            raise InsufficientDataError(
                f"{name} split has {len(part)} rows, needs at least {max(min_len, 1)}"
            )
    return tuple(parts)


# ----------------------------------------------------------------- scaling
@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    STD_FLOOR = 1e-8

    @classmethod
    def fit(cls, values):
        values = np.asarray(values, dtype=np.float64)
        return cls(values.mean(axis=0), np.maximum(values.std(axis=0), cls.STD_FLOOR))

    def transform(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values):
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    def to_dict(self):
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, data):
        return cls(np.array(data["mean"], dtype=np.float64), np.array(data["std"], dtype=np.float64))


def standardize(train, *others):
    """Scale every frame with per-feature statistics of ``train`` only.

    Returns ``(scaled_frames, scaler)`` with ``scaled_frames`` in input order.
    """
    scaler = Scaler.fit(train.values)
    frames = [train, *others]
    return tuple(f.with_values(scaler.transform(f.values)) for f in frames), scaler


# ----------------------------------------------------------------- windows
@dataclass(frozen=True)
class WindowSample:
    x: np.ndarray
    y: np.ndarray
    origin: int


def window_count(T, input_len, horizon, stride=1):
    if T < input_len + horizon:
        return 0
    return (T - input_len - horizon) // stride + 1


def windows(frame, input_len, horizon, stride=1):
    """Rolling ``(x, y)`` pairs in time order; ``y`` starts right after ``x``."""
    values = frame.values if isinstance(frame, SeriesFrame) else np.asarray(frame)
    if stride < 1:
        raise ConfigurationError(f"stride must be positive, got {stride}")
    count = window_count(len(values), input_len, horizon, stride)
    if count == 0:
        raise InsufficientDataError(
            f"series of length {len(values)} is shorter than input_len + horizon = {input_len + horizon}"
        )
    return [
        WindowSample(values[t:t + input_len], values[t + input_len:t + input_len + horizon], t)
        for t in range(0, count * stride, stride)
    ]


def window_arrays(frame, input_len, horizon, stride=1):
    """Stacked windows: ``X`` of shape ``(N, I, D)`` and ``Y`` of shape ``(N, O, D)``."""
    samples = windows(frame, input_len, horizon, stride)
    return np.stack([s.x for s in samples]), np.stack([s.y for s in samples])


# --------------------------------------------------------------- synthetic
def synth_generate(kind, T, D=1, noise=0.1, seed=0, period=24, long_period=168):
    """Deterministic synthetic series; feature ``j`` uses phase ``2*pi*j/D``.

    ``sine_trend``:   t/T + sin(2*pi*t/period + phase) + noise*e_t
    ``multi_period``: sin(2*pi*t/period + phase) + sin(2*pi*t/long_period + phase) + noise*e_t
    ``random_walk``:  cumulative sum of noise*e_t
    with ``e_t`` i.i.d. standard normal from ``numpy.random.default_rng(seed)``.
    Timestamps are the integer step index.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ConfigurationError(f"unknown synthetic kind {kind!r}; expected one of {SYNTHETIC_KINDS}")
    rng = np.random.default_rng(seed)
    t = np.arange(T, dtype=np.float64)[:, None]
    phase = 2 * np.pi * np.arange(D)[None, :] / D
    eps = rng.standard_normal((T, D))
    if kind == "sine_trend":
        values = t / T + np.sin(2 * np.pi * t / period + phase) + noise * eps
    elif kind == "multi_period":
        values = (np.sin(2 * np.pi * t / period + phase) + np.sin(2 * np.pi * t / long_period + phase)
                  + noise * eps)
    else:
        values = np.cumsum(noise * eps, axis=0)
    return SeriesFrame(np.arange(T, dtype=np.float64), values, tuple(f"x{j}" for j in range(D)))
