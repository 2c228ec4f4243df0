"""Adam training loop with decoupled weight decay, early stopping, metrics and naive baselines."""

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericError
from .model import forward
from .numerics import Tensor, mse_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    weight_decay: float = 0.1
    max_epochs: int = 10
    patience: int = 3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigurationError("learning rate and weight decay must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("batch size, max epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise ConfigurationError(f"patience {self.patience} exceeds max epochs {self.max_epochs}")

    def to_dict(self):
        return asdict(self)


# ----------------------------------------------------------------- metrics
def _check_pair(pred, target):
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"metric shape mismatch: {pred.shape} vs {target.shape}")
    return pred, target


def mse(pred, target):
    pred, target = _check_pair(pred, target)
    return float(np.mean((pred - target) ** 2))


def mae(pred, target):
    pred, target = _check_pair(pred, target)
    return float(np.mean(np.abs(pred - target)))


# --------------------------------------------------------------- baselines
def baseline_persistence(x, horizon):
    """Repeat the last observed row ``horizon`` times."""
    x = np.asarray(x, dtype=np.float64)
    return np.repeat(x[..., -1:, :], horizon, axis=-2)


def baseline_seasonal_naive(x, horizon, period):
    """Tile the last ``period`` rows forward."""
    x = np.asarray(x, dtype=np.float64)
    if not 1 <= period <= x.shape[-2]:
        raise ConfigurationError(f"period {period} must lie in [1, {x.shape[-2]}]")
    last = x[..., x.shape[-2] - period:, :]
    index = np.arange(horizon) % period
    return last[..., index, :]


def baseline_mean(x, horizon):
    x = np.asarray(x, dtype=np.float64)
    return np.repeat(x.mean(axis=-2, keepdims=True), horizon, axis=-2)


# --------------------------------------------------------------- optimizer
class AdamState:
    def __init__(self, params, cfg):
        self.cfg = cfg
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def adam_step(params, grads, state):
    """One Adam update with decoupled weight decay, in place.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
    """
    cfg = state.cfg
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {name}")
    state.t += 1
    c1 = 1.0 - cfg.beta1 ** state.t
    c2 = 1.0 - cfg.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name] = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        v = state.v[name] = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + cfg.eps) + cfg.weight_decay * p.data
        p.data = p.data - cfg.lr * update


# -------------------------------------------------------------------- loop
def frozen(params):
    """Gradient-free view of a parameter dict (cheaper forward passes)."""
    return {name: Tensor(p.data) for name, p in params.items()}


def predict_batched(model, X, batch_size=256):
    params = frozen(model.params)
    out = [forward(X[i:i + batch_size], params, model.cfg).data for i in range(0, len(X), batch_size)]
    return np.concatenate(out, axis=0)


def evaluate(model, X, Y, batch_size=256):
    pred = predict_batched(model, X, batch_size)
    return {"mse": mse(pred, Y), "mae": mae(pred, Y)}


def train_loop(model, train_xy, val_xy, cfg, epoch_hook=None):
    """Train ``model`` in place; returns ``history`` (one dict per epoch).

    The parameters of the best validation epoch are restored before
    returning. ``epoch_hook(epoch, model)`` runs after each epoch's updates
    and before validation.
    """
    X, Y = train_xy
    Xv, Yv = val_xy
    rng = np.random.default_rng(cfg.seed)
    state = AdamState(model.params, cfg)
    names = list(model.params)
    history = []
    best_val, best_state, stale = np.inf, model.state(), 0
    for epoch in range(1, cfg.max_epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(X))
        losses = []
        for b, lo in enumerate(range(0, len(X), cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            for p in model.parameters():
                p.zero_grad()
            try:
                loss = mse_loss(forward(X[idx], model.params, model.cfg), Y[idx])
                loss.backward()
                adam_step(model.params, {n: model.params[n].grad for n in names}, state)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from exc
            losses.append(float(loss.data))
        if epoch_hook is not None:
            epoch_hook(epoch, model)
        val = evaluate(model, Xv, Yv)["mse"]
        seconds = time.perf_counter() - start
        history.append({"epoch": epoch, "train_mse": float(np.mean(losses)), "val_mse": val, "seconds": seconds})
        log.info("epoch %d train %.5f val %.5f (%.1fs)", epoch, history[-1]["train_mse"], val, seconds)
        if val < best_val:
            best_val, best_state, stale = val, model.state(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state(best_state)
    return history
