"""MSE training of a GruStack in stateless or stateful mode with Adam.

Stateless: every batch starts from a zero hidden state; windows may be
shuffled. Stateful: windows are laid out in contiguous chronological
stripes, one stripe per batch slot, and the final hidden state of batch
``k`` is the initial state of batch ``k + 1``. The state is reset to zero
at the start of every epoch. In both modes gradients stop at the batch's
initial state (truncated BPTT); only values are carried.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional

import numpy as np

from .gru import GruStack, HiddenState, stack_backward, stack_forward, zero_state
from .numeric import RandomSource, ShapeError

logger = logging.getLogger(__name__)

MODES = ("stateless", "stateful")


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss becomes non-finite."""


@dataclass
class TrainConfig:
    mode: str = "stateful"
    window_len: int = 24
    horizon: int = 1
    batch_size: int = 24
    epochs: int = 100
    learning_rate: float = 1e-3
    seed: int = 0
    layers: int = 2
    hidden_dim: int = 32
    clip_norm: Optional[float] = 5.0
    shuffle: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if self.horizon != 1:
            raise ValueError("only one-step-ahead forecasting (horizon=1) is supported")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.layers < 1 or self.hidden_dim < 1:
            raise ValueError("layers and hidden_dim must be >= 1")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_loss: float


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_stack(cls, stack: GruStack) -> "AdamState":
        arrays = stack.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over the batch and its gradient w.r.t. ``pred``."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def clip_by_global_norm(grads: GruStack, max_norm: float) -> float:
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    arrays = grads.arrays()
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in arrays))
    if norm > max_norm:
        factor = max_norm / norm
        for g in arrays:
            g *= factor
    return norm


def adam_step(params: GruStack, grads: GruStack, st: AdamState, lr: float):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    st.step += 1
    b1, b2 = st.beta1, st.beta2
    c1 = 1.0 - b1**st.step
    c2 = 1.0 - b2**st.step
    for p, g, m, v in zip(params.arrays(), grads.arrays(), st.m, st.v):
        if p.shape != g.shape:
            raise ShapeError(f"adam_step: parameter {p.shape} vs gradient {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + st.eps)
    return params, st


def shuffle_source(seed: int) -> RandomSource:
    """Shuffling stream for ``seed``, kept apart from the weight-init stream."""
    return RandomSource((int(seed) + 0x9E3779B97F4A7C15) % 2**64)


def make_batches(n_windows: int, cfg: TrainConfig, rng: Optional[RandomSource] = None) -> List[np.ndarray]:
    """Window indices for each batch of one epoch.

    Stateful mode uses ``S = n_windows // batch_size`` stripes: slot ``i`` of
    batch ``k`` is window ``i * S + k``, so each slot walks forward through
    time one window per batch. The trailing ``n_windows % batch_size``
    windows are dropped. Stateless mode keeps every window and shuffles
    with ``rng`` when ``cfg.shuffle`` is set.
    """
    if hasattr(n_windows, "targets"):
        n_windows = len(n_windows.targets)
    b = cfg.batch_size
    if n_windows < b:
        raise ValueError(f"dataset of {n_windows} windows is smaller than one batch ({b})")
    if cfg.mode == "stateful":
        stripe = n_windows // b
        starts = np.arange(b) * stripe
        return [starts + k for k in range(stripe)]
    order = np.arange(n_windows)
    if cfg.shuffle:
        order = (rng or shuffle_source(cfg.seed)).permutation(n_windows)
    return [order[i:i + b] for i in range(0, n_windows, b)]


def window_batch(inputs: np.ndarray, idx) -> List[np.ndarray]:
    """Slice windows ``idx`` of an ``(N, T, F)`` array into T matrices of ``F x B``."""
    block = inputs[idx]  # B, T, F
    return list(np.ascontiguousarray(block.transpose(1, 2, 0)))


BatchHook = Callable[[int, int, HiddenState, HiddenState], None]


def train(
    stack: GruStack,
    train_ds,
    val_ds,
    cfg: TrainConfig,
    on_batch: Optional[BatchHook] = None,
):
    """Train ``stack`` in place; return ``(stack, epoch_records)``.

    ``train_ds`` and ``val_ds`` expose ``inputs`` (N x T x F) and ``targets``
    (N,). Validation loss is measured each epoch from a zero hidden state in
    both modes. ``on_batch(epoch, batch, init_state, final_state)`` is called
    after every forward pass when given.
    """
    inputs = np.asarray(train_ds.inputs, dtype=np.float64)
    targets = np.asarray(train_ds.targets, dtype=np.float64)
    if inputs.shape[2] != stack.input_dim:
        raise ShapeError(f"dataset has {inputs.shape[2]} features, stack expects {stack.input_dim}")
    rng = shuffle_source(cfg.seed)
    adam = AdamState.for_stack(stack)
    records: List[EpochRecord] = []

    for epoch in range(1, cfg.epochs + 1):
        batches = make_batches(len(targets), cfg, rng)
        state = zero_state(stack, cfg.batch_size) if cfg.mode == "stateful" else None
        total, count = 0.0, 0
        for bi, idx in enumerate(batches):
            seq = window_batch(inputs, idx)
            init = state if cfg.mode == "stateful" else zero_state(stack, len(idx))
            preds, final, cache = stack_forward(seq, init, stack)
            if on_batch is not None:
                on_batch(epoch, bi, init, final)
            loss, d_last = mse_loss(preds[-1], targets[idx].reshape(1, -1))
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}, batch {bi}")
            d_preds = [np.zeros_like(p) for p in preds[:-1]] + [d_last]
            grads, _ = stack_backward(cache, d_preds, stack)
            if cfg.clip_norm is not None:
                clip_by_global_norm(grads, cfg.clip_norm)
            adam_step(stack, grads, adam, cfg.learning_rate)
            if cfg.mode == "stateful":
                state = final
            total += loss * len(idx)
            count += len(idx)

        val_loss = evaluate_loss(stack, val_ds) if val_ds is not None else float("nan")
        if val_ds is not None and not math.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        records.append(EpochRecord(epoch, total / count, val_loss))
        logger.debug("epoch %d loss %.6f val_loss %.6f", epoch, total / count, val_loss)
    return stack, records


def predict_windows(stack: GruStack, inputs: np.ndarray, mode: str = "stateless", batch_size: int = 24) -> np.ndarray:
    """Normalized one-step predictions for every window in ``inputs``.

    Stateless: each window starts from a zero state. Stateful: windows are
    split into at most ``batch_size`` contiguous chronological stripes and
    the state is carried from each window to its successor in the stripe,
    mirroring how the model saw data during stateful training. Unlike
    training, no window is dropped; the last stripe may be shorter.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    n = inputs.shape[0]
    if n == 0:
        return np.zeros(0)
    if mode == "stateless":
        preds, _, _ = stack_forward(window_batch(inputs, np.arange(n)), zero_state(stack, n), stack)
        return preds[-1].ravel().copy()
    if mode != "stateful":
        raise ValueError(f"unknown mode {mode!r}")
    stripe = math.ceil(n / min(batch_size, n))
    starts = np.arange(0, n, stripe)
    out = np.empty(n)
    state = zero_state(stack, len(starts))
    for k in range(stripe):
        idx = starts + k
        active = int(np.sum(idx < n))
        idx = idx[:active]
        init = [h[:, :active] for h in state]
        preds, state, _ = stack_forward(window_batch(inputs, idx), init, stack)
        out[idx] = preds[-1].ravel()
    return out


def evaluate_loss(stack: GruStack, ds) -> float:
    """Zero-state MSE over every window of ``ds``."""
    preds = predict_windows(stack, ds.inputs, "stateless")
    diff = preds - np.asarray(ds.targets, dtype=np.float64)
    return float(np.mean(diff * diff))
