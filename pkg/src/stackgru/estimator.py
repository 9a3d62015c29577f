"""scikit-learn compatible wrapper around the stacked GRU trainer."""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .gru import GruStack
from .numeric import RandomSource
from .training import TrainConfig, predict_windows, train


def _check_windows(X) -> np.ndarray:
    X = check_array(X, dtype=np.float64, allow_nd=True, ensure_2d=False)
    if X.ndim != 3:
        raise ValueError(f"expected windows of shape (n_windows, window_len, n_features), got {X.shape}")
    return X


class StackedGRURegressor(RegressorMixin, BaseEstimator):
    """One-step-ahead regressor over sliding windows.

    Parameters
    ----------
    mode : {"stateful", "stateless"}
        Stateful mode carries hidden state between chronologically adjacent
        batches; it expects ``X`` rows in time order, in ``fit`` and in
        ``predict``.
    hidden_dim : int
        Units per GRU layer.
    n_layers : int
        Number of stacked GRU layers.
    batch_size : int
    epochs : int
    learning_rate : float
        Adam step size.
    clip_norm : float or None
        Global gradient-norm clip applied before each Adam step.
    shuffle : bool
        Shuffle windows each epoch (stateless mode only).
    random_state : int
        Seeds weight initialization and shuffling.

    Attributes
    ----------
    stack_ : GruStack
    history_ : list of EpochRecord
    n_features_in_ : int
    window_len_ : int
    """

    def __init__(self, mode="stateful", hidden_dim=32, n_layers=2, batch_size=24, epochs=100,
                 learning_rate=1e-3, clip_norm=5.0, shuffle=True, random_state=0):
        self.mode = mode
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.shuffle = shuffle
        self.random_state = random_state

    def _config(self, window_len: int) -> TrainConfig:
        return TrainConfig(
            mode=self.mode, window_len=window_len, batch_size=self.batch_size, epochs=self.epochs,
            learning_rate=self.learning_rate, seed=self.random_state, layers=self.n_layers,
            hidden_dim=self.hidden_dim, clip_norm=self.clip_norm, shuffle=self.shuffle,
        )

    def fit(self, X, y, validation_data=None, on_batch=None):
        """Train on windows ``X`` (N, T, F) and targets ``y`` (N,).

        ``validation_data`` is an optional ``(X_val, y_val)`` pair scored each
        epoch from a zero hidden state.
        """
        X = _check_windows(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} windows but y has {len(y)} targets")
        cfg = self._config(X.shape[1])
        val = None
        if validation_data is not None:
            Xv, yv = validation_data
            val = SimpleNamespace(inputs=_check_windows(Xv), targets=np.asarray(yv, dtype=np.float64).ravel())
        stack = init_stack(X.shape[2], cfg)
        self.stack_, self.history_ = train(stack, SimpleNamespace(inputs=X, targets=y), val, cfg, on_batch=on_batch)
        self.n_features_in_ = X.shape[2]
        self.window_len_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "stack_")
        X = _check_windows(X)
        if X.shape[2] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[2]} features, model was fitted with {self.n_features_in_}")
        return predict_windows(self.stack_, X, self.mode, self.batch_size)


def init_stack(n_features: int, cfg: TrainConfig) -> GruStack:
    """Glorot-initialized stack (zero biases) for ``cfg``, seeded by ``cfg.seed``."""
    return GruStack.init(n_features, [cfg.hidden_dim] * cfg.layers, RandomSource(cfg.seed))
