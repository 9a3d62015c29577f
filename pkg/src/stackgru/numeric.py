"""Dense float64 matrix helpers and a seedable random source.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The
helpers here differ from raw numpy in one respect: they never broadcast.
Shapes must agree exactly, and a mismatch raises :class:`ShapeError`
naming both operands.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when matrix operands have incompatible shapes."""


def as_matrix(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce ``values`` to a finite 2-D float64 array.

    A 1-D input becomes a column vector.
    """
    m = np.asarray(values, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got array with ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got shape {m.shape}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeError(f"expected {cols} cols, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or infinite entries")
    return m


def zeros(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols), dtype=np.float64)


def _check_same(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same(a, b, "add")
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same(a, b, "sub")
    return a - b


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same(a, b, "hadamard")
    return a * b


def scale(a: np.ndarray, s: float) -> np.ndarray:
    return a * float(s)


def transpose(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.T)


def add_bias(a: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Add the column vector ``bias`` (shape ``(rows, 1)``) to every column of ``a``."""
    if bias.ndim != 2 or bias.shape != (a.shape[0], 1):
        raise ShapeError(f"add_bias: bias {bias.shape} does not fit matrix {a.shape}")
    return a + bias


def sum_columns(a: np.ndarray) -> np.ndarray:
    """Row sums as a column vector; the adjoint of :func:`add_bias`."""
    return a.sum(axis=1, keepdims=True)


def sigmoid(a: np.ndarray) -> np.ndarray:
    # tanh form: overflow-free for any finite input.
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def tanh_act(a: np.ndarray) -> np.ndarray:
    return np.tanh(a)


class RandomSource:
    """Seeded random stream backed by numpy's PCG64 bit generator.

    PCG64 output for a given seed is fixed by numpy's stream-compatibility
    policy and does not depend on the platform, so a seed fully determines
    every draw.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def normal(self, loc: float = 0.0, scale: float = 1.0, shape=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def spawn_seed(self) -> int:
        """Draw a fresh seed for a child stream."""
        return int(self._gen.integers(0, 2**63))


def glorot_init(rows: int, cols: int, rng: RandomSource) -> np.ndarray:
    """Glorot-uniform matrix with entries in ``±sqrt(6 / (rows + cols))``."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"glorot_init: dimensions must be positive, got ({rows}, {cols})")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, (rows, cols))
