"""Stacked GRU: forward pass, truncated BPTT, and checkpoint I/O.

Column-major batch convention throughout: an input step is ``D x B``, a
hidden state is ``H x B``. One cell step computes::

    z  = sigmoid(W_z x + U_z h + b_z)          update gate
    r  = sigmoid(W_r x + U_r h + b_r)          reset gate
    c~ = tanh(W_h x + U_h (r * h) + b_h)       candidate
    h' = z * c~ + (1 - z) * h

so ``z -> 1`` overwrites the state with the candidate and ``z -> 0`` keeps
the previous state untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .numeric import (
    RandomSource,
    ShapeError,
    add,
    add_bias,
    glorot_init,
    hadamard,
    matmul,
    sigmoid,
    sum_columns,
    tanh_act,
    transpose,
    zeros,
)

GATE_PARAMS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")

CHECKPOINT_MAGIC = "stackgru-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class GruLayerParams:
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        h, d = self.W_z.shape
        for name in GATE_PARAMS:
            arr = getattr(self, name)
            expected = {"W": (h, d), "U": (h, h), "b": (h, 1)}[name[0]]
            if arr.shape != expected:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {expected}")

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_z.shape[0]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: RandomSource) -> "GruLayerParams":
        arrays = {}
        for name in GATE_PARAMS:
            if name[0] == "W":
                arrays[name] = glorot_init(hidden_dim, input_dim, rng)
            elif name[0] == "U":
                arrays[name] = glorot_init(hidden_dim, hidden_dim, rng)
            else:
                arrays[name] = zeros(hidden_dim, 1)
        return cls(**arrays)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "GruLayerParams":
        shapes = {"W": (hidden_dim, input_dim), "U": (hidden_dim, hidden_dim), "b": (hidden_dim, 1)}
        return cls(**{name: zeros(*shapes[name[0]]) for name in GATE_PARAMS})


@dataclass
class GruStack:
    """L stacked GRU layers followed by a linear scalar head."""

    layers: List[GruLayerParams]
    W_out: np.ndarray
    b_out: np.ndarray = field(default_factory=lambda: zeros(1, 1))

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("a GruStack needs at least one layer")
        for below, above in zip(self.layers, self.layers[1:]):
            if above.input_dim != below.hidden_dim:
                raise ShapeError(
                    f"layer input_dim {above.input_dim} does not match "
                    f"previous hidden_dim {below.hidden_dim}"
                )
        if self.W_out.shape != (1, self.layers[-1].hidden_dim):
            raise ShapeError(f"W_out has shape {self.W_out.shape}, expected (1, {self.layers[-1].hidden_dim})")
        if self.b_out.shape != (1, 1):
            raise ShapeError(f"b_out has shape {self.b_out.shape}, expected (1, 1)")

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def hidden_dims(self) -> List[int]:
        return [layer.hidden_dim for layer in self.layers]

    @classmethod
    def init(cls, input_dim: int, hidden_dims: Sequence[int], rng: RandomSource) -> "GruStack":
        layers = []
        d = input_dim
        for h in hidden_dims:
            layers.append(GruLayerParams.init(d, h, rng))
            d = h
        return cls(layers, glorot_init(1, d, rng), zeros(1, 1))

    def arrays(self) -> List[np.ndarray]:
        """All parameter arrays in canonical order (layer by layer, then head)."""
        out = [getattr(layer, name) for layer in self.layers for name in GATE_PARAMS]
        out.append(self.W_out)
        out.append(self.b_out)
        return out

    def named_arrays(self):
        for i, layer in enumerate(self.layers):
            for name in GATE_PARAMS:
                yield f"layer{i}.{name}", getattr(layer, name)
        yield "W_out", self.W_out
        yield "b_out", self.b_out

    def zeros_like(self) -> "GruStack":
        return GruStack(
            [GruLayerParams.zeros(l.input_dim, l.hidden_dim) for l in self.layers],
            zeros(*self.W_out.shape),
            zeros(1, 1),
        )

    def copy(self) -> "GruStack":
        return GruStack(
            [GruLayerParams(**{n: getattr(l, n).copy() for n in GATE_PARAMS}) for l in self.layers],
            self.W_out.copy(),
            self.b_out.copy(),
        )


HiddenState = List[np.ndarray]
"""One ``H_l x B`` matrix per layer."""


def zero_state(stack: GruStack, batch: int) -> HiddenState:
    return [zeros(h, batch) for h in stack.hidden_dims]


@dataclass
class StepCache:
    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    cand: np.ndarray
    h: np.ndarray


@dataclass
class ForwardCache:
    """``steps[l][t]`` holds the activations of layer ``l`` at step ``t``."""

    steps: List[List[StepCache]]

    @property
    def length(self) -> int:
        return len(self.steps[0])


def cell_forward(x: np.ndarray, h_prev: np.ndarray, p: GruLayerParams):
    """One GRU step. Returns ``(h_new, step_cache)``."""
    if x.shape[0] != p.input_dim or h_prev.shape[0] != p.hidden_dim or x.shape[1] != h_prev.shape[1]:
        raise ShapeError(
            f"cell_forward: x {x.shape} / h_prev {h_prev.shape} do not fit "
            f"layer (D={p.input_dim}, H={p.hidden_dim})"
        )
    z = sigmoid(add_bias(add(matmul(p.W_z, x), matmul(p.U_z, h_prev)), p.b_z))
    r = sigmoid(add_bias(add(matmul(p.W_r, x), matmul(p.U_r, h_prev)), p.b_r))
    cand = tanh_act(add_bias(add(matmul(p.W_h, x), matmul(p.U_h, hadamard(r, h_prev))), p.b_h))
    h_new = hadamard(z, cand) + hadamard(1.0 - z, h_prev)
    return h_new, StepCache(x, h_prev, z, r, cand, h_new)


def _check_init(init: HiddenState, stack: GruStack, batch: int) -> None:
    if len(init) != len(stack.layers):
        raise ShapeError(f"initial state has {len(init)} layers, stack has {len(stack.layers)}")
    for h, state in zip(stack.hidden_dims, init):
        if state.shape != (h, batch):
            raise ShapeError(f"initial state shape {state.shape}, expected {(h, batch)}")


def stack_forward(seq: Sequence[np.ndarray], init: HiddenState, stack: GruStack):
    """Run the stack over ``seq`` (T matrices of shape ``D x B``).

    Returns ``(preds, final_state, cache)`` where ``preds`` holds one
    ``1 x B`` head output per step.
    """
    if len(seq) == 0:
        raise ValueError("stack_forward: empty input sequence")
    batch = seq[0].shape[1]
    _check_init(init, stack, batch)

    inputs = list(seq)
    steps: List[List[StepCache]] = []
    final: HiddenState = []
    for layer, h in zip(stack.layers, init):
        layer_steps = []
        outputs = []
        for x in inputs:
            h, step = cell_forward(x, h, layer)
            layer_steps.append(step)
            outputs.append(h)
        steps.append(layer_steps)
        final.append(h)
        inputs = outputs

    preds = [add_bias(matmul(stack.W_out, h), stack.b_out) for h in inputs]
    return preds, final, ForwardCache(steps)


def _cell_backward(dh: np.ndarray, s: StepCache, p: GruLayerParams, g: GruLayerParams):
    """Accumulate parameter grads into ``g``; return ``(dx, dh_prev)``."""
    dz = dh * (s.cand - s.h_prev)
    dcand = dh * s.z
    dh_prev = dh * (1.0 - s.z)

    da_h = dcand * (1.0 - s.cand * s.cand)
    rh = s.r * s.h_prev
    g.W_h += da_h @ s.x.T
    g.U_h += da_h @ rh.T
    g.b_h += sum_columns(da_h)
    drh = p.U_h.T @ da_h
    dr = drh * s.h_prev
    dh_prev += drh * s.r
    dx = p.W_h.T @ da_h

    da_r = dr * s.r * (1.0 - s.r)
    g.W_r += da_r @ s.x.T
    g.U_r += da_r @ s.h_prev.T
    g.b_r += sum_columns(da_r)
    dh_prev += p.U_r.T @ da_r
    dx += p.W_r.T @ da_r

    da_z = dz * s.z * (1.0 - s.z)
    g.W_z += da_z @ s.x.T
    g.U_z += da_z @ s.h_prev.T
    g.b_z += sum_columns(da_z)
    dh_prev += p.U_z.T @ da_z
    dx += p.W_z.T @ da_z
    return dx, dh_prev


def stack_backward(cache: ForwardCache, d_preds: Sequence[np.ndarray], stack: GruStack):
    """Reverse pass through time and layers.

    ``d_preds[t]`` is the loss gradient w.r.t. the head output at step ``t``.
    Gradient flow stops at the initial state; its gradient is returned as
    ``d_init`` but never propagated further. Returns ``(grads, d_init)``
    where ``grads`` is a :class:`GruStack` of gradients.
    """
    T = cache.length
    if len(d_preds) != T:
        raise ValueError(f"stack_backward: {len(d_preds)} prediction gradients for a {T}-step cache")
    grads = stack.zeros_like()

    top = cache.steps[-1]
    d_out = []
    W_out_T = transpose(stack.W_out)
    for t in range(T):
        dp = d_preds[t]
        grads.W_out += dp @ top[t].h.T
        grads.b_out += sum_columns(dp)
        d_out.append(W_out_T @ dp)

    d_init: HiddenState = [None] * len(stack.layers)
    for li in range(len(stack.layers) - 1, -1, -1):
        params = stack.layers[li]
        g = grads.layers[li]
        steps = cache.steps[li]
        dh_next = np.zeros_like(steps[0].h_prev)
        d_in = [None] * T
        for t in range(T - 1, -1, -1):
            dx, dh_next = _cell_backward(d_out[t] + dh_next, steps[t], params, g)
            d_in[t] = dx
        d_init[li] = dh_next
        d_out = d_in
    return grads, d_init


def predict(stack: GruStack, window: Sequence[np.ndarray], init: HiddenState) -> np.ndarray:
    """Head output at the last step of ``window``, shape ``1 x B``."""
    preds, _, _ = stack_forward(window, init, stack)
    return preds[-1]


# --------------------------------------------------------------------------
# checkpoint file
#
#   stackgru-checkpoint 1 <layers> <input_dim> <h_1> ... <h_L>
#   one line per array in GruStack.arrays() order, row-major, each value
#   written as Python's shortest round-trip repr of the double.


def format_checkpoint(stack: GruStack) -> str:
    header = [CHECKPOINT_MAGIC, str(CHECKPOINT_VERSION), str(len(stack.layers)), str(stack.input_dim)]
    header += [str(h) for h in stack.hidden_dims]
    lines = [" ".join(header)]
    for arr in stack.arrays():
        lines.append(" ".join(repr(float(v)) for v in arr.ravel()))
    return "\n".join(lines) + "\n"


def parse_checkpoint(text: str) -> GruStack:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty checkpoint")
    head = lines[0].split()
    if len(head) < 4 or head[0] != CHECKPOINT_MAGIC:
        raise ValueError("not a stackgru checkpoint")
    if int(head[1]) != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {head[1]}")
    n_layers, input_dim = int(head[2]), int(head[3])
    hidden = [int(h) for h in head[4:]]
    if len(hidden) != n_layers:
        raise ValueError("checkpoint header lists wrong number of hidden sizes")

    template = GruStack([GruLayerParams.zeros(d, h) for d, h in zip([input_dim] + hidden[:-1], hidden)],
                        zeros(1, hidden[-1]), zeros(1, 1))
    arrays = template.arrays()
    body = lines[1:]
    if len(body) != len(arrays):
        raise ValueError(f"checkpoint has {len(body)} arrays, expected {len(arrays)}")
    for i, (arr, line) in enumerate(zip(arrays, body)):
        values = [float(v) for v in line.split()]
        if len(values) != arr.size:
            raise ValueError(f"checkpoint array {i}: {len(values)} values, expected {arr.size}")
        arr[...] = np.asarray(values, dtype=np.float64).reshape(arr.shape)
    return template


def save_checkpoint(stack: GruStack, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(format_checkpoint(stack))


def load_checkpoint(path) -> GruStack:
    with open(path, encoding="ascii") as f:
        return parse_checkpoint(f.read())
