import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stackgru.gru import GruStack  # noqa: E402
from stackgru.numeric import RandomSource  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def random_stack(seed, input_dim=3, hidden=(4, 4), bias_scale=0.5):
    """Glorot stack with non-zero biases so every parameter gets exercised."""
    rng = RandomSource(seed)
    stack = GruStack.init(input_dim, list(hidden), rng)
    for arr in stack.arrays():
        if arr.shape[1] == 1:
            arr[...] = rng.uniform(-bias_scale, bias_scale, arr.shape)
    return stack


def random_seq(seed, T, D, B):
    gen = np.random.default_rng(seed)
    return [gen.normal(size=(D, B)) for _ in range(T)]


@pytest.fixture
def small_stack():
    return random_stack(11)
