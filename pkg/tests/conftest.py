import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sparseconv import kernels
from sparseconv.csr import prune_by_magnitude
from sparseconv.tensor import ConvShape, random_tensor

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session", autouse=True)
def _compiled_kernels():
    kernels.warmup()


def brute_conv(x, w, stride, pad):
    """Float64 convolution by explicit window sums, independent of the engines."""
    n, c, h, wd = x.shape
    m, _, r, s = w.shape
    e = (h + 2 * pad - r) // stride + 1
    f = (wd + 2 * pad - s) // stride + 1
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    out = np.zeros((n, m, e, f))
    for i in range(e):
        for j in range(f):
            win = xp[:, :, i * stride:i * stride + r, j * stride:j * stride + s]
            out[:, :, i, j] = np.tensordot(win, w.astype(np.float64), axes=([1, 2, 3], [1, 2, 3]))
    return out


def random_layer(rng: np.random.Generator, max_n=4, max_cm=16, max_hw=32, sparsity=None):
    """Random shape from the engine-equivalence grid plus matching data."""
    while True:
        r = int(rng.choice([1, 3, 5]))
        s = int(rng.choice([1, 3, 5]))
        stride = int(rng.choice([1, 2]))
        pad = int(rng.choice([0, 1, 2]))
        h = int(rng.integers(1, max_hw + 1))
        w = int(rng.integers(1, max_hw + 1))
        if h + 2 * pad >= r and w + 2 * pad >= s:
            break
    shape = ConvShape(
        n=int(rng.integers(1, max_n + 1)), m=int(rng.integers(1, max_cm + 1)),
        c=int(rng.integers(1, max_cm + 1)), h=h, w=w, r=r, s=s, stride=stride, pad=pad,
    )
    sp = float(rng.choice([0.0, 0.5, 0.8, 0.9, 0.95])) if sparsity is None else sparsity
    seed = int(rng.integers(0, 2**63))
    x = random_tensor(shape.input_dims, seed)
    wt = prune_by_magnitude(random_tensor(shape.weight_dims, seed + 1), sp)
    return shape, x, wt
