"""Layer shapes, NCHW flat indexing and deterministic test data.

Dense tensors are plain ``float32`` numpy arrays in C order, so a 4-D array
with extents ``(D0, D1, D2, D3)`` stores element ``(a, b, y, x)`` at flat
offset ``((a*D1 + b)*D2 + y)*D3 + x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float32

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class ShapeError(ValueError):
    pass


def _out_extent(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


@dataclass(frozen=True)
class ConvShape:
    """Shape parameters of one convolution layer.

    ``e`` and ``f`` (output height/width) are derived on construction and a
    shape whose window does not fit the padded input is rejected.
    """

    n: int
    m: int
    c: int
    h: int
    w: int
    r: int
    s: int
    stride: int = 1
    pad: int = 0
    e: int = field(init=False)
    f: int = field(init=False)

    def __post_init__(self):
        for name in ("n", "m", "c", "h", "w", "r", "s", "stride"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ShapeError(f"{name} must be an integer >= 1, got {v!r}")
        if int(self.pad) != self.pad or self.pad < 0:
            raise ShapeError(f"pad must be an integer >= 0, got {self.pad!r}")
        if self.h + 2 * self.pad < self.r or self.w + 2 * self.pad < self.s:
            raise ShapeError(
                f"filter {self.r}x{self.s} larger than padded input "
                f"{self.h + 2 * self.pad}x{self.w + 2 * self.pad}"
            )
        object.__setattr__(self, "e", _out_extent(self.h, self.r, self.stride, self.pad))
        object.__setattr__(self, "f", _out_extent(self.w, self.s, self.stride, self.pad))

    @property
    def h_pad(self) -> int:
        return self.h + 2 * self.pad

    @property
    def w_pad(self) -> int:
        return self.w + 2 * self.pad

    @property
    def kernel_cols(self) -> int:
        """Columns of the unstretched weight matrix, C*R*S."""
        return self.c * self.r * self.s

    @property
    def input_dims(self) -> tuple[int, int, int, int]:
        return (self.n, self.c, self.h, self.w)

    @property
    def padded_dims(self) -> tuple[int, int, int, int]:
        return (self.n, self.c, self.h_pad, self.w_pad)

    @property
    def weight_dims(self) -> tuple[int, int, int, int]:
        return (self.m, self.c, self.r, self.s)

    @property
    def output_dims(self) -> tuple[int, int, int, int]:
        return (self.n, self.m, self.e, self.f)

    def dense_macs(self) -> int:
        return self.n * self.m * self.c * self.r * self.s * self.e * self.f


def output_dims(shape: ConvShape) -> tuple[int, int]:
    return shape.e, shape.f


def layout_f(c: int, y: int, x: int, h_in: int, w_in: int) -> int:
    """Offset of element (c, y, x) in a CHW plane stack of size h_in x w_in."""
    return (c * h_in + y) * w_in + x


def flat_index(idx, dims) -> int:
    off = 0
    for i, d in zip(idx, dims):
        off = off * d + i
    return off


def unflatten(offset: int, dims) -> tuple[int, ...]:
    out = []
    for d in reversed(dims):
        out.append(offset % d)
        offset //= d
    return tuple(reversed(out))


def pad_input(x: np.ndarray, pad: int) -> np.ndarray:
    """Zero-pad the two spatial dims of an NCHW tensor by ``pad`` per side.

    Always returns a fresh array, also for ``pad == 0``.
    """
    if x.ndim != 4:
        raise ShapeError(f"expected a 4-D tensor, got {x.ndim}-D")
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    out[:, :, pad:pad + h, pad:pad + w] = x
    return out


class Rng64:
    """SplitMix64 generator.

    The state advances by the golden gamma 0x9E3779B97F4A7C15 (mod 2**64) per
    draw and each output is the state passed through the SplitMix64 finalizer::

        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        z =  z ^ (z >> 31)

    Output ``i`` (0-based) therefore depends only on ``seed + (i+1)*gamma``,
    which lets :meth:`uniform` generate blocks without a Python loop.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    @staticmethod
    def _mix(z):
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
        return z ^ (z >> 31)

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN_GAMMA) & _MASK64
        return self._mix(self.state)

    def u64_block(self, count: int) -> np.ndarray:
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(_GOLDEN_GAMMA)
            self.state = (self.state + count * _GOLDEN_GAMMA) & _MASK64
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            z = z ^ (z >> np.uint64(31))
        return z

    def uniform(self, count: int, bound: float = 1.0) -> np.ndarray:
        """``count`` float32 values in [-bound, bound).

        The top 24 bits of each draw give ``u = k / 2**24`` (exact in float32);
        the value is ``(2u - 1) * bound``.
        """
        k = (self.u64_block(count) >> np.uint64(40)).astype(np.float64)
        u = k * (1.0 / (1 << 24))
        return ((2.0 * u - 1.0) * bound).astype(DTYPE)


def random_tensor(dims, seed: int, bound: float = 1.0) -> np.ndarray:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ShapeError(f"invalid dims {dims}")
    count = int(np.prod(dims))
    return Rng64(seed).uniform(count, bound).reshape(dims)
