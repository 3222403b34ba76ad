"""Analytical model of the GPU execution of direct sparse convolution.

Covers warp-level coalescing of input reads and output writes under the
one-output-element-per-lane mapping, reuse counts, arithmetic intensity of
the direct vs lowered paths, and off-chip traffic for the three stationary
dataflows under a single on-chip buffer of ``B`` words.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .csr import CsrError, CsrMatrix
from .tensor import ConvShape

INF = math.inf


@dataclass(frozen=True)
class WarpModel:
    lanes: int = 32
    txn_bytes: int = 32
    elem_bytes: int = 4

    def __post_init__(self):
        if self.lanes < 1:
            raise ValueError("lanes must be >= 1")
        if self.elem_bytes < 1 or self.txn_bytes < 1 or self.txn_bytes % self.elem_bytes:
            raise ValueError("txn_bytes must be a positive multiple of elem_bytes")


@dataclass
class AccessMetrics:
    """Transaction counts for one modeled access stream.

    ``coalescing_efficiency`` is requested bytes over transferred bytes
    (``transactions * txn_bytes``), the usual load/store efficiency metric.
    ``ideal_transactions`` is the per-warp lower bound
    ``ceil(unique bytes / txn_bytes)`` summed over warp accesses.
    """

    warp_accesses: int
    transactions: int
    ideal_transactions: int
    requested_bytes: int
    divergent_warp_reads: int
    txn_bytes: int

    def __add__(self, other: "AccessMetrics") -> "AccessMetrics":
        return AccessMetrics(
            self.warp_accesses + other.warp_accesses,
            self.transactions + other.transactions,
            self.ideal_transactions + other.ideal_transactions,
            self.requested_bytes + other.requested_bytes,
            self.divergent_warp_reads + other.divergent_warp_reads,
            self.txn_bytes,
        )

    @property
    def coalescing_efficiency(self) -> float:
        if self.transactions == 0:
            return 1.0
        return self.requested_bytes / (self.transactions * self.txn_bytes)

    @property
    def transactions_per_access(self) -> float:
        return self.transactions / self.warp_accesses if self.warp_accesses else 0.0


def _warp_lane_offsets(e: int, f: int, lanes: int):
    """Start (h, w) and active lane count of every warp over an E x F plane.

    Warps cover ``lanes`` consecutive output columns of one row and never
    wrap into the next row.
    """
    per_row = -(-f // lanes)
    w0 = np.arange(per_row) * lanes
    active = np.minimum(lanes, f - w0)
    h = np.repeat(np.arange(e), per_row)
    return h, np.tile(w0, e), np.tile(active, e)


def _count(base_elems: np.ndarray, active: np.ndarray, elem_stride: int,
           model: WarpModel) -> AccessMetrics:
    """Segment counting for warps with element addresses ``base + lane*stride``."""
    lanes = model.lanes
    lane = np.arange(lanes)
    addr = (base_elems[:, None] + lane[None, :] * elem_stride) * model.elem_bytes
    seg = addr // model.txn_bytes
    live = lane[None, :] < active[:, None]
    # inactive lanes repeat the first lane's segment so they add nothing
    seg = np.where(live, seg, seg[:, :1])
    seg.sort(axis=1)
    per_warp = 1 + np.count_nonzero(np.diff(seg, axis=1), axis=1)
    ideal = -(-(active * model.elem_bytes) // model.txn_bytes)
    return AccessMetrics(
        warp_accesses=int(base_elems.shape[0]),
        transactions=int(per_warp.sum()),
        ideal_transactions=int(ideal.sum()),
        requested_bytes=int(active.sum()) * model.elem_bytes,
        divergent_warp_reads=int(np.count_nonzero(per_warp > 1)),
        txn_bytes=model.txn_bytes,
    )


def simulate_read_coalescing(csr: CsrMatrix, shape: ConvShape,
                             model: WarpModel = WarpModel()) -> AccessMetrics:
    """Input-read transactions of the direct sparse path.

    For every sample, stored weight ``j`` and warp, the lanes read elements
    ``n*C*H_pad*W_pad + colidx[j] + h*stride*W_pad + w*stride`` of the padded
    input.
    """
    if not csr.stretched:
        raise CsrError("read coalescing is modeled on stretched weights")
    if (csr.h_pad, csr.w_pad) != (shape.h_pad, shape.w_pad):
        raise CsrError("weights were stretched for a different padded input")
    h, w0, active = _warp_lane_offsets(shape.e, shape.f, model.lanes)
    plane = h * shape.stride * shape.w_pad + w0 * shape.stride
    sample = shape.c * shape.h_pad * shape.w_pad
    offs = csr.colidx.astype(np.int64)
    total = AccessMetrics(0, 0, 0, 0, 0, model.txn_bytes)
    # bound the (warps x lanes) address block to roughly a million entries
    step = max(1, (1 << 20) // max(1, plane.size * model.lanes))
    for n in range(shape.n):
        for lo in range(0, offs.size, step):
            blk = offs[lo:lo + step]
            base = (n * sample + blk[:, None] + plane[None, :]).reshape(-1)
            act = np.tile(active, blk.size)
            total = total + _count(base, act, shape.stride, model)
    return total


def simulate_write_coalescing(shape: ConvShape, model: WarpModel = WarpModel()) -> AccessMetrics:
    """Output-write transactions: one store per lane per (n, m) plane.

    Counted once per output element (partial sums stay in registers).
    """
    h, w0, active = _warp_lane_offsets(shape.e, shape.f, model.lanes)
    plane = h * shape.f + w0
    planes = np.arange(shape.n * shape.m) * (shape.e * shape.f)
    base = (planes[:, None] + plane[None, :]).reshape(-1)
    act = np.tile(active, shape.n * shape.m)
    return _count(base, act, 1, model)


@dataclass
class WordCounts:
    in_words: int
    w_words: int
    out_words: int

    @property
    def total(self) -> int:
        return self.in_words + self.w_words + self.out_words


@dataclass
class ReuseStats:
    weight_reuse_per_sample: int
    weight_reuse: int
    lowered_entries_per_sample: int
    direct_footprint_per_sample: int
    words_direct: WordCounts
    words_lowered: WordCounts

    @property
    def duplication_ratio(self) -> float:
        """Lowered matrix entries per padded input word."""
        return self.lowered_entries_per_sample / self.direct_footprint_per_sample


def csr_words(nnz: int, m: int) -> int:
    return 2 * nnz + m + 1


def path_words(shape: ConvShape, nnz: int, path: str) -> WordCounts:
    """No-cache word traffic: each operand array is moved once.

    The direct path reads the padded input; the lowered path reads its
    materialized C*R*S x E*F matrix once per sample.
    """
    if path == "direct":
        in_words = shape.n * shape.c * shape.h_pad * shape.w_pad
    elif path == "lowered":
        in_words = shape.n * shape.kernel_cols * shape.e * shape.f
    else:
        raise ValueError(f"path must be 'direct' or 'lowered', got {path!r}")
    return WordCounts(in_words, csr_words(nnz, shape.m), shape.n * shape.m * shape.e * shape.f)


def reuse_stats(shape: ConvShape, nnz: int) -> ReuseStats:
    ef = shape.e * shape.f
    return ReuseStats(
        weight_reuse_per_sample=ef,
        weight_reuse=ef * shape.n,
        lowered_entries_per_sample=shape.kernel_cols * ef,
        direct_footprint_per_sample=shape.c * shape.h_pad * shape.w_pad,
        words_direct=path_words(shape, nnz, "direct"),
        words_lowered=path_words(shape, nnz, "lowered"),
    )


def arithmetic_intensity(shape: ConvShape, nnz: int, path: str, elem_bytes: int = 4) -> float:
    """Sparse flops per byte of no-cache traffic for ``path``."""
    flops = 2 * shape.n * nnz * shape.e * shape.f
    return flops / (elem_bytes * path_words(shape, nnz, path).total)


class Dataflow(enum.Enum):
    WEIGHT_STATIONARY = "WS"
    OUTPUT_STATIONARY = "OS"
    INPUT_STATIONARY = "IS"


@dataclass
class TrafficEstimate:
    scheme: Dataflow
    buffer_words: float
    in_words: int
    w_words: int
    out_words: int

    @property
    def total_words(self) -> int:
        return self.in_words + self.w_words + self.out_words


def _passes(work: float, per_pass: float) -> int:
    """Number of buffer-sized passes over ``work`` words (at least one)."""
    if per_pass == INF:
        return 1
    return max(1, math.ceil(work / per_pass))


def compulsory_words(shape: ConvShape, nnz: int) -> tuple[int, int, int]:
    in_once = shape.n * shape.c * shape.h_pad * shape.w_pad
    return in_once, 2 * nnz, shape.n * shape.m * shape.e * shape.f


def dataflow_traffic(shape: ConvShape, nnz: int, scheme: Dataflow,
                     buffer_words: float) -> TrafficEstimate:
    """Off-chip words for one layer when ``scheme`` keeps its operand resident.

    weight stationary
        ``g`` filter rows fit in the buffer; the input is streamed once per
        group of rows.
    output stationary
        accumulators for ``B`` output positions stay resident; weights are
        re-streamed per tile of N*E*F positions.
    input stationary
        ``B`` input words stay resident; weights are re-streamed per tile.

    ``buffer_words`` may be ``math.inf``.
    """
    if not buffer_words >= 1:
        raise ValueError("buffer_words must be >= 1")
    in_once, w_once, out_once = compulsory_words(shape, nnz)
    scheme = Dataflow(scheme)
    if scheme is Dataflow.WEIGHT_STATIONARY:
        row_words = max(1.0, w_once / shape.m)
        g = shape.m if buffer_words == INF else max(1, math.floor(buffer_words / row_words))
        g = min(g, shape.m)
        return TrafficEstimate(scheme, buffer_words, in_once * math.ceil(shape.m / g), w_once, out_once)
    if scheme is Dataflow.OUTPUT_STATIONARY:
        tiles = _passes(shape.n * shape.e * shape.f, buffer_words)
        return TrafficEstimate(scheme, buffer_words, in_once, w_once * tiles, out_once)
    tiles = _passes(in_once, buffer_words)
    return TrafficEstimate(scheme, buffer_words, in_once, w_once * tiles, out_once)
