"""Sparse CNN convolution engines and an analytical GPU access model."""

from .access import (
    AccessMetrics,
    Dataflow,
    TrafficEstimate,
    WarpModel,
    arithmetic_intensity,
    dataflow_traffic,
    reuse_stats,
    simulate_read_coalescing,
    simulate_write_coalescing,
)
from .config import LayerConfig, parse_config
from .csr import (
    CsrMatrix,
    csr_footprint_bytes,
    csr_to_dense,
    dense_to_csr,
    prune_by_magnitude,
    sparsity,
    stretch_weights,
)
from .engines import (
    ConvResult,
    EngineKind,
    conv_dense_direct,
    conv_lowered_dense,
    conv_lowered_sparse,
    conv_sparse_direct,
    conv_sparse_direct_parallel,
    csrmm,
    gemm,
    im2col,
    select_engine,
)
from .tensor import ConvShape, Rng64, layout_f, output_dims, pad_input, random_tensor
from .weightio import read_weights, write_weights

__all__ = [
    "AccessMetrics",
    "arithmetic_intensity",
    "conv_dense_direct",
    "conv_lowered_dense",
    "conv_lowered_sparse",
    "conv_sparse_direct",
    "conv_sparse_direct_parallel",
    "ConvResult",
    "ConvShape",
    "csr_footprint_bytes",
    "csr_to_dense",
    "CsrMatrix",
    "csrmm",
    "Dataflow",
    "dataflow_traffic",
    "dense_to_csr",
    "EngineKind",
    "gemm",
    "im2col",
    "LayerConfig",
    "layout_f",
    "output_dims",
    "pad_input",
    "parse_config",
    "prune_by_magnitude",
    "random_tensor",
    "read_weights",
    "reuse_stats",
    "Rng64",
    "select_engine",
    "simulate_read_coalescing",
    "simulate_write_coalescing",
    "sparsity",
    "stretch_weights",
    "TrafficEstimate",
    "WarpModel",
    "write_weights",
]

__version__ = "0.1.0"
