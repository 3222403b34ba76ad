"""Verification, benchmarking and analysis drivers behind the CLI."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import access
from .config import LayerConfig
from .csr import csr_footprint_bytes, dense_to_csr, prune_by_magnitude, sparsity, stretch_weights
from .engines import CONCRETE_ENGINES, EngineKind, PreparedLayer
from .tensor import ConvShape, random_tensor
from .weightio import write_weights

REL_TOL = 1e-5
ABS_TOL = 1e-6


def layer_data(shape: ConvShape, target_sparsity: float, seed: int):
    """Deterministic (input, pruned weights) for a layer.

    Input uses ``seed``, weights use ``seed + 1`` (mod 2**64).
    """
    x = random_tensor(shape.input_dims, seed)
    w = random_tensor(shape.weight_dims, (seed + 1) % 2**64)
    return x, prune_by_magnitude(w, target_sparsity)


def prepare(layer: LayerConfig) -> PreparedLayer:
    x, w = layer_data(layer.shape, layer.sparsity, layer.seed)
    return PreparedLayer.build(x, w, layer.shape)


def expand_layers(layers, sparsities=None, seed=None) -> list[LayerConfig]:
    """Apply ``--sparsity`` / ``--seed`` overrides; one entry per sparsity."""
    out = []
    for layer in layers:
        if seed is not None:
            layer = replace(layer, seed=seed)
        for sp in (sparsities if sparsities else [layer.sparsity]):
            out.append(replace(layer, sparsity=sp))
    return out


def resolve_engines(engines) -> list[EngineKind]:
    if not engines:
        return list(CONCRETE_ENGINES)
    return [e if isinstance(e, EngineKind) else EngineKind.parse(e) for e in engines]


# -- verify -----------------------------------------------------------------

@dataclass
class EngineCheck:
    layer: str
    sparsity: float
    engine: str
    max_abs_err: float
    max_rel_err: float
    worst_index: tuple
    passed: bool


def compare(out: np.ndarray, ref: np.ndarray, rel=REL_TOL, abs_=ABS_TOL):
    """Elementwise ``|out - ref| <= abs_ + rel*|ref|``.

    Returns (passed, max abs error, max relative error, index of the element
    with the largest tolerance excess).
    """
    diff = np.abs(out.astype(np.float64) - ref.astype(np.float64))
    scale = np.abs(ref.astype(np.float64))
    excess = diff - (abs_ + rel * scale)
    worst = np.unravel_index(int(np.argmax(excess)), ref.shape) if ref.size else ()
    with np.errstate(divide="ignore", invalid="ignore"):
        rel_err = np.where(scale > 0, diff / scale, np.where(diff > 0, np.inf, 0.0))
    passed = bool(np.all(excess <= 0))
    return (passed, float(diff.max(initial=0.0)), float(rel_err.max(initial=0.0)),
            tuple(int(i) for i in worst))


def verify_layer(prep: PreparedLayer, engines, name="", workers=1) -> list[EngineCheck]:
    ref = prep.run(EngineKind.DENSE_DIRECT).output
    checks = []
    for kind in resolve_engines(engines):
        out = prep.run(kind, workers).output
        ok, mabs, mrel, where = compare(out, ref)
        checks.append(EngineCheck(name, prep.sparsity, prep.resolve(kind).value,
                                  mabs, mrel, where, ok))
    return checks


def cmd_verify(layers, engines=None, trials=1, workers=1, log=print) -> bool:
    all_ok = True
    for layer in layers:
        for t in range(trials):
            seed = (layer.seed + t) % 2**64
            prep = prepare(replace(layer, seed=seed))
            for chk in verify_layer(prep, engines, layer.name, workers):
                all_ok &= chk.passed
                status = "PASS" if chk.passed else "FAIL"
                loc = "" if chk.passed else f" worst at (n,m,e,f)={chk.worst_index}"
                log(f"{status} {layer.name} sparsity={chk.sparsity:.4f} seed={seed} "
                    f"{chk.engine}: max_abs={chk.max_abs_err:.3e} max_rel={chk.max_rel_err:.3e}{loc}")
    return all_ok


# -- bench ------------------------------------------------------------------

@dataclass
class BenchRecord:
    layer: str
    engine: str
    sparsity_measured: float
    nnz: int
    repeats: int
    time_ms_mean: float
    time_ms_std: float
    gflops_effective: float
    traffic_words_est: int
    checksum: float


BENCH_COLUMNS = [f.name for f in fields(BenchRecord)]


def traffic_estimate(shape: ConvShape, nnz: int, kind: EngineKind) -> int:
    """No-cache words moved by one run of ``kind``."""
    out_words = shape.n * shape.m * shape.e * shape.f
    dense_w = shape.m * shape.kernel_cols
    if kind is EngineKind.DENSE_DIRECT:
        return shape.n * shape.c * shape.h * shape.w + dense_w + out_words
    if kind is EngineKind.LOWERED_DENSE:
        return shape.n * shape.kernel_cols * shape.e * shape.f + dense_w + out_words
    if kind is EngineKind.LOWERED_SPARSE:
        return access.path_words(shape, nnz, "lowered").total
    return access.path_words(shape, nnz, "direct").total


def bench_engines(prep: PreparedLayer, name: str, kinds, repeats=10, warmup=2,
                  workers=1) -> list[BenchRecord]:
    """Time several engines on one layer in interleaved rounds.

    Each round runs every engine once, so drift in machine load lands on all
    of them alike instead of on whichever engine happened to run last.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    kinds = [prep.resolve(k) for k in resolve_engines(kinds)]
    for _ in range(warmup):
        for kind in kinds:
            prep.run(kind, workers)
    times = {kind: [] for kind in kinds}
    last = {}
    for _ in range(repeats):
        for kind in kinds:
            res = prep.run(kind, workers)
            times[kind].append(res.elapsed * 1e3)
            last[kind] = res
    dense_flops = 2 * prep.shape.dense_macs()
    records = []
    for kind in kinds:
        mean = statistics.fmean(times[kind])
        records.append(BenchRecord(
            layer=name,
            engine=kind.value,
            sparsity_measured=prep.sparsity,
            nnz=prep.csr.nnz,
            repeats=repeats,
            time_ms_mean=mean,
            time_ms_std=statistics.pstdev(times[kind]),
            gflops_effective=dense_flops / (mean * 1e6) if mean > 0 else math.inf,
            traffic_words_est=traffic_estimate(prep.shape, prep.csr.nnz, kind),
            checksum=float(last[kind].output.sum(dtype=np.float64)),
        ))
    return records


def bench_layer(prep: PreparedLayer, name: str, kind: EngineKind, repeats=10, warmup=2,
                workers=1) -> BenchRecord:
    return bench_engines(prep, name, [kind], repeats, warmup, workers)[0]


def write_csv(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=columns)
        wr.writeheader()
        for row in rows:
            wr.writerow(row if isinstance(row, dict) else asdict(row))


def cmd_bench(layers, engines=None, repeats=10, warmup=2, workers=1, csv_path=None,
              log=print) -> list[BenchRecord]:
    kinds = resolve_engines(engines)
    records = []
    for layer in layers:
        prep = prepare(layer)
        recs = bench_engines(prep, layer.name, kinds, repeats, warmup, workers)
        records.extend(recs)
        base = next((r for r in recs if r.engine == EngineKind.LOWERED_DENSE.value), None)
        for r in recs:
            line = (f"{layer.name} sparsity={r.sparsity_measured:.3f} {r.engine:>14}: "
                    f"{r.time_ms_mean:9.3f} ms +- {r.time_ms_std:.3f}")
            if base is not None and r.time_ms_mean > 0:
                line += f"  speedup vs lowered_dense {base.time_ms_mean / r.time_ms_mean:6.2f}x"
            log(line)
    if csv_path is not None:
        write_csv(csv_path, records, BENCH_COLUMNS)
    return records


# -- analyze ----------------------------------------------------------------

ANALYZE_COLUMNS = [
    "layer", "sparsity", "nnz", "lanes", "txn_bytes",
    "read_transactions", "read_ideal", "read_efficiency", "read_divergent",
    "write_transactions", "write_ideal", "write_efficiency",
    "weight_reuse", "lowered_entries", "direct_footprint",
    "ai_direct", "ai_lowered", "buffer_words", "ws_words", "os_words", "is_words",
]


def analyze_layer(layer: LayerConfig, model: access.WarpModel, buffers) -> list[dict]:
    shape = layer.shape
    _, w = layer_data(shape, layer.sparsity, layer.seed)
    csr = dense_to_csr(w)
    rd = access.simulate_read_coalescing(stretch_weights(csr, shape), shape, model)
    wr = access.simulate_write_coalescing(shape, model)
    reuse = access.reuse_stats(shape, csr.nnz)
    common = {
        "layer": layer.name,
        "sparsity": sparsity(csr),
        "nnz": csr.nnz,
        "lanes": model.lanes,
        "txn_bytes": model.txn_bytes,
        "read_transactions": rd.transactions,
        "read_ideal": rd.ideal_transactions,
        "read_efficiency": rd.coalescing_efficiency,
        "read_divergent": rd.divergent_warp_reads,
        "write_transactions": wr.transactions,
        "write_ideal": wr.ideal_transactions,
        "write_efficiency": wr.coalescing_efficiency,
        "weight_reuse": reuse.weight_reuse,
        "lowered_entries": reuse.lowered_entries_per_sample * shape.n,
        "direct_footprint": reuse.direct_footprint_per_sample * shape.n,
        "ai_direct": access.arithmetic_intensity(shape, csr.nnz, "direct", model.elem_bytes),
        "ai_lowered": access.arithmetic_intensity(shape, csr.nnz, "lowered", model.elem_bytes),
    }
    rows = []
    for b in buffers:
        row = dict(common, buffer_words="inf" if b == math.inf else int(b))
        for key, scheme in (("ws_words", access.Dataflow.WEIGHT_STATIONARY),
                            ("os_words", access.Dataflow.OUTPUT_STATIONARY),
                            ("is_words", access.Dataflow.INPUT_STATIONARY)):
            row[key] = access.dataflow_traffic(shape, csr.nnz, scheme, b).total_words
        rows.append(row)
    return rows


def cmd_analyze(layers, model=access.WarpModel(), buffers=(math.inf,), csv_path=None,
                log=print) -> list[dict]:
    rows = []
    for layer in layers:
        lrows = analyze_layer(layer, model, buffers)
        rows.extend(lrows)
        r = lrows[0]
        log(f"{layer.name} sparsity={r['sparsity']:.3f}: read eff {r['read_efficiency']:.3f}, "
            f"write eff {r['write_efficiency']:.3f}, AI direct {r['ai_direct']:.2f} "
            f"vs lowered {r['ai_lowered']:.2f} flop/B")
    if csv_path is not None:
        write_csv(csv_path, rows, ANALYZE_COLUMNS)
    return rows


# -- prune ------------------------------------------------------------------

@dataclass
class PruneReport:
    rows: int
    kernel_cols: int
    nnz: int
    sparsity: float
    footprint_bytes: int
    dense_bytes: int
    stretched: bool


def cmd_prune(weights: np.ndarray, target: float, out_path, stretch_shape: ConvShape | None = None,
              log=print) -> PruneReport:
    pruned = prune_by_magnitude(weights, target)
    csr = dense_to_csr(pruned)
    rep = PruneReport(csr.rows, csr.cols, csr.nnz, sparsity(csr), csr_footprint_bytes(csr),
                      4 * csr.rows * csr.cols, stretch_shape is not None)
    if stretch_shape is not None:
        csr = stretch_weights(csr, stretch_shape)
    write_weights(csr, out_path)
    log(f"rows={rep.rows} cols={rep.kernel_cols} nnz={rep.nnz} sparsity={rep.sparsity:.6f}")
    log(f"csr footprint {rep.footprint_bytes} bytes "
        f"({rep.footprint_bytes / rep.dense_bytes:.1%} of dense {rep.dense_bytes} bytes)")
    return rep
