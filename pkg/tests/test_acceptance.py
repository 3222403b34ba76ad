"""Acceptance criteria 1-10.

Each test prints exactly one ``criterion N: PASS|FAIL ...`` line, visible even
under pytest's output capture, and then asserts the same condition.
"""

import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import random_layer

from sparseconv import bench
from sparseconv.access import (
    Dataflow,
    WarpModel,
    arithmetic_intensity,
    compulsory_words,
    dataflow_traffic,
    simulate_read_coalescing,
    simulate_write_coalescing,
)
from sparseconv.cli import EXIT_IO, EXIT_PARSE, main
from sparseconv.config import default_config_path, load_config, parse_config
from sparseconv.csr import (
    csr_footprint_bytes,
    dense_to_csr,
    prune_by_magnitude,
    sparsity,
    stretch_weights,
)
from sparseconv.engines import (
    CONCRETE_ENGINES,
    EngineKind,
    PreparedLayer,
    conv_dense_direct,
    conv_lowered_sparse,
    conv_sparse_direct,
    conv_sparse_direct_parallel,
)
from sparseconv.tensor import ConvShape, layout_f, pad_input, random_tensor
from sparseconv.weightio import WeightFileError, decode_weights, encode_weights

PERF_CSV = Path(os.environ.get("SPARSECONV_PERF_CSV",
                               Path(__file__).resolve().parent.parent / "results" / "acceptance_perf.csv"))


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            sys.stdout.write(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}\n")
        return ok
    return emit


def test_criterion_01_oracle_equivalence(report):
    rng = np.random.default_rng(20240101)
    t0 = time.perf_counter()
    instances = failures = 0
    worst_rel = 0.0
    for _ in range(200):
        shape, x, w = random_layer(rng)
        prep = PreparedLayer.build(x, w, shape)
        for chk in bench.verify_layer(prep, CONCRETE_ENGINES):
            failures += not chk.passed
            worst_rel = max(worst_rel, chk.max_rel_err if math.isfinite(chk.max_rel_err) else 0.0)
        instances += 1
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and instances >= 200 and elapsed < 120
    report(1, ok, f"{instances} instances x 4 engines, {failures} mismatches "
                  f"(rel 1e-5 / abs 1e-6), {elapsed:.1f}s")
    assert ok


def test_criterion_02_parallel_determinism(report):
    rng = np.random.default_rng(2)
    mismatches = 0
    for _ in range(20):
        shape, x, w = random_layer(rng)
        st_ = stretch_weights(dense_to_csr(w), shape)
        xp = pad_input(x, shape.pad)
        ref = conv_sparse_direct(xp, st_, shape).output.tobytes()
        for workers in (1, 2, 4, 8):
            mismatches += conv_sparse_direct_parallel(xp, st_, shape, workers).output.tobytes() != ref
    ok = mismatches == 0
    report(2, ok, f"20 instances x workers {{1,2,4,8}}, {mismatches} non-bitwise results")
    assert ok


def test_criterion_03_stretching(report):
    rng = np.random.default_rng(3)
    bad_index = bad_payload = bad_conv = 0
    for _ in range(50):
        shape, x, w = random_layer(rng, max_n=2, max_cm=8, max_hw=16)
        csr = dense_to_csr(w)
        st_ = stretch_weights(csr, shape)
        for k_old, k_new in zip(csr.colidx.tolist(), st_.colidx.tolist()):
            ci, rem = divmod(k_old, shape.r * shape.s)
            ri, si = divmod(rem, shape.s)
            bad_index += k_new != layout_f(ci, ri, si, shape.h_pad, shape.w_pad)
        bad_payload += (st_.rowptr.tobytes() != csr.rowptr.tobytes()
                        or st_.value.tobytes() != csr.value.tobytes())
        out = conv_sparse_direct(pad_input(x, shape.pad), st_, shape).output
        ref = conv_dense_direct(x, w, shape).output
        bad_conv += not bench.compare(out, ref)[0]
    ok = bad_index == bad_payload == bad_conv == 0
    report(3, ok, f"50 matrices: {bad_index} wrong indices, {bad_payload} altered rowptr/value, "
                  f"{bad_conv} oracle mismatches")
    assert ok


def test_criterion_04_footprint(report):
    exact = True
    rows = []
    for target in (0.5, 0.8, 0.85, 0.9, 0.95, 0.98):
        w = prune_by_magnitude(random_tensor((64, 64, 3, 3), 4), target)
        csr = dense_to_csr(w)
        fp = csr_footprint_bytes(csr)
        exact &= fp == (2 * csr.nnz + csr.rows + 1) * 4
        rows.append((target, sparsity(csr), csr.nnz, fp / (4 * csr.rows * csr.cols)))
    # ratio is 2(1 - sparsity) + (M+1)/(M*CRS), so a 0.8 target sits just above 40%;
    # the claim is checked on targets strictly above 0.8
    checked = [(nnz, ratio) for target, _, nnz, ratio in rows if target > 0.8]
    sweep_ok = all(ratio < 0.4 and nnz > 10 * 64 for nnz, ratio in checked)
    ok = exact and sweep_ok and len(checked) >= 3
    detail = ", ".join(f"{sp:.4f}:{ratio:.1%}" for _, sp, _, ratio in rows)
    report(4, ok, f"footprint formula exact={exact}; sparsity:footprint/dense {detail}")
    assert ok


def test_criterion_05_mac_accounting(report):
    rng = np.random.default_rng(5)
    wrong = 0
    for _ in range(30):
        shape, x, w = random_layer(rng, max_n=3, max_cm=8, max_hw=16)
        csr = dense_to_csr(w)
        expected = shape.n * csr.nnz * shape.e * shape.f
        wrong += conv_sparse_direct(pad_input(x, shape.pad), stretch_weights(csr, shape), shape).macs \
            != expected
        wrong += conv_lowered_sparse(x, csr, shape).macs != expected
    shape = ConvShape(2, 20, 10, 12, 12, 3, 3, 1, 1)
    w = prune_by_magnitude(random_tensor(shape.weight_dims, 1), 0.8)
    csr = dense_to_csr(w)
    res = conv_sparse_direct(pad_input(random_tensor(shape.input_dims, 2), 1),
                             stretch_weights(csr, shape), shape)
    fifth = res.macs * 5 == shape.dense_macs()
    ok = wrong == 0 and fifth
    report(5, ok, f"30 instances x 2 sparse paths, {wrong} counter mismatches; "
                  f"80% sparse layer ran {res.macs}/{shape.dense_macs()} dense MACs")
    assert ok


def test_criterion_06_coalescing(report):
    model = WarpModel(lanes=8, txn_bytes=32, elem_bytes=4)

    def aligned(stride):
        # W_pad and F multiples of the warp width keep every warp on a segment boundary
        shape = ConvShape(2, 4, 2, 8 * stride, 32 * stride, 3, 1, stride, 0)
        w = random_tensor(shape.weight_dims, 6)
        return simulate_read_coalescing(stretch_weights(dense_to_csr(w), shape), shape, model)

    s1, s2 = aligned(1), aligned(2)
    ok1 = s1.coalescing_efficiency == 1.0
    ok2 = s2.transactions == 2 * s2.warp_accesses
    rng = np.random.default_rng(6)
    write_bad = 0
    for _ in range(20):
        r = int(rng.choice([1, 3, 5]))
        shape = ConvShape(int(rng.integers(1, 4)), int(rng.integers(1, 6)), 1,
                          int(rng.integers(r, 24)), int(rng.integers(r, 48)), r, r,
                          int(rng.integers(1, 3)), int(rng.integers(0, 2)))
        wm = WarpModel(lanes=int(rng.choice([4, 8, 16, 32])), txn_bytes=int(rng.choice([32, 64, 128])))
        got = simulate_write_coalescing(shape, wm)
        txn = warps = 0
        for plane in range(shape.n * shape.m):
            for h in range(shape.e):
                for w0 in range(0, shape.f, wm.lanes):
                    addrs = {4 * ((plane * shape.e + h) * shape.f + w)
                             for w in range(w0, min(w0 + wm.lanes, shape.f))}
                    txn += len({a // wm.txn_bytes for a in addrs})
                    warps += 1
        write_bad += (got.transactions, got.warp_accesses) != (txn, warps)
    ok = ok1 and ok2 and write_bad == 0
    report(6, ok, f"stride-1 efficiency {s1.coalescing_efficiency:.3f}; stride-2 "
                  f"{s2.transactions / s2.warp_accesses:.2f} txn/warp-read; "
                  f"write oracle mismatches {write_bad}/20")
    assert ok


def test_criterion_07_dataflow_bound(report):
    rng = np.random.default_rng(7)
    bound_bad = mono_bad = 0
    for _ in range(20):
        shape, _, w = random_layer(rng)
        nnz = int(np.count_nonzero(w))
        compulsory = sum(compulsory_words(shape, nnz))
        for scheme in Dataflow:
            totals = [dataflow_traffic(shape, nnz, scheme, 2 ** k).total_words for k in range(26)]
            inf_total = dataflow_traffic(shape, nnz, scheme, math.inf).total_words
            bound_bad += inf_total != compulsory
            mono_bad += any(a < b for a, b in zip(totals + [inf_total], totals[1:] + [inf_total]))
    ok = bound_bad == mono_bad == 0
    report(7, ok, f"20 shapes x 3 schemes: {bound_bad} B=inf bound violations, "
                  f"{mono_bad} non-monotone sweeps (B = 1..2^25, inf)")
    assert ok


def test_criterion_08_arithmetic_intensity(report):
    lines = []
    ok = True
    for layer in load_config(default_config_path()):
        shape = layer.shape
        for target in (0.0, 0.5, 0.9):
            w = prune_by_magnitude(random_tensor(shape.weight_dims, layer.seed + 1), target)
            nnz = int(np.count_nonzero(w))
            ai_d = arithmetic_intensity(shape, nnz, "direct")
            ai_l = arithmetic_intensity(shape, nnz, "lowered")
            ok &= ai_d >= ai_l if shape.r * shape.s > 1 else ai_d == ai_l
        lines.append(f"{layer.name} {ai_d / ai_l:.2f}x")
    report(8, ok, "AI_direct/AI_lowered at 0.9: " + ", ".join(lines))
    assert ok


def test_criterion_09_directional_performance(report):
    shape = ConvShape(8, 64, 64, 32, 32, 3, 3, 1, 1)
    x, w = bench.layer_data(shape, 0.9, 7)
    prep = PreparedLayer.build(x, w, shape)
    # the two sparse paths run in interleaved rounds; the dense loop nest is
    # two orders of magnitude slower and needs only a few samples
    sparse = bench.bench_engines(prep, "c9_3x3_64",
                                 [EngineKind.SPARSE_DIRECT, EngineKind.LOWERED_SPARSE],
                                 repeats=50, warmup=2, workers=4)
    dense = bench.bench_layer(prep, "c9_3x3_64", EngineKind.DENSE_DIRECT, repeats=3, warmup=1)
    recs = {EngineKind(r.engine): r for r in [*sparse, dense]}
    PERF_CSV.parent.mkdir(parents=True, exist_ok=True)
    bench.write_csv(PERF_CSV, recs.values(), bench.BENCH_COLUMNS)
    sd, ls, dd = (recs[k].time_ms_mean for k in
                  (EngineKind.SPARSE_DIRECT, EngineKind.LOWERED_SPARSE, EngineKind.DENSE_DIRECT))
    ok = sd < ls and sd < dd
    report(9, ok, f"sparse_direct {sd:.2f} ms vs lowered_sparse {ls:.2f} ms vs dense_direct "
                  f"{dd:.1f} ms (4 workers, sparsity {prep.sparsity:.2f}); logged to {PERF_CSV}")
    assert ok


CONFIG_ERRORS = {
    "unknown key": "layer a\nq = 5\n",
    "duplicate key": "layer a\nm = 1\nm = 2\n",
    "duplicate layer": "layer a\nm=1\nc=1\nh=3\nw=3\nr=1\ns=1\nlayer a\n",
    "bad value": "layer a\nm = x\n",
    "missing key": "layer a\nm = 1\n",
    "key outside layer": "m = 1\n",
    "malformed line": "layer a\nm 1\n",
    "bad layer header": "layer a b\n",
    "invalid shape": "layer a\nm=1\nc=1\nh=2\nw=2\nr=3\ns=3\n",
    "sparsity range": "layer a\nm=1\nc=1\nh=3\nw=3\nr=1\ns=1\nsparsity=1\n",
}


def test_criterion_10_io_and_parser(report, tmp_path):
    rng = np.random.default_rng(10)
    bitwise = True
    for i in range(30):
        shape, _, w = random_layer(rng, max_cm=8, max_hw=12)
        csr = dense_to_csr(w)
        for mat in (csr, stretch_weights(csr, shape)):
            buf = encode_weights(mat)
            back = decode_weights(buf, shape.kernel_cols)
            bitwise &= back.equals(mat) and encode_weights(back) == buf
    buf = encode_weights(dense_to_csr(np.eye(3, dtype=np.float32)))
    file_errors = 0
    for broken in (b"NOPE" + buf[4:], buf[:-1], buf + b"\0",
                   buf[:4] + (2).to_bytes(4, "little") + buf[8:]):
        try:
            decode_weights(broken)
        except WeightFileError:
            file_errors += 1

    good = tmp_path / "good.cfg"
    good.write_text("# two layers\nlayer a\nm=2\nc=1\nh=5\nw=5\nr=3\ns=3\n\n"
                    "layer b  # inline\nn=2\nm=1\nc=2\nh=4\nw=4\nr=1\ns=1\nstride=2\npad=1\n"
                    "sparsity=0.5\nseed=9\n")
    accepted = len(parse_config(good.read_text())) == 2 and main(
        ["verify", "--config", str(good)]) == 0
    wrong_codes = []
    for label, text in CONFIG_ERRORS.items():
        path = tmp_path / "bad.cfg"
        path.write_text(text)
        if main(["verify", "--config", str(path)]) != EXIT_PARSE:
            wrong_codes.append(label)
    if main(["verify", "--config", str(tmp_path / "missing.cfg")]) != EXIT_IO:
        wrong_codes.append("missing file")
    ok = bitwise and file_errors == 4 and accepted and not wrong_codes
    report(10, ok, f"60 weight files bitwise={bitwise}; {file_errors}/4 corrupt files rejected; "
                   f"grammar accepted={accepted}; {len(CONFIG_ERRORS) + 1 - len(wrong_codes)}/"
                   f"{len(CONFIG_ERRORS) + 1} error classes gave the right exit code")
    assert ok
