"""Sparse direct vs lowered sparse vs dense loop nest on one 3x3 layer.

Defaults match the acceptance layer (n=8, c=m=64, 32x32, pad 1, sparsity
0.9) and sweep the worker count of the direct sparse engine.
"""

import argparse
import os

from sparseconv import bench
from sparseconv.engines import EngineKind, PreparedLayer
from sparseconv.tensor import ConvShape


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sparsity", type=float, default=0.9)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--channels", type=int, default=64)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--workers", default="1,2,4,8")
    ap.add_argument("--repeats", type=int, default=50)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--skip-dense", action="store_true", help="skip the slow dense loop nest")
    ap.add_argument("--csv", default="results/directional_perf.csv")
    args = ap.parse_args()

    ch = args.channels
    shape = ConvShape(args.batch, ch, ch, args.size, args.size, 3, 3, 1, 1)
    x, w = bench.layer_data(shape, args.sparsity, args.seed)
    prep = PreparedLayer.build(x, w, shape)
    print(f"layer {shape}, measured sparsity {prep.sparsity:.4f}, "
          f"{len(os.sched_getaffinity(0))} cpu(s) available")

    rows = []
    for workers in (int(v) for v in args.workers.split(",")):
        name = f"w{workers}"
        recs = bench.bench_engines(prep, name, [EngineKind.SPARSE_DIRECT, EngineKind.LOWERED_SPARSE],
                                   repeats=args.repeats, workers=workers)
        rows.extend(recs)
        sd, ls = recs
        print(f"workers={workers}: sparse_direct {sd.time_ms_mean:7.3f} ms, "
              f"lowered_sparse {ls.time_ms_mean:7.3f} ms, ratio {ls.time_ms_mean / sd.time_ms_mean:.2f}x")
    if not args.skip_dense:
        dd = bench.bench_layer(prep, "dense", EngineKind.DENSE_DIRECT, repeats=3, warmup=1)
        rows.append(dd)
        print(f"dense_direct {dd.time_ms_mean:9.1f} ms")
    os.makedirs(os.path.dirname(args.csv) or ".", exist_ok=True)
    bench.write_csv(args.csv, rows, bench.BENCH_COLUMNS)
    print(f"wrote {args.csv}")


if __name__ == "__main__":
    main()
