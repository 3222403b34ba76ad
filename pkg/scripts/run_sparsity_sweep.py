"""Time every engine on the shipped layers across a sparsity sweep.

Writes one CSV (bench columns) and prints, per sparsity, the geometric-mean
speedup of each engine over lowered_dense.
"""

import argparse
import math
from collections import defaultdict

from sparseconv import bench
from sparseconv.config import default_config_path, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(default_config_path()))
    ap.add_argument("--sparsity", default="0.5,0.8,0.9,0.95")
    ap.add_argument("--engines", default="lowered_dense,lowered_sparse,sparse_direct")
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--csv", default="results/sparsity_sweep.csv")
    args = ap.parse_args()

    sparsities = [float(s) for s in args.sparsity.split(",")]
    layers = bench.expand_layers(load_config(args.config), sparsities)
    records = bench.cmd_bench(layers, args.engines.split(","), repeats=args.repeats,
                              workers=args.threads, csv_path=args.csv, log=lambda _: None)

    base = {(r.layer, r.sparsity_measured): r.time_ms_mean
            for r in records if r.engine == "lowered_dense"}
    logs = defaultdict(list)
    for r in records:
        b = base.get((r.layer, r.sparsity_measured))
        if b:
            # bucket by the requested sparsity nearest the measured one
            target = min(sparsities, key=lambda s: abs(s - r.sparsity_measured))
            logs[(target, r.engine)].append(math.log(b / r.time_ms_mean))

    engines = args.engines.split(",")
    print(f"{'sparsity':>8}  " + "  ".join(f"{e:>14}" for e in engines))
    for sp in sparsities:
        cells = []
        for e in engines:
            vals = logs.get((sp, e), [])
            cells.append(f"{math.exp(sum(vals) / len(vals)):13.2f}x" if vals else f"{'-':>14}")
        print(f"{sp:8.2f}  " + "  ".join(cells))
    print(f"wrote {len(records)} rows to {args.csv}")


if __name__ == "__main__":
    main()
