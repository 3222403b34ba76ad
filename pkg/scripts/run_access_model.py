"""Access-model report for the shipped layers.

Coalescing efficiency for several warp widths, arithmetic intensity of the
direct and lowered paths, and dataflow traffic over a doubling buffer sweep.
"""

import argparse
import math

from sparseconv import access, bench
from sparseconv.config import default_config_path, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(default_config_path()))
    ap.add_argument("--sparsity", type=float, default=0.9)
    ap.add_argument("--lanes", default="8,16,32")
    ap.add_argument("--txn-bytes", type=int, default=32)
    ap.add_argument("--max-buffer-log2", type=int, default=20)
    ap.add_argument("--csv", default="results/access_model.csv")
    args = ap.parse_args()

    layers = bench.expand_layers(load_config(args.config), [args.sparsity])
    buffers = [2 ** k for k in range(4, args.max_buffer_log2 + 1, 2)] + [math.inf]
    rows = []
    for lanes in (int(v) for v in args.lanes.split(",")):
        model = access.WarpModel(lanes=lanes, txn_bytes=args.txn_bytes)
        print(f"-- lanes={lanes}, txn={args.txn_bytes} B")
        rows.extend(bench.cmd_analyze(layers, model, buffers))

    print("\ndataflow traffic (words) at the smallest and largest finite buffer:")
    lo, hi = buffers[0], buffers[-2]
    for r in rows:
        if r["lanes"] == int(args.lanes.split(",")[0]) and r["buffer_words"] in (lo, hi):
            print(f"  {r['layer']:<26} B={r['buffer_words']:>8}  WS {r['ws_words']:>12}  "
                  f"OS {r['os_words']:>12}  IS {r['is_words']:>12}")
    bench.write_csv(args.csv, rows, bench.ANALYZE_COLUMNS)
    print(f"wrote {len(rows)} rows to {args.csv}")


if __name__ == "__main__":
    main()
