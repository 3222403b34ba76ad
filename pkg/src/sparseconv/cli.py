"""``sparseconv`` command line: verify | bench | analyze | prune.

Exit codes: 0 success, 2 bad arguments or config, 3 verification failure,
4 file I/O or weight-file error.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import access, bench
from .config import ConfigError, default_config_path, load_config
from .tensor import ConvShape, ShapeError, random_tensor
from .weightio import WeightFileError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VERIFY = 3
EXIT_IO = 4


class UsageError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    for v in vals:
        if not 0.0 <= v < 1.0:
            raise argparse.ArgumentTypeError(f"sparsity {v} outside [0, 1)")
    return vals


def _buffer_list(text: str) -> list[float]:
    out = []
    for t in text.split(","):
        t = t.strip().lower()
        if not t:
            continue
        if t in ("inf", "infinity"):
            out.append(math.inf)
            continue
        try:
            v = int(t)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad buffer size {t!r}") from None
        if v < 1:
            raise argparse.ArgumentTypeError("buffer sizes must be >= 1")
        out.append(v)
    return out


def _engine_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _non_negative(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparseconv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, engines=True):
        sp.add_argument("--config", help="layer config file (default: shipped desk-scale layers)")
        sp.add_argument("--seed", type=int, help="override every layer's seed")
        sp.add_argument("--sparsity", type=_float_list,
                        help="comma-separated sparsities; each layer is run at every value")
        if engines:
            sp.add_argument("--engine", type=_engine_list,
                            help="comma-separated engines: dense_direct, lowered_dense, "
                                 "lowered_sparse, sparse_direct, auto (default: all four)")
            sp.add_argument("--threads", type=_positive, default=1,
                            help="worker threads for the direct sparse engine")

    v = sub.add_parser("verify", help="check every engine against the dense loop-nest oracle")
    common(v)
    v.add_argument("--trials", type=_positive, default=1, help="seeds per layer (seed, seed+1, ...)")

    b = sub.add_parser("bench", help="time engines per layer and write CSV")
    common(b)
    b.add_argument("--repeats", type=_positive, default=10)
    b.add_argument("--warmup", type=_non_negative, default=2)
    b.add_argument("--csv", help="output CSV path")

    a = sub.add_parser("analyze", help="coalescing, reuse, intensity and dataflow traffic model")
    common(a, engines=False)
    a.add_argument("--lanes", type=_positive, default=32)
    a.add_argument("--txn-bytes", type=_positive, default=32)
    a.add_argument("--elem-bytes", type=_positive, default=4)
    a.add_argument("--buffer", type=_buffer_list, default=[math.inf],
                   help="comma-separated on-chip buffer sizes in words; 'inf' allowed")
    a.add_argument("--csv", help="output CSV path")

    pr = sub.add_parser("prune", help="magnitude-prune dense weights and write a CSR weight file")
    src = pr.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="dense weights as a .npy array (M, C, R, S) or (M, K)")
    src.add_argument("--dims", type=_int_list, help="generate random weights M,C,R,S")
    pr.add_argument("--seed", type=int, default=42, help="seed for generated weights")
    pr.add_argument("--sparsity", type=float, required=True, help="target sparsity in [0, 1)")
    pr.add_argument("--stretch", type=_int_list, metavar="H,W,PAD",
                    help="stretch column indices for an H x W input with PAD zero padding")
    pr.add_argument("--out", required=True, help="weight file to write")
    return p


def _layers(args):
    path = args.config or default_config_path()
    layers = load_config(path)
    return bench.expand_layers(layers, args.sparsity, args.seed)


def _run(args) -> int:
    if args.command == "verify":
        ok = bench.cmd_verify(_layers(args), args.engine, args.trials, args.threads)
        print("verification " + ("passed" if ok else "FAILED"))
        return EXIT_OK if ok else EXIT_VERIFY
    if args.command == "bench":
        bench.cmd_bench(_layers(args), args.engine, args.repeats, args.warmup, args.threads,
                        args.csv)
        return EXIT_OK
    if args.command == "analyze":
        try:
            model = access.WarpModel(args.lanes, args.txn_bytes, args.elem_bytes)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        bench.cmd_analyze(_layers(args), model, args.buffer, args.csv)
        return EXIT_OK
    # prune
    if not 0.0 <= args.sparsity < 1.0:
        raise UsageError(f"sparsity must be in [0, 1), got {args.sparsity}")
    if args.input:
        w = np.load(args.input).astype(np.float32)
        if w.ndim not in (2, 4):
            raise UsageError(f"dense weights must be 2-D or 4-D, got {w.ndim}-D")
    else:
        if len(args.dims) != 4:
            raise UsageError("--dims needs M,C,R,S")
        w = random_tensor(args.dims, args.seed)
    shape = None
    if args.stretch:
        if w.ndim != 4 or len(args.stretch) != 3:
            raise UsageError("--stretch needs 4-D weights and H,W,PAD")
        m, c, r, s = w.shape
        h, wd, pad = args.stretch
        shape = ConvShape(1, m, c, h, wd, r, s, 1, pad)
    bench.cmd_prune(w, args.sparsity, args.out, shape)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, ShapeError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (OSError, WeightFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
