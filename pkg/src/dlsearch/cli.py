"""Command-line interface: ``dls <command> ...`` (or ``python -m dlsearch``).

Exit codes: 0 success, 2 usage or input error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from . import io as dio
from .bench import run_benchmark
from .errors import DLSError
from .index import build_index
from .irmetrics import evaluate
from .oracle import ground_truth
from .pooling import POOL_MODES, LayerNormParams, pool
from .presets import PRESETS, get_preset
from .synth import DISTRIBUTIONS, generate

log = logging.getLogger("dlsearch")


class InputError(Exception):
    """Bad arguments or inconsistent inputs (exit code 2)."""


def _emit(obj: dict, path: Optional[str] = None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    else:
        print(text)


def _apply_preset(args, need_search: bool) -> None:
    if getattr(args, "preset", None):
        p = get_preset(args.preset)
        if args.k_index is None:
            args.k_index = p.k_index
        if need_search and args.k_search is None:
            args.k_search = p.k_search
    if getattr(args, "k_index", 0) is None:
        raise InputError("--k-index (or --preset) is required")
    if need_search and args.k_search is None:
        raise InputError("--k-search (or --preset) is required")


# ------------------------------------------------------------ commands


def cmd_gen(args) -> int:
    vs = generate(args.n, args.dim, args.dist, args.seed)
    data = vs.data
    if args.queries:
        if not 0 < args.queries < args.n:
            raise InputError("--queries must be between 1 and n-1")
        if not args.queries_out:
            raise InputError("--queries needs --queries-out")
        dio.write_fvecs(args.out, data[: args.n - args.queries])
        dio.write_fvecs(args.queries_out, data[args.n - args.queries :])
    else:
        dio.write_fvecs(args.out, data)
    _emit({"n": args.n, "dim": args.dim, "dist": args.dist, "seed": args.seed,
           "queries": args.queries or 0})
    return 0


def cmd_build(args) -> int:
    _apply_preset(args, need_search=False)
    if args.k_index < 1:
        raise InputError("--k-index must be >= 1")
    vectors = dio.read_fvecs(args.data)
    if vectors.count == 0:
        raise InputError(f"{args.data} holds no vectors")
    index = build_index(vectors, args.k_index, seed=args.seed)
    dio.write_index(index, args.out)
    _emit({
        "n": index.count, "dim": index.dim, "k_index": index.k_index,
        "seed": index.seed, "root": index.root, "num_links": index.num_links,
        "distance_evals": index.distance_evals,
        "build_seconds": index.build_seconds,
    })
    return 0


def cmd_search(args) -> int:
    _apply_preset(args, need_search=True)
    if args.k < 1 or args.k > args.k_search:
        raise InputError(f"--k must be between 1 and --k-search ({args.k_search})")
    index = dio.read_index(args.index)
    vectors = dio.read_fvecs(args.data)
    queries = dio.read_fvecs(args.queries)
    if vectors.count != index.count or vectors.dim != index.dim:
        raise InputError(
            f"index covers {index.count}x{index.dim} vectors, data is {vectors.count}x{vectors.dim}"
        )
    if queries.count and queries.dim != index.dim:
        raise InputError(f"queries have dim {queries.dim}, index has dim {index.dim}")
    truth = None
    if args.truth != "auto":
        truth = dio.read_ivecs(args.truth)
        if truth.shape[0] != queries.count or truth.shape[1] < min(args.k, index.count):
            raise InputError(f"truth file has shape {truth.shape}")
    report = run_benchmark(
        index, vectors, queries, args.k_search, args.k, truth=truth,
        dataset=args.dataset or args.preset or "", warmup=args.warmup,
        time_brute=not args.no_brute,
    )
    _emit(report.to_dict(), args.report)
    if args.report:
        _emit(report.metrics())
    return 0


def cmd_truth(args) -> int:
    vectors = dio.read_fvecs(args.data)
    queries = dio.read_fvecs(args.queries)
    if queries.count and vectors.count and queries.dim != vectors.dim:
        raise InputError(f"queries have dim {queries.dim}, data has dim {vectors.dim}")
    ids, _ = ground_truth(vectors, queries, args.k)
    dio.write_ivecs(args.out, ids)
    _emit({"queries": int(ids.shape[0]), "k": int(ids.shape[1]) if ids.ndim == 2 else 0})
    return 0


def cmd_pool(args) -> int:
    m = dio.read_tensor(args.tensor)
    params = None
    if args.mode == "lnorm-mean":
        if not args.params:
            raise InputError("--mode lnorm-mean needs --params")
        params = LayerNormParams.from_array(dio.read_tensor(args.params), eps=args.eps)
    out = pool(m, args.mode, p=args.p, params=params)
    dio.write_tensor(args.out, out.astype(np.float32))
    _emit({"mode": args.mode, "input_shape": list(m.shape), "output_shape": list(out.shape),
           "p": args.p if args.mode == "gem" else None})
    return 0


def cmd_ireval(args) -> int:
    run = dio.parse_run(args.run)
    qrels = dio.parse_qrels(args.qrels)
    ks = [int(x) for x in args.ks.split(",") if x]
    if not ks or min(ks) < 1:
        raise InputError("--ks must list positive integers")
    res = evaluate(run, qrels, ks=ks, map_variant=args.map_variant, bpref_variant=args.bpref_variant)
    _emit(res, args.report)
    return 0


# ------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dls", description="Dense-link nearest neighbor search tools")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic data set as fvecs")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--dist", choices=DISTRIBUTIONS, default="uniform")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--queries", type=int, default=0, help="hold out the last Q rows as queries")
    g.add_argument("--queries-out")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("build", help="build an index from an fvecs file")
    b.add_argument("--data", required=True)
    b.add_argument("--k-index", type=int)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--preset", choices=sorted(PRESETS))
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    s = sub.add_parser("search", help="run and score queries against an index")
    s.add_argument("--index", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--k-search", type=int)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--truth", default="auto", help='ivecs file or "auto"')
    s.add_argument("--report", help="write the JSON report here instead of stdout")
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--dataset", help="name recorded in the report")
    s.add_argument("--warmup", type=int, default=5)
    s.add_argument("--no-brute", action="store_true", help="skip timing the brute-force scan")
    s.set_defaults(func=cmd_search, k_index=0)

    t = sub.add_parser("truth", help="exact k nearest neighbors as ivecs")
    t.add_argument("--data", required=True)
    t.add_argument("--queries", required=True)
    t.add_argument("--k", type=int, default=10)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_truth)

    p = sub.add_parser("pool", help="pool a K x W x H feature tensor")
    p.add_argument("--tensor", required=True)
    p.add_argument("--mode", choices=POOL_MODES, required=True)
    p.add_argument("--p", type=float, default=2.0, help="GeM exponent (default 2)")
    p.add_argument("--params", help="(2, K) tensor of LayerNorm gamma and beta")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pool)

    r = sub.add_parser("ireval", help="score a TREC run against qrels")
    r.add_argument("--run", required=True)
    r.add_argument("--qrels", required=True)
    r.add_argument("--map-variant", choices=("trec", "paper"), default="trec")
    r.add_argument("--bpref-variant", choices=("paper", "trec"), default="paper")
    r.add_argument("--ks", default="5,10,20", help="comma-separated P@k cutoffs")
    r.add_argument("--report")
    r.set_defaults(func=cmd_ireval)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except (InputError, DLSError, ValueError, OSError) as e:
        print(f"dls {args.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - reported, not swallowed
        print(f"dls {args.command}: internal error: {e!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
