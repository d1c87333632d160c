"""Command-line entry point.

Subcommands:
  aggregate  read a feature file, run the forward pass, write features
  eval       synthetic retrieval, before/after CMC and mAP as JSON
  verify     spectral verification suite, JSON report
  bench      kernel scaling benchmarks, CSV to stdout
  flops      analytic cost model, JSON

Reports go to stdout, diagnostics to stderr.  Exit codes: 0 success,
1 usage error, 2 data error.  The NFORMER_SEED environment variable
overrides the default seed when --seed is not given.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .bench import bench_scaling, records_to_csv
from .exceptions import NFormerError
from .flops import flop_model
from .io import read_features, read_weights, write_dataset, write_features
from .linalg import l2_normalize_rows
from .retrieval import GenParams, eval_pipeline, synth_generate
from .spectral import (
    SelectionDiag,
    bound_check,
    cosine_spectral,
    exhaustive_selection_scan,
    nested_monotonicity_check,
)
from .stack import NFormerConfig, identity_weights, nformer_forward, random_weights

logger = logging.getLogger("nformer.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we use 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    env = os.environ.get("NFORMER_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            logger.warning("ignoring non-integer NFORMER_SEED=%r", env)
    return 0


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


@contextlib.contextmanager
def _thread_limit(threads: int):
    """Cap BLAS threads for reproducible, interference-free timing."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        logger.warning("threadpoolctl unavailable; --threads ignored")
        yield
        return
    with threadpool_limits(limits=threads):
        yield


def _add_common_forward_flags(parser: argparse.ArgumentParser, affinity_default: str = "laa") -> None:
    parser.add_argument("--layers", type=int, default=4, help="stacked layers (default 4)")
    parser.add_argument("--l", dest="n_landmarks", type=int, default=5,
                        help="landmark agents (default 5)")
    parser.add_argument("--k", dest="n_neighbors", type=int, default=20,
                        help="neighbor budget (default 20)")
    parser.add_argument("--sign", type=int, choices=(1, -1), default=1,
                        help="softmax sign (default +1)")
    parser.add_argument("--no-scale", action="store_true", help="skip the 1/sqrt(d) scaling")
    parser.add_argument("--no-residual", action="store_true", help="disable residual additions")
    parser.add_argument("--affinity", choices=("laa", "dense"), default=affinity_default,
                        help=f"affinity route (default {affinity_default})")
    parser.add_argument("--per-layer-landmarks", action="store_true",
                        help="resample landmarks per layer instead of per forward pass")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed (default: NFORMER_SEED env var, else 0)")
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS thread cap (default 1 for reproducibility)")


def _config_from_args(args, d: int) -> NFormerConfig:
    return NFormerConfig(
        d=d,
        layers=args.layers,
        n_landmarks=args.n_landmarks,
        n_neighbors=args.n_neighbors,
        scale=not args.no_scale,
        sign=args.sign,
        residual=not args.no_residual,
        landmark_policy="per_layer" if args.per_layer_landmarks else "shared",
        seed=args.seed,
        affinity_mode=args.affinity,
    )


def _cmd_aggregate(args) -> int:
    features = read_features(args.input)
    cfg = _config_from_args(args, features.shape[1])
    if args.weights:
        weights = read_weights(args.weights)
        if len(weights) != cfg.layers:
            cfg.layers = len(weights)
            logger.info("layer count taken from weight file: %d", cfg.layers)
    elif args.random_weights:
        weights = random_weights(cfg.d, cfg.layers, cfg.seed)
    else:
        weights = identity_weights(cfg.d, cfg.layers)
    with _thread_limit(args.threads):
        out = nformer_forward(features, weights, cfg)
    if args.normalize:
        out = l2_normalize_rows(out)
    write_features(args.output, out)
    logger.info("wrote %d x %d features to %s", out.shape[0], out.shape[1], args.output)
    return EXIT_OK


def _cmd_eval(args) -> int:
    params = GenParams(
        identities=args.p,
        images_per_identity=args.q,
        dim=args.dim,
        cluster_spread=args.sigma,
        outlier_fraction=args.outlier_fraction,
        outlier_scale=args.outlier_scale,
        seed=args.seed,
    )
    ds = synth_generate(params)
    cfg = _config_from_args(args, args.dim)
    weights = identity_weights(cfg.d, cfg.layers)
    with _thread_limit(args.threads):
        before, after = eval_pipeline(ds, cfg, weights, k_max=args.cmc_topk)
    if args.export:
        write_dataset(ds, f"{args.export}.nfmt", f"{args.export}.labels.csv")
        logger.info("exported dataset to %s.nfmt / %s.labels.csv", args.export, args.export)
    _emit({
        "params": {
            "p": args.p, "q": args.q, "dim": args.dim, "sigma": args.sigma,
            "outlier_fraction": args.outlier_fraction, "outlier_scale": args.outlier_scale,
            "layers": cfg.layers, "l": cfg.n_landmarks, "k": cfg.n_neighbors,
            "seed": args.seed,
        },
        "before": before.to_dict(),
        "after": after.to_dict(),
        "delta_map": after.map - before.map,
    })
    return EXIT_OK


def _cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.input:
        features = read_features(args.input)
        x = features.T  # columns are samples
    else:
        x = rng.normal(size=(args.d, args.n))
    from .spectral import build_attention

    a = build_attention(x)
    n = a.shape[0]

    half = SelectionDiag.from_indices(np.arange((n + 1) // 2), n)
    report = cosine_spectral(a, half)
    chain = [SelectionDiag.from_indices(np.arange(m), n) for m in range(1, n + 1)]
    mono = nested_monotonicity_check(a, chain)
    bound = bound_check(a, n_star=args.n_star)

    out = {
        "n": n,
        "d": int(x.shape[0]),
        "seed": args.seed,
        "selection_m": half.m,
        "report": report.to_dict(),
        "nested_chain": {
            "sizes": mono.selection_sizes,
            "cosines": mono.cosines,
            "violations": mono.violations,
        },
        "bound": bound.to_dict(),
    }
    if args.exhaustive:
        scan = exhaustive_selection_scan(a)
        gaps_direct, gaps_spectral = _exhaustive_gaps(a, scan)
        out["exhaustive"] = {
            "n_selections": int((1 << n) - 1),
            "max_gap_direct_trace": gaps_direct,
            "max_gap_direct_spectral": gaps_spectral,
            "disagreements": int(gaps_direct > 1e-9) + int(gaps_spectral > 1e-8),
            "edge_violations": scan.edge_violations,
        }
    _emit(out)
    return EXIT_OK


def _exhaustive_gaps(a, scan) -> tuple[float, float]:
    """Largest |direct - trace| and |direct - spectral| over all selections."""
    from .linalg import eigh_symmetric
    from .spectral import cosine_direct, cosine_trace, select_and_project

    n = a.shape[0]
    eigh_symmetric(a)  # fail fast if the matrix is unusable
    max_dt = 0.0
    max_ds = 0.0
    for mask in range(1, 1 << n):
        flags = [(mask >> j) & 1 for j in range(n)]
        sel = SelectionDiag(flags=np.asarray(flags))
        direct = cosine_direct(a, select_and_project(a, sel))
        trace = cosine_trace(a, sel)
        max_dt = max(max_dt, abs(direct - trace))
        max_ds = max(max_ds, abs(direct - scan.cosines[mask]))
    return float(max_dt), float(max_ds)


def _cmd_bench(args) -> int:
    grid = [(n, args.d, args.l, args.k) for n in args.n]
    with _thread_limit(args.threads):
        records = bench_scaling(grid, reps=args.reps, seed=args.seed)
    sys.stdout.write(records_to_csv(records))
    return EXIT_OK


def _cmd_flops(args) -> int:
    report = flop_model(args.n, args.d, args.l, args.k, args.layers)
    _emit(report.to_dict())
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="nformer", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"nformer {__version__}")
    parser.add_argument("--verbose", action="store_true", help="info-level diagnostics to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_agg = sub.add_parser("aggregate", help="run the forward pass over a feature file")
    p_agg.add_argument("--input", required=True, help="input features (.nfmt binary or .csv)")
    p_agg.add_argument("--output", required=True, help="output features (.nfmt binary or .csv)")
    p_agg.add_argument("--weights", default=None, help="weight file (NFWT)")
    p_agg.add_argument("--random-weights", action="store_true",
                       help="seeded random weights instead of identity")
    p_agg.add_argument("--normalize", action="store_true", help="unit-normalize output rows")
    _add_common_forward_flags(p_agg)
    p_agg.set_defaults(func=_cmd_aggregate)

    p_eval = sub.add_parser("eval", help="synthetic retrieval before/after the forward pass")
    p_eval.add_argument("--p", type=int, default=32, help="identities (default 32)")
    p_eval.add_argument("--q", type=int, default=20, help="images per identity (default 20)")
    p_eval.add_argument("--dim", type=int, default=8, help="feature dimension (default 8)")
    p_eval.add_argument("--sigma", type=float, default=0.35, help="cluster spread (default 0.35)")
    p_eval.add_argument("--outlier-fraction", type=float, default=0.15)
    p_eval.add_argument("--outlier-scale", type=float, default=3.0)
    p_eval.add_argument("--cmc-topk", type=int, default=10, help="CMC curve length (default 10)")
    p_eval.add_argument("--export", default=None,
                        help="path prefix to export the dataset (features + label sidecar)")
    # Dense affinity by default: with untrained identity projections the
    # mechanism under evaluation is reciprocal-neighbor averaging.
    _add_common_forward_flags(p_eval, affinity_default="dense")
    p_eval.set_defaults(func=_cmd_eval)

    p_verify = sub.add_parser("verify", help="spectral verification suite")
    p_verify.add_argument("--n", type=int, default=8, help="samples (default 8)")
    p_verify.add_argument("--d", type=int, default=16, help="feature dimension (default 16)")
    p_verify.add_argument("--input", default=None, help="feature file; rows become samples")
    p_verify.add_argument("--exhaustive", action="store_true",
                          help="scan all non-empty selections (n <= 12)")
    p_verify.add_argument("--n-star", type=int, default=None,
                          help="effective eigenvalue count for the optional lower bound")
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.set_defaults(func=_cmd_verify)

    p_bench = sub.add_parser("bench", help="kernel scaling benchmarks (CSV to stdout)")
    p_bench.add_argument("--n", type=int, nargs="+", required=True, help="row counts to sweep")
    p_bench.add_argument("--d", type=int, default=256)
    p_bench.add_argument("--l", type=int, default=5)
    p_bench.add_argument("--k", type=int, default=20)
    p_bench.add_argument("--reps", type=int, default=3)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--threads", type=int, default=1)
    p_bench.set_defaults(func=_cmd_bench)

    p_flops = sub.add_parser("flops", help="analytic cost model (JSON)")
    p_flops.add_argument("--n", type=int, required=True)
    p_flops.add_argument("--d", type=int, default=256)
    p_flops.add_argument("--l", type=int, default=5)
    p_flops.add_argument("--k", type=int, default=20)
    p_flops.add_argument("--layers", type=int, default=4)
    p_flops.set_defaults(func=_cmd_flops)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "seed", None) is None and hasattr(args, "seed"):
        args.seed = _default_seed()
    try:
        return args.func(args)
    except NFormerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
