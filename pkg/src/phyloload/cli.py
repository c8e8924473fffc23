"""Command-line entry point: ``phyloload fl|signal|corr|simulate|report``.

Exit codes: 0 success, 1 statistical degeneracy, 2 input/IO error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .pipeline import EXIT_INPUT, EXIT_OK, TRAITS, PipelineError


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file (flags override it)")
    p.add_argument("--out", help="output directory (default phyloload-out)")
    p.add_argument("--seed", type=int, help="64-bit seed for all randomness (default 0)")
    p.add_argument("-v", "--verbose", action="store_true")


def _stats_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fl", help="trait table CSV with a language column (default: shipped 90-language FL table)")
    p.add_argument("--trees", help="tree sample (.trees: Newick per line or Nexus) or single .nwk")
    p.add_argument("--jitter", action="store_true", default=None,
                   help="regularize singular tree covariances instead of failing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phyloload", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fl", help="functional load table from lexicons and inventories")
    _common(p)
    p.add_argument("--lexicons", help="directory of <language>.tsv lexicons")
    p.add_argument("--inventories", help="directory of <language>.tsv inventories")
    p.add_argument("--tokenize", action="store_true", default=None,
                   help="lexicon forms are undelimited strings (longest-match segmentation)")
    p.add_argument("--min-n", type=int, dest="min_n", help="minimum domain tokens per language (default 200)")
    p.add_argument("--no-zero-flv-filter", dest="drop_zero_flv", action="store_const", const=False,
                   help="keep languages whose FL_V is zero")

    p = sub.add_parser("signal", help="Blomberg's K over a tree sample")
    _common(p)
    _stats_flags(p)
    p.add_argument("--trait", default="fl_v", help="trait column (fl_v, fl_c or fl_p)")
    p.add_argument("--n-perm", type=int, dest="n_perm", help="permutations per tree for a K p-value (0 = none)")

    p = sub.add_parser("corr", help="phylogenetic Pearson correlation over a tree sample")
    _common(p)
    _stats_flags(p)
    p.add_argument("--pair", default="fl_v,fl_c", help="two trait columns, e.g. fl_v,fl_p")
    p.add_argument("--no-phylo", action="store_true", help="ordinary correlation (C = identity)")

    p = sub.add_parser("simulate", help="Brownian-motion traits on a tree")
    _common(p)
    p.add_argument("--tree", required=True, help="Newick file (first tree is used)")
    p.add_argument("--rate", default="1", help="rate matrix, rows separated by ';' (e.g. '1,-0.5;-0.5,1')")
    p.add_argument("--root", help="root state, comma separated (default zeros)")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--names", help="comma-separated trait column names")

    p = sub.add_parser("report", help="HTML/SVG report from previous outputs")
    _common(p)
    return parser


_CONFIG_KEYS = ("lexicons", "inventories", "trees", "fl", "out", "min_n", "drop_zero_flv", "seed", "jitter", "tokenize", "n_perm")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    logging.captureWarnings(True)
    try:
        file_values = pipeline.read_config_file(args.config) if args.config else {}
        cli_values = {k: getattr(args, k) for k in _CONFIG_KEYS if hasattr(args, k)}
        config = pipeline.build_config(file_values, cli_values)
        if args.command == "fl":
            rows = pipeline.cmd_fl(config)
            print(f"wrote {len(rows)} languages to {config.out}/fl.csv")
        elif args.command == "signal":
            if args.trait not in TRAITS:
                raise PipelineError(f"--trait must be one of {', '.join(TRAITS)}")
            res = pipeline.cmd_signal(config, args.trait)
            print(f"{args.trait}: mean K = {res.mean_k:.3f} (sd {res.sd_k:.3f}) over {len(res.k)} trees")
        elif args.command == "corr":
            res = pipeline.cmd_corr(config, args.pair, no_phylo=args.no_phylo)
            print(f"{args.pair}: r = {res.mean_r:.3f} [{res.interval[0]:.3f}, {res.interval[1]:.3f}], p = {res.p:.3g}")
        elif args.command == "simulate":
            names = args.names.split(",") if args.names else None
            files = pipeline.cmd_simulate(config, args.tree, args.rate, args.replicates, args.root, names)
            print(f"wrote {len(files)} replicate files to {config.out}/sim")
        elif args.command == "report":
            path = pipeline.cmd_report(config)
            print(f"wrote {path}")
    except PipelineError as exc:
        print(f"phyloload {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"phyloload {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
