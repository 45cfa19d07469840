"""Command-line interface.

Verbs map one-to-one onto pipelines; ``continue`` runs the continuation
pipeline.  Exit codes: 0 when every check passed, 1 when a check failed
or a pipeline aborted, 2 for usage or configuration errors.
"""

import argparse
import dataclasses
import os
import sys

from .config import RunConfig, load_config, validate_config
from .errors import ConfigError, PipelineError
from .pipelines import run_pipeline

VERBS = {
    "profiles": "profiles",
    "limit": "limit",
    "ansatz": "ansatz",
    "estimate": "estimate",
    "continue": "continuation",
    "verify-all": "verify-all",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="seglab",
        description="Interface-layer laboratory for segregated "
                    "two-component systems.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        cmd = sub.add_parser(verb, help=f"run the {VERBS[verb]} pipeline")
        cmd.add_argument("--config", metavar="PATH",
                         help="config file (defaults apply when omitted)")
        cmd.add_argument("--out", metavar="DIR",
                         help="output directory (overrides output.dir)")
        cmd.add_argument("--seed", type=int, metavar="N",
                         help="ensemble seed (overrides estimate.seed)")
        cmd.add_argument("--threads", type=int, metavar="N",
                         help="BLAS/OpenMP thread cap")
        cmd.add_argument("--eps-list", metavar="a,b,c",
                         help="comma-separated eps values "
                              "(overrides layer.eps_list)")
    return parser


def _apply_overrides(cfg, args):
    changes = {}
    if args.seed is not None:
        changes["estimate_seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.eps_list is not None:
        try:
            eps = tuple(float(s) for s in args.eps_list.split(",")
                        if s.strip())
        except ValueError as exc:
            raise ConfigError(f"bad --eps-list: {exc}") from exc
        if not eps:
            raise ConfigError("bad --eps-list: empty")
        changes["layer_eps_list"] = eps
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
        validate_config(cfg)
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("seglab: --threads must be >= 1", file=sys.stderr)
            return 2
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"seglab: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_pipeline(cfg, VERBS[args.verb], out_dir=args.out)
    except ConfigError as exc:
        print(f"seglab: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"seglab: {exc}", file=sys.stderr)
        return 1
    status = "PASS" if result["passed"] else "FAIL"
    print(f"{args.verb}: {status} ({result['out_dir']})")
    return 0 if result["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
