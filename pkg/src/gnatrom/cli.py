"""Command-line front end for the offline/online reduction pipeline.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O
error.  The environment variable ``GNATROM_THREADS`` caps the thread count
of the underlying linear-algebra libraries.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _parse_mu(text):
    from .model import ParameterPoint
    try:
        fields = dict(part.split("=", 1) for part in text.split(","))
        return ParameterPoint(a=float(fields["a"]), b=float(fields["b"]))
    except (ValueError, KeyError) as exc:
        raise argparse.ArgumentTypeError(
            f"expected --mu a=<value>,b=<value>, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnatrom",
        description="Offline/online nonlinear model reduction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    offline = sub.add_parser("offline", help="train and persist a reduced model")
    offline.add_argument("--config", required=True)
    offline.add_argument("--out", required=True)

    online = sub.add_parser("online", help="run the hyper-reduced model")
    online.add_argument("--manifest", required=True)
    online.add_argument("--mu", required=True, type=_parse_mu)
    online.add_argument("--tag", default="online")

    compare = sub.add_parser("compare",
                             help="compare reduction methods against tier I")
    compare.add_argument("--manifest", required=True)
    compare.add_argument("--methods", default="gnat",
                         help="comma-separated subset of: gnat, tier2-pg, "
                              "collocation-galerkin, collocation-ls, deim-like")
    compare.add_argument("--mu", type=_parse_mu, default=None)
    compare.add_argument("--reference", default=None,
                         help="stored tier-I trajectory to compare against")
    compare.add_argument("--out", default=None, help="per-step error CSV path")

    bounds = sub.add_parser("bounds",
                            help="diagnostic error-bound trace (offline tool)")
    bounds.add_argument("--manifest", required=True)
    bounds.add_argument("--trajectory", required=True,
                        help="reduced trajectory file relative to the run dir")
    bounds.add_argument("--eps", type=float, default=None)
    bounds.add_argument("--out", default=None, help="bound trace CSV path")
    return parser


def _limit_threads():
    cap = os.environ.get("GNATROM_THREADS")
    if not cap:
        return None
    try:
        import threadpoolctl
        return threadpoolctl.threadpool_limits(limits=int(cap))
    except (ImportError, ValueError):
        return None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads()

    from . import pipeline
    from .solvers import StepFailureError
    from .sampling import RankDeficiencyError, SamplingError
    from .snapshots import SnapshotFormatError

    try:
        if args.command == "offline":
            cfg = pipeline.load_config(args.config)
            manifest = pipeline.run_offline(cfg, args.out)
            print(f"offline run complete: {args.out}/manifest.json "
                  f"(n_w={manifest['rom_sizes']['n_w']}, "
                  f"n_i={manifest['rom_sizes']['n_i']})")
        elif args.command == "online":
            manifest, outdir = pipeline.load_manifest(args.manifest)
            _, metrics = pipeline.run_online(manifest, outdir, args.mu,
                                             tag=args.tag)
            print(json.dumps(metrics, indent=1, sort_keys=True))
        elif args.command == "compare":
            manifest, outdir = pipeline.load_manifest(args.manifest)
            reference = None
            mu = args.mu
            if args.reference is not None:
                reference = pipeline.load_trajectory(args.reference)
                mu = reference.mu if mu is None else mu
            if mu is None:
                print("compare needs --mu or --reference", file=sys.stderr)
                return EXIT_CONFIG
            methods = tuple(m.strip() for m in args.methods.split(",") if m)
            report = pipeline.run_compare(manifest, outdir, mu,
                                          methods=methods,
                                          reference=reference,
                                          csv_path=args.out)
            print(json.dumps(report.as_dict(), indent=1, sort_keys=True))
        elif args.command == "bounds":
            manifest, outdir = pipeline.load_manifest(args.manifest)
            trace = pipeline.run_bounds(manifest, outdir, args.trajectory,
                                        eps_newton=args.eps,
                                        csv_path=args.out)
            print(json.dumps({
                "lipschitz_a": trace.lipschitz_a,
                "r_inv_norm": trace.r_inv_norm,
                "final_bounds": {
                    "b": trace.cum_b[-1], "c": trace.cum_c[-1],
                    "d": trace.cum_d[-1]},
            }, indent=1, sort_keys=True))
    except pipeline.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepFailureError, RankDeficiencyError, SamplingError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, SnapshotFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
