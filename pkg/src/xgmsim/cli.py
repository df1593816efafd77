"""Command-line entry point.

Subcommands map onto experiment kinds; every subcommand takes a flat
key = value config file plus a few overriding flags and writes
trajectories.csv / summary.csv (or rates.csv) / manifest.json into --out.
Exit status is the number of failed runs (0 when everything succeeded).
"""

import os

# single-threaded BLAS before numpy loads: run-level parallelism only
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import argparse  # noqa: E402
import sys  # noqa: E402
from dataclasses import replace  # noqa: E402

from .harness import ConfigError, load_config, run_experiment, validate_config  # noqa: E402

_SUBCOMMAND_KINDS = {
    "ode-run": ("ode-run", "protocol-compare", "lottery-sweep", "interplay",
                "regularisation", "difficulty-variants"),
    "sgd-run": ("sgd-reference",),
    "controlled": ("controlled-theta",),
    "rates": ("rate-heatmap",),
    "sweep": ("lottery-sweep", "protocol-compare", "interplay",
              "regularisation", "difficulty-variants"),
    "destab": ("destabilisation",),
}

_DEFAULT_KIND = {
    "ode-run": "ode-run",
    "sgd-run": "sgd-reference",
    "controlled": "controlled-theta",
    "rates": "rate-heatmap",
    "sweep": "protocol-compare",
    "destab": "destabilisation",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None,
                   help="run seeds 0..N-1 (overrides the config seed list)")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel worker processes (overrides config)")
    p.add_argument("--reproducible", action="store_true",
                   help="force the deterministic reduction path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="xgmsim",
        description="XOR-like Gaussian mixture learning dynamics: "
                    "ODE ensembles, finite-d references, schedules, metrics.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ode-run", "integrate ODE ensembles over a config grid"),
        ("sgd-run", "finite-dimensional SGD reference runs (same schema)"),
        ("controlled", "controlled-initialisation angle sweeps"),
        ("rates", "uncommitted-step rate grids (heatmap data)"),
        ("sweep", "generic grid sweeps (lottery, protocols, interplay, ...)"),
        ("destab", "paired noise-level ensembles for transition matrices"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if cfg.kind == _DEFAULT_KIND[args.command] or cfg.kind in _SUBCOMMAND_KINDS[args.command]:
        pass
    else:
        print(f"error: config kind {cfg.kind!r} does not belong to "
              f"subcommand {args.command!r}", file=sys.stderr)
        return 2
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seeds"] = tuple(range(args.seed))
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.reproducible:
        overrides["reproducible"] = True
    if overrides:
        cfg = replace(cfg, **overrides)
    try:
        validate_config(cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    manifest = run_experiment(cfg)
    n_failed = manifest.get("n_failed", 0)
    n_runs = manifest.get("n_runs", 0)
    print(f"{cfg.kind}: {n_runs - n_failed}/{n_runs} runs ok -> {cfg.out_dir}")
    if n_failed:
        for f in manifest["failures"][:10]:
            print(f"  failed: {f['run_id']}: {f['error']}", file=sys.stderr)
    return 1 if n_failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
