"""Batch command line front-end.

Exit codes: 0 success, 1 failed ``--check``, 2 configuration error, 3 resource error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigurationError, InputError
from .experiments import KINDS, ExperimentManifest, load_config, run_manifest

EXIT_CHECK, EXIT_CONFIG, EXIT_RESOURCE = 1, 2, 3


def _n_range(text: str) -> list[int]:
    """``16..512`` (doubling ladder) or ``8,16,32``."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            if lo < 1 or hi < lo:
                raise ValueError
            out = [lo]
            while out[-1] * 2 <= hi:
                out.append(out[-1] * 2)
            return out
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b or a comma list, got {text!r}") from None


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=_u64, default=None, help="master seed (default: config value or 0)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--workers", type=int, default=1, help="replica worker processes (simulate)")
    common.add_argument("--check", action="store_true", help="exit 1 if the experiment's acceptance check fails")
    p = argparse.ArgumentParser(prog="wickcgl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, parents=[common])
        if kind == "simulate":
            sp.add_argument("--resume", action="store_true", help="continue from the latest snapshot in --out")
        if kind in ("renorm-scan", "kernel-check"):
            sp.add_argument("--mu", type=float, action="append", help="diffusion coefficient (repeatable)")
        if kind == "renorm-scan":
            sp.add_argument("--n", type=_n_range, help="cutoff ladder, e.g. 16..512")
        if kind == "bel-check":
            sp.add_argument("--replicas", type=int)
    return p


def manifest_from_args(args) -> ExperimentManifest:
    cfg = load_config(args.config) if args.config else {}
    cfg = dict(cfg)
    if args.kind == "renorm-scan":
        sec = dict(cfg.get("renorm", {}))
        if args.mu:
            sec["mu"] = args.mu
        if args.n:
            sec["n"] = args.n
        cfg["renorm"] = sec
    if args.kind == "kernel-check" and args.mu:
        cfg["kernel"] = {**cfg.get("kernel", {}), "mu": args.mu[0]}
    if args.kind == "bel-check" and args.replicas:
        cfg["bel"] = {**cfg.get("bel", {}), "replicas": args.replicas}
    seed = args.seed if args.seed is not None else int(cfg.pop("seed", 0))
    cfg.pop("seed", None)
    return ExperimentManifest(args.kind, cfg, seed, args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = manifest_from_args(args)
        code = run_manifest(manifest, check=args.check, resume=getattr(args, "resume", False),
                            workers=args.workers)
    except (ConfigurationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, MemoryError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    passed = json.loads((manifest.out / "summary.json").read_text())["passed"]
    print(f"{manifest.kind}: {'passed' if passed else 'failed'} -> {manifest.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
