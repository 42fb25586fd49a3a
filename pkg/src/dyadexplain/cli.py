"""Command-line entry point.

Stage subcommands operate on one run directory (``--out``). When that
directory already holds a ``config.txt`` it is the base configuration;
``--config`` and the flags override it.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PipelineConfig, coerce, load_config
from .errors import ConfigurationError, DyadExplainError
from .pipeline import A_CONFIG, STAGES, density_experiment, run_pipeline, run_stage, sweep_active_users, write_manifest

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def _int_list(s: str) -> list[int]:
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _float_list(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="run", help="run (or experiment) directory")
    p.add_argument("--city")
    p.add_argument("--top-n", type=int, dest="top_n")
    p.add_argument("--k", type=_int_list, help="comma-separated cluster counts")
    p.add_argument("--provider", choices=("surrogate", "precomputed"))
    p.add_argument("--embeddings", help="PTEREMB1 file for --provider precomputed")
    p.add_argument("--dataset", help="review file to ingest")
    p.add_argument("--format", choices=("tripadvisor-tsv", "extra-triplets"))
    p.add_argument("--active-users", type=int, dest="active_users")
    p.add_argument("--desk", action="store_true", help="start from the small desk-scale preset")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _synth_args(p: argparse.ArgumentParser, ratio=True):
    p.add_argument("--users", type=int, default=100)
    p.add_argument("--items", type=int, default=40)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--vocab", type=int, default=30)
    if ratio:
        p.add_argument("--ratio", type=float, default=20.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dyadexplain", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        _common(sub.add_parser(stage, help=f"run the {stage} stage in --out"))
    _common(sub.add_parser("run", help="run every stage in order"))
    sw = sub.add_parser("sweep-users", help="one run per active-user count")
    _common(sw)
    sw.add_argument("--values", type=_int_list, required=True)
    sw.add_argument("--workers", type=int, default=1)
    de = sub.add_parser("density", help="synthetic corpora of different review/user ratios")
    _common(de)
    _synth_args(de, ratio=False)
    de.add_argument("--ratios", type=_float_list, required=True)
    de.add_argument("--workers", type=int, default=1)
    sy = sub.add_parser("synth", help="write a synthetic corpus with lexicon and lemma table")
    sy.add_argument("--out", default="synthetic")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("-v", "--verbose", action="count", default=0)
    _synth_args(sy)
    return ap


def resolve_config(args) -> PipelineConfig:
    run_cfg = Path(args.out) / A_CONFIG
    base = PipelineConfig.desk() if args.desk else PipelineConfig()
    if run_cfg.is_file() and args.command in STAGES and args.command != "ingest":
        base = load_config(run_cfg, base)
    if args.config:
        base = load_config(args.config, base)
    over = {}
    for key in ("seed", "city", "top_n", "provider", "embeddings", "dataset", "format", "active_users"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    if args.k:
        over["cluster_k"] = tuple(args.k)
    for item in args.set:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = coerce(*item.split("=", 1))
        over[k] = v
    return base.replace(**over) if over else base


def _cmd_synth(args):
    from .synth import SynthSpec, achieved_ratio, generate_synthetic

    spec = SynthSpec(n_users=args.users, n_items=args.items, n_groups=args.groups,
                     vocab_per_group=args.vocab, ratio=args.ratio, seed=args.seed)
    res = generate_synthetic(spec, args.out)
    print(f"{res.reviews_path}: {len(res.dataset)} reviews, ratio {achieved_ratio(res.dataset):.3f}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            _cmd_synth(args)
            return EXIT_OK
        cfg = resolve_config(args)
        out = Path(args.out)
        if args.command == "run":
            res = run_pipeline(cfg, out)
            print(json.dumps({"metrics": res.metrics, "ccr": res.ccr}, indent=1, default=str))
        elif args.command == "sweep-users":
            rows = sweep_active_users(cfg, args.values, out, args.workers)
            for r in rows:
                print(r)
        elif args.command == "density":
            from .synth import SynthSpec

            specs = [SynthSpec(n_users=args.users, n_items=args.items, n_groups=args.groups,
                               vocab_per_group=args.vocab, ratio=r, seed=cfg.seed) for r in args.ratios]
            for r in density_experiment(specs, cfg, out, args.workers):
                print(r)
        elif args.command == "report":
            print(write_manifest(cfg, out))
        else:
            out.mkdir(parents=True, exist_ok=True)
            if args.command == "ingest":
                cfg.save(out / A_CONFIG)
            run_stage(cfg, out, args.command)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DyadExplainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
