"""Command line entry point: ``swaplab {run,delta,sweep,gen}``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, RegistryError, SwaplabError
from .geodata import SynthParams, generate_synthetic
from .harness import (EXIT_CONFIG, EXIT_IO, EXIT_OK, _write_atomic, estimate_delta, load_config,
                      run_pipeline, tomllib, variance_sweep, write_population)
from .toydown import REFERENCE_EPSILON, ToyDownConfig


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="override base_seed")
    parser.add_argument("--jobs", type=int, default=default, help="parallel worker processes")
    parser.add_argument("--out", default=default, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swaplab", description=__doc__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every mechanism x replicate of a config")
    p.add_argument("config")
    _global_flags(p, suppress=True)

    p = sub.add_parser("delta", help="bias/variance of a statistic under a mechanism")
    p.add_argument("config")
    p.add_argument("--statistic", required=True)
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--mechanism", default=None)
    _global_flags(p, suppress=True)

    p = sub.add_parser("sweep", help="swap variance across swap rates")
    p.add_argument("config")
    p.add_argument("--rates", default="0.02,0.05,0.1,0.2,0.4")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=REFERENCE_EPSILON,
                   help="ToyDown reference epsilon (0 to skip)")
    p.add_argument("--mechanism", default=None)
    _global_flags(p, suppress=True)

    p = sub.add_parser("gen", help="write a synthetic population as CSV")
    p.add_argument("synth_config")
    p.add_argument("-o", "--output", dest="gen_out", default=None)
    _global_flags(p, suppress=True)
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    return cfg


def _out_dir(args, cfg) -> Path:
    return Path(args.out) if args.out else Path(cfg.source_dir) / cfg.output_dir


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load(args)
            return run_pipeline(cfg, _out_dir(args, cfg)).exit_code
        if args.command == "delta":
            cfg = _load(args)
            report = estimate_delta(cfg, args.statistic, args.replicates, args.mechanism)
            safe = args.statistic.replace(":", "_")
            _write_atomic(_out_dir(args, cfg) / f"delta_{safe}.csv", report.to_csv())
            print(f"{report.statistic}: mean delta {report.mean:.6f}, variance {report.variance:.6f}")
            return EXIT_OK
        if args.command == "sweep":
            cfg = _load(args)
            rates = [float(r) for r in args.rates.split(",") if r.strip()]
            ref = ToyDownConfig(args.epsilon) if args.epsilon > 0 else None
            result = variance_sweep(cfg, rates, ref, args.runs, mechanism=args.mechanism)
            _write_atomic(_out_dir(args, cfg) / "variance_sweep.csv", result.to_csv())
            sys.stdout.write(result.to_csv())
            return EXIT_OK
        if args.command == "gen":
            path = Path(args.synth_config)
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
            seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
            params = SynthParams.from_mapping(raw.get("synthetic", {}))
            out = args.gen_out or args.out or "."
            for f in write_population(generate_synthetic(params, seed), out):
                print(f)
            return EXIT_OK
    except (ConfigError, RegistryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except tomllib.TOMLDecodeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SwaplabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
