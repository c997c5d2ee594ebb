"""Command-line front end: run, sweep, validate, and oracle subcommands."""

import argparse
import itertools
import os
import sys
from pathlib import Path

from .config import ConfigError, SystemConfig, parse_config, with_updates
from .harness import run_experiment


def _add_common_flags(parser):
    parser.add_argument("--config", type=Path, default=None, help="key = value config file")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    parser.add_argument("--scheme", type=str, default=None, help="comma list: conventional,dstbc")
    parser.add_argument("--alpha", type=str, default=None, help="comma list of alpha values (rad)")
    parser.add_argument("--lk", type=str, default=None, help="comma list of cluster sizes")
    parser.add_argument("--precoder", type=str, default=None, help="comma list: mr,lpmmse,pmmse")
    parser.add_argument("--setups", type=int, default=None)
    parser.add_argument("--realizations", type=int, default=None)
    parser.add_argument("--force", action="store_true", help="overwrite existing outputs")


def _parse_list(text, cast):
    return [cast(part.strip()) for part in text.split(",") if part.strip()]


def _base_config(args, expect_single=True):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.setups is not None:
        overrides["setups"] = args.setups
    if args.realizations is not None:
        overrides["realizations"] = args.realizations
    if args.scheme is not None:
        overrides["schemes"] = tuple(_parse_list(args.scheme, str))
    if expect_single:
        if args.alpha is not None:
            values = _parse_list(args.alpha, float)
            if len(values) != 1:
                raise ConfigError("run takes a single --alpha; use sweep for lists")
            overrides["alpha"] = values[0]
        if args.lk is not None:
            values = _parse_list(args.lk, int)
            if len(values) != 1:
                raise ConfigError("run takes a single --lk; use sweep for lists")
            overrides["L_k"] = values[0]
        if args.precoder is not None:
            values = _parse_list(args.precoder, str)
            if len(values) != 1:
                raise ConfigError("run takes a single --precoder; use sweep for lists")
            overrides["precoder"] = values[0]
    return parse_config(args.config, overrides)


def _out_dir(args):
    if args.out is not None:
        return args.out
    env = os.environ.get("CFSIM_OUT")
    return Path(env) if env else Path("cfsim_out")


def cmd_validate(args) -> int:
    cfg = _base_config(args)
    print(f"configuration valid: L={cfg.L} K={cfg.K} N={cfg.N} L_k={cfg.L_k} "
          f"precoder={cfg.precoder} schemes={','.join(cfg.schemes)} alpha={cfg.alpha:.6g}")
    return 0


def cmd_run(args) -> int:
    cfg = _base_config(args)
    result = run_experiment(
        cfg, _out_dir(args), workers=args.workers, force=args.force
    )
    print(f"wrote {result.n_rows} rows to {result.csv_path}")
    return 0


def cmd_sweep(args) -> int:
    base = _base_config(args, expect_single=False)
    alphas = _parse_list(args.alpha, float) if args.alpha else [base.alpha]
    lks = _parse_list(args.lk, int) if args.lk else [base.L_k]
    precoders = _parse_list(args.precoder, str) if args.precoder else [base.precoder]
    out = _out_dir(args)
    total_rows = 0
    for alpha, lk, precoder in itertools.product(alphas, lks, precoders):
        cfg = with_updates(base, alpha=alpha, L_k=lk, precoder=precoder)
        name = f"sweep_alpha{alpha:.6g}_lk{lk}_{precoder}.csv"
        result = run_experiment(
            cfg,
            out,
            run_id=f"sweep-seed{cfg.seed}-alpha{alpha:.6g}-lk{lk}-{precoder}",
            workers=args.workers,
            force=args.force,
            csv_name=name,
        )
        total_rows += result.n_rows
        print(f"wrote {result.n_rows} rows to {result.csv_path}")
    print(f"sweep complete: {total_rows} rows")
    return 0


def cmd_oracle(args) -> int:
    from .oracles import run_all

    results = run_all(seed=args.seed if args.seed is not None else 42, fast=args.fast)
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.detail}")
        failures += 0 if r.passed else 1
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfsim",
        description="Cell-free massive MIMO downlink simulator with differential space-time coding",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment and write a CSV")
    _add_common_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="cartesian sweep over alpha/L_k/precoder lists")
    _add_common_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="validate the configuration and exit")
    _add_common_flags(p_val)
    p_val.set_defaults(func=cmd_validate)

    p_oracle = sub.add_parser("oracle", help="run the derived-value oracle checks")
    p_oracle.add_argument("--seed", type=int, default=42)
    p_oracle.add_argument("--fast", action="store_true", help="smaller sample sizes")
    p_oracle.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileExistsError as exc:
        print(f"refusing to overwrite: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
