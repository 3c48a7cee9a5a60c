"""Command-line entry point: ``qsum sweep|baseline|calibrate|hard-family|report``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import harness
from .hard import HardFamily, RegimeError, condition_I_check, export_family
from .harness import ConfigError, ExperimentConfig
from .sequences import SequenceInstance, mean, single_spike

EXIT_OK, EXIT_CONFIG, EXIT_REGIME = 0, 2, 3


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.mode:
        changes["mode"] = args.mode
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    if args.qubit_cap is not None:
        changes["qubit_cap"] = args.qubit_cap
    if args.out:
        changes["out"] = args.out
    try:
        return dataclasses.replace(cfg, **changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    rows = harness.run_sweep(cfg)
    _emit(harness.rows_to_csv(rows), cfg.out)
    if cfg.out and args.json:
        harness.write_json(rows, Path(cfg.out).with_suffix(".json"))
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _load_config(args)
    f = SequenceInstance.load(args.instance) if args.instance else single_spike(cfg.N_list[0], cfg.p_list[0])
    rows = []
    for n in cfg.n_grid:
        est = harness.monte_carlo_baseline(f, int(n), cfg.trials, cfg.seeds[0])
        rows.append({"n": int(n), "error_at_quarter": est.error(mean(f))})
    _emit(json.dumps({"instance": f.label or str(args.instance), "N": f.N, "rows": rows}, indent=2) + "\n", cfg.out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    rec = harness.calibrate(cfg)
    _emit(rec.to_json(), cfg.out)
    return EXIT_OK if rec.passed else 1


def cmd_hard_family(args) -> int:
    cfg = _load_config(args)
    N, p = int(cfg.N_list[0]), float(cfg.p_list[0])
    n = args.n if args.n is not None else int(cfg.n_grid[0])
    family = HardFamily.for_budget(n, N, p, cfg.c0)
    check = condition_I_check(family.make, N)
    if not check.ok:
        print(f"condition (I) failed: {check.witness}", file=sys.stderr)
        return 1
    out = Path(cfg.out or "hard_family")
    path = export_family(family, out, count=args.count, seed=cfg.seeds[0], fmt=args.format)
    print(path)
    return EXIT_OK


def cmd_report(args) -> int:
    rows = harness.read_csv(args.csv)
    lines = ["N,p,algorithm,slope,intercept,residual,points"]
    keys = sorted({(r.N, r.p, r.algorithm) for r in rows})
    for N, p, alg in keys:
        sub = [r for r in rows if (r.N, r.p, r.algorithm) == (N, p, alg)]
        lo = N**0.5 if args.lo is None else args.lo
        hi = N / 2 if args.hi is None else args.hi
        try:
            fit = harness.fit_scaling(sub, (lo, hi), algorithm=alg)
        except ValueError as exc:
            logging.getLogger(__name__).warning("N=%d p=%g %s: %s", N, p, alg, exc)
            continue
        lines.append(f"{N},{p!r},{alg},{fit.slope:.6f},{fit.intercept:.6f},{fit.residual:.6f},{fit.points}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsum", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--mode", choices=["exact", "sampled"])
    common.add_argument("--seed", type=int)
    common.add_argument("--qubit-cap", type=int, dest="qubit_cap")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="error versus n over the grid (CSV)")
    p.add_argument("--json", action="store_true", help="also write a JSON mirror next to --out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("baseline", parents=[common], help="Monte Carlo baseline errors")
    p.add_argument("--instance", help="instance file (.json or binary)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("calibrate", parents=[common], help="calibrate the tail repetition constant")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("hard-family", parents=[common], help="export a validated hard family")
    p.add_argument("--n", type=int, help="query budget selecting l (default: first of n_grid)")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--format", choices=["json", "bin"], default="json")
    p.set_defaults(func=cmd_hard_family)

    p = sub.add_parser("report", help="fit scaling slopes from a sweep CSV")
    p.add_argument("csv")
    p.add_argument("--out")
    p.add_argument("--lo", type=float, help="smallest n in the fit (default sqrt N)")
    p.add_argument("--hi", type=float, help="largest n in the fit (default N/2)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegimeError as exc:
        print(f"infeasible regime: {exc}", file=sys.stderr)
        return EXIT_REGIME


if __name__ == "__main__":
    sys.exit(main())
