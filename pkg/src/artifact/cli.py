"""Command line entry point: ``artifact {validate,solve,verify,all}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import acceptance
from .pipeline import ConfigError, StageError, default_config, load_config, solve, validate, verify

__all__ = ["build_parser", "main", "cmd_validate", "cmd_solve", "cmd_verify", "cmd_all"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="artifact", description=__doc__)
    p.add_argument("verb", choices=("validate", "solve", "verify", "all"))
    p.add_argument("--config", type=Path, help="JSON run configuration (default: the built-in example)")
    p.add_argument("--out", type=Path, help="output directory (default: outputs.directory)")
    p.add_argument("--ladder", type=int, help="number of flatness ladder points")
    p.add_argument("--tol", type=float, help="fixed-point tolerance")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("--seed", type=int, help="seed for the planted discrimination noise")
    p.add_argument("-q", "--quiet", action="store_true", help="only print failures and the verdict table")
    return p


def _config(args):
    cfg = load_config(args.config) if args.config else default_config()
    if args.ladder is not None:
        if args.ladder < 3:
            raise ConfigError("need at least 3 points", "ladder.points")
        cfg.ladder.points = args.ladder
    if args.tol is not None:
        if not args.tol > 0:
            raise ConfigError("must be > 0", "tolerances.fp_tol")
        cfg.tolerances.fp_tol = args.tol
    if args.threads is not None:
        cfg.threads = max(1, args.threads)
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out if args.out is not None else Path(cfg.outputs.directory)
    return cfg, out


def cmd_validate(cfg, out=None, quiet=False) -> int:
    report = validate(cfg)
    for c in report["checks"]:
        if quiet and c["ok"]:
            continue
        detail = f"  ({c['detail']})" if c["detail"] else ""
        print(f"[{'PASS' if c['ok'] else 'FAIL'}] {c['stage']}: {c['name']}{detail}")
    print(f"kappa = {report['kappa']}, kappa1 = {report['kappa1']}, kappa2 = {report['kappa2']}")
    print(f"config hash {report['config_hash']}")
    return 0 if report["ok"] else 1


def cmd_solve(cfg, out, quiet=False) -> int:
    res = solve(cfg, out)
    ok = True
    for name, c in res["contraction"].items():
        print(f"ray {name}: ratio {c['max_ratio']:.3f}, residual {c['residual']:.2e}, "
              f"{c['iterations']}+{c['polish_iterations']} iterations")
    ref = res.get("refinement")
    if ref:
        print(f"refinement: radial {ref['radial']:.2e}, frequency {ref['frequency']:.2e} (bound {ref['bound']:.0e})")
        ok &= bool(ref["ok"])
    for idx, r in res["residuals"].items():
        print(f"sector {idx}: {r['samples']} samples, residual {r['max_rep_rel']:.1e}, "
              f"finite differences {r['max_fd_rel']:.1e}")
        ok &= bool(r["rep_ok"] and r["fd_ok"])
    print(f"wrote {Path(out) / 'run.json'}")
    return 0 if ok else 1


def _table(results) -> int:
    for r in results:
        print(acceptance.format_line(r))
    return 0 if all(r.ok for r in results) else 1


def cmd_verify(cfg, out, quiet=False) -> int:
    t0 = time.perf_counter()
    run = verify(cfg, out)
    return _table(acceptance.pipeline_criteria(run, time.perf_counter() - t0))


def cmd_all(cfg, out, quiet=False) -> int:
    status = cmd_validate(cfg, out, quiet=True)
    if status:
        return status
    quick = acceptance.quick_criteria()
    t0 = time.perf_counter()
    cmd_solve(cfg, out, quiet)
    run = verify(cfg, out)
    rest = acceptance.pipeline_criteria(run, time.perf_counter() - t0)
    print()
    return _table(quick + rest)


_VERBS = {"validate": cmd_validate, "solve": cmd_solve, "verify": cmd_verify, "all": cmd_all}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, out = _config(args)
        return _VERBS[args.verb](cfg, out, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"stage error {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
