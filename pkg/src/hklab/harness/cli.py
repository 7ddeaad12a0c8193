"""Command line entry point.

    hklab run <config>
    hklab audit-scaling <config>
    hklab killing-table <config>
    hklab cache {ls,clear} [--dir DIR]

Exit codes: 0 ok, 2 configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from .. import __version__
from ..errors import ConfigError, DomainError, HKLabError, NumericError, UsageError
from .config import load_config
from .experiments import run_experiment
from .report import fmt, write_manifest, write_report

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
LOG_ENV = "HKLAB_LOG"
DEFAULT_CACHE = Path(".hklab-cache")

log = logging.getLogger("hklab")


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _run(path, force=None):
    cfg = load_config(path)
    if force is not None and cfg.experiment != force:
        cfg = cfg.with_overrides(experiment=force)
    t0 = time.perf_counter()
    try:
        rep = run_experiment(cfg)
    except NumericError as exc:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(cfg.output_dir / "failure.txt",
                       {"error": str(exc), "diagnostics": exc.diagnostics,
                        "experiment": cfg.experiment})
        raise
    meta = {
        "hklab_version": __version__,
        "config": str(Path(path)),
        "seed": cfg.sampling.seed,
        "model": cfg.model.to_spec(),
        "domain": cfg.domain.to_spec(),
        "sampling.n_triples": cfg.sampling.n_triples,
        "sampling.delta_floor": cfg.sampling.delta_floor,
        "sampling.t_grid": list(cfg.sampling.t_grid),
        "sampling.gate": cfg.sampling.gate,
        "solver.h": cfg.solver.h,
        "solver.mode": cfg.solver.mode,
        "solver.tol": cfg.solver.tol,
        "quadrature.rel_tol": cfg.quadrature.rel_tol,
        "quadrature.abs_tol": cfg.quadrature.abs_tol,
        "report.spread_cap": cfg.spread_cap,
    }
    meta.update({f"params.{k}": v for k, v in sorted(cfg.params.items())})
    out = write_report(rep, cfg.output_dir, meta)
    log.info("%s finished in %.1fs", cfg.experiment, time.perf_counter() - t0)
    status = "PASS" if rep.passed else "FAIL"
    print(f"{cfg.experiment}: {status} -> {out}")
    for k, v in rep.summary.items():
        print(f"  {k} = {fmt(v)}")
    return EXIT_OK


def _cache(action, directory):
    directory = Path(directory)
    files = sorted(directory.glob("grid-*.bin")) if directory.exists() else []
    if action == "ls":
        for f in files:
            print(f"{f.name}\t{f.stat().st_size}")
        print(f"{len(files)} cached grid(s) in {directory}")
    else:
        for f in files:
            f.unlink()
        print(f"removed {len(files)} cached grid(s) from {directory}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="hklab", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the experiment named in the config"),
                        ("audit-scaling", "run a ScalingAudit on the config's model"),
                        ("killing-table", "tabulate C(p) for the config's model")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
    c = sub.add_parser("cache", help="inspect or clear the grid cache")
    c.add_argument("action", choices=("ls", "clear"))
    c.add_argument("--dir", default=str(DEFAULT_CACHE))
    return ap


def main(argv=None):
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "cache":
            return _cache(args.action, args.dir)
        force = {"run": None, "audit-scaling": "ScalingAudit",
                 "killing-table": "KillingConstantTable"}[args.command]
        return _run(args.config, force)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        print(json.dumps(exc.diagnostics, default=fmt, sort_keys=True), file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, UsageError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HKLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
