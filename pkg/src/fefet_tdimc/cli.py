"""Command-line entry point.

    fefet-tdimc fit    [--config C] [--out DIR]
    fefet-tdimc run    EXPERIMENT [--config C] [--seed N] [--out DIR] [--trials N]
    fefet-tdimc sweep  [--config C] [--out DIR]
    fefet-tdimc report [--out DIR]

Exit status: 0 when every case passes its oracle, 1 when any case fails,
2 on configuration or I/O errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .config import EXPERIMENTS, ConfigError, ExperimentConfig
from .experiments import ensure_presets, run_experiment

log = logging.getLogger("fefet_tdimc")


def _load(args) -> ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else ExperimentConfig()
    exp = cfg.experiment
    if getattr(args, "experiment", None):
        exp = replace(exp, name=args.experiment)
    if getattr(args, "seed", None) is not None:
        exp = replace(exp, master_seed=args.seed)
    if getattr(args, "out", None):
        exp = replace(exp, output_dir=args.out)
    cfg = replace(cfg, experiment=exp)
    if getattr(args, "trials", None) is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be positive")
        cfg = replace(cfg, monte_carlo=replace(cfg.monte_carlo, trials=args.trials))
    if args.config and cfg.array.weights_csv:
        # relative weight files resolve against the config's directory
        p = Path(cfg.array.weights_csv)
        if not p.is_absolute():
            cfg = replace(cfg, array=replace(cfg.array, weights_csv=str(Path(args.config).parent / p)))
    return cfg.validate()


def cmd_fit(args) -> int:
    cfg = replace(_load(args), presets={})
    cfg = ensure_presets(cfg)
    for mode in ("and", "xor"):
        p = cfg.presets[mode]
        print(f"{mode}: v_h={p.v_h:.4f} V  c_bank={p.c_bank * 1e15:.4f} fF  "
              f"tdc_step={p.tdc_step * 1e12:.3f} ps  tdc_shift={p.tdc_shift * 1e12:.3f} ps")
    out = Path(cfg.experiment.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "fitted.toml")
    print(f"wrote {out / 'fitted.toml'}")
    return 0


def _run(cfg: ExperimentConfig) -> int:
    outcome = run_experiment(cfg)
    width = max(len(k) for k in outcome.summary)
    for k, v in outcome.summary.items():
        print(f"{k:<{width}}  {v}")
    print(f"{'PASS' if outcome.passed else 'FAIL'} {outcome.name} -> {outcome.out_dir}")
    return outcome.exit_code


def cmd_run(args) -> int:
    return _run(_load(args))


def cmd_sweep(args) -> int:
    args.experiment = "mls_sweep"
    return _run(_load(args))


def cmd_report(args) -> int:
    out = Path(args.out or "out")
    dirs = [out] if (out / "summary.csv").exists() else sorted(p.parent for p in out.glob("*/summary.csv"))
    if not dirs:
        raise ConfigError(f"no summary.csv under {out}")
    failed = 0
    for d in dirs:
        with open(d / "summary.csv", newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        manifest = json.loads((d / "manifest.json").read_text()) if (d / "manifest.json").exists() else {}
        print(f"== {d}  seed={manifest.get('master_seed', '?')}  config={manifest.get('config_sha256', '?')[:12]}")
        for k, v in rows:
            print(f"  {k:<28} {v}")
        failed += dict(rows).get("passed") != "1"
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fefet-tdimc", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="TOML experiment config (defaults when omitted)")
        p.add_argument("--out", help="output directory (overrides experiment.output_dir)")
        if seed:
            p.add_argument("--seed", type=int, help="master seed (overrides experiment.master_seed)")

    p = sub.add_parser("fit", help="fit per-mode presets to the target delay steps")
    common(p, seed=False)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("run", help="run a named experiment")
    p.add_argument("experiment", choices=EXPERIMENTS)
    common(p)
    p.add_argument("--trials", type=int, help="Monte Carlo trials per level")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="multi-level-state sweep of one cell")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="print the summaries of finished runs")
    p.add_argument("--out", help="run directory, or a parent of several")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
