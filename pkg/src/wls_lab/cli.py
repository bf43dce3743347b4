"""Command line interface: ``wls-lab <command> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .experiments import (ExperimentConfig, ExperimentError, anisotropy_report, build_reference,
                          convergence_study)
from .multiindex import IndexSet
from .sampling import SamplingMeasure
from .weights import build_lambda, build_rho, xi_table

FULL_SCALE_N_REF = 5000


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w", newline="")


def cmd_build_set(args) -> int:
    rho = build_rho(args.beta, args.levels, args.r, args.tau)
    lam = build_lambda(args.n, rho)
    prefix = Path(args.output)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    set_path = prefix.with_suffix(".txt")
    csv_path = prefix.with_suffix(".csv")
    set_path.write_text(lam.to_text())
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "xi"])
        for nu, value in xi_table(lam, rho):
            writer.writerow([nu.to_text(), repr(value)])
    print(f"wrote {len(lam)} indices on {lam.max_position} variables to {set_path} and {csv_path}")
    return 0


def cmd_sample(args) -> int:
    lam = IndexSet.from_text(Path(args.set).read_text())
    measure = SamplingMeasure(lam, args.J)
    fh = _open_out(args.output)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"y_{j}" for j in range(1, measure.J + 1)] + ["w"])
        for Y, w, _ in measure.blocks(args.m, args.seed):
            for row, wi in zip(Y, w):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(wi))])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "full_scale", False):
        cfg.n_ref = FULL_SCALE_N_REF
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    return cfg


def cmd_reference(args) -> int:
    cfg = _config(args)
    try:
        ref = build_reference(cfg, 0)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"reference: n_ref={cfg.n_ref} m_ref={cfg.m_ref} "
          f"||G-I||={ref.gram_deviation:.4f} -> {Path(cfg.output_dir) / 'reference_0.est'}")
    return 0


def cmd_converge(args) -> int:
    cfg = _config(args)
    try:
        ref = build_reference(cfg, 0)
        ref2 = build_reference(cfg, 1)
        result = convergence_study(cfg, ref, ref2)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(result.csv())
    print(json.dumps(result.summary(), indent=2, sort_keys=True))
    if not result.valid:
        failed = [k for k, ok in result.checks.items() if not ok]
        print(f"invariants failed: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


def cmd_anisotropy(args) -> int:
    cfg = _config(args)
    report = anisotropy_report(cfg)
    sys.stdout.write(report.csv())
    if not report.valid:
        bad = [f"{j}/{k}" for (j, k), ok in report.symmetric.items() if not ok]
        print(f"asymmetric same-level sections: {', '.join(bad)}", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wls-lab",
        description="Weighted least-squares Hermite approximation of a lognormal diffusion model.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-set", help="near-optimal index set and its weights")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--levels", type=int, required=True, help="field truncation level L")
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--output", default="lambda",
                   help="path prefix; writes PREFIX.txt (index set) and PREFIX.csv (index, xi)")
    p.set_defaults(func=cmd_build_set)

    p = sub.add_parser("sample", help="draw from the optimal sampling measure")
    p.add_argument("--set", required=True, help="index set file written by build-set")
    p.add_argument("--J", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", default="-", help="CSV file (default: stdout)")
    p.set_defaults(func=cmd_sample)

    for name, func, text in [("reference", cmd_reference, "build and store the reference estimator"),
                             ("converge", cmd_converge, "Monte Carlo convergence table"),
                             ("anisotropy", cmd_anisotropy, "index-set anisotropy report")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="YAML file with ExperimentConfig keys")
        p.add_argument("--workers", type=int, default=None, help="override the worker count")
        if name != "anisotropy":
            p.add_argument("--full-scale", action="store_true",
                           help=f"use n_ref={FULL_SCALE_N_REF} (slow)")
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
