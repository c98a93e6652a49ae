"""Command-line front end: ``sccbbp <subcommand> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .campaign import (
    CampaignFailure, ExperimentConfig, build_spike_model, covariance_for, distributions_for,
    run_campaign, theory_report,
)
from .errors import ConstraintViolation, DegenerateInputError
from .io import CsvFormatError, dumps, load_data_pair, save_data_pair, write_json, write_spectrum_rows
from .model import generate_dataset
from .resolvent import identity_suite
from .spectrum import bundle_spectra, detect_spikes, goe_edge_samples, scc_spectrum
from .theory import DimensionRatios, TheoryContext, bound_envelopes

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_CONSTRAINT = 2
EXIT_BUDGET = 3

log = logging.getLogger("sccbbp")


def _config(args, kind: str | None = None) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config).to_dict() if args.config else {}
    if kind is not None and "kind" not in base:
        base["kind"] = kind
    overrides = {"seed": args.seed, "replicates": args.reps, "workers": args.workers,
                 "out_dir": args.out_dir, "eps_tol": args.eps_tol}
    base.update({k: v for k, v in overrides.items() if v is not None})
    if kind == "identities":
        base["kind"] = "identities"
    return ExperimentConfig.from_dict(base)


def _emit(obj, out_dir: str | None, name: str) -> None:
    text = dumps(obj)
    sys.stdout.write(text)
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / name).write_text(text)


def cmd_theory(args) -> int:
    cfg = _config(args)
    report = theory_report(cfg, include_gammas=not args.no_gammas)
    _emit(report, args.out_dir, "theory.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    sm = build_spike_model(cfg)
    bundle = generate_dataset(cfg.dims, sm, distributions_for(cfg), covariance_for(cfg),
                              seed=cfg.seed, replicate=args.replicate)
    spectra = bundle_spectra(bundle)
    out = {
        "seed": cfg.seed, "replicate": args.replicate, "config_hash": cfg.config_hash(),
        "spike_model": sm.to_dict() if sm else None,
        "top": {k: s.values[:cfg.edge_count] for k, s in spectra.items()},
    }
    if args.out_dir:
        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        rows = [(args.replicate, i, v, prov)
                for prov, s in spectra.items() for i, v in enumerate(s.values, start=1)]
        write_spectrum_rows(d / "spectrum.csv", rows)
        if args.export_data:
            save_data_pair(d / "x.csv", d / "y.csv", bundle.X_tilde, bundle.Y_tilde)
    _emit(out, args.out_dir, "simulate.json")
    return EXIT_OK


def cmd_campaign(args) -> int:
    cfg = _config(args)
    try:
        report = run_campaign(cfg, write=True)
    except CampaignFailure as exc:
        log.error("%s", exc)
        return EXIT_BUDGET
    sys.stdout.write(dumps(report.summary_document()["summary"]))
    return EXIT_OK


def detect_from_arrays(X: np.ndarray, Y: np.ndarray, window_constant: float = 1.0,
                       window_eps: float = 0.1, eps_tol: float = 0.1) -> dict:
    """Spike estimate plus the theoretical envelopes, evaluated at the estimates."""
    if X.shape[0] < Y.shape[0]:
        X, Y = Y, X  # canonical correlations are symmetric in the two sides
    p, q, n = X.shape[0], Y.shape[0], X.shape[1]
    if p + q >= n:
        raise ConstraintViolation(
            f"c1 + c2 = {(p + q) / n:.4g} >= 1 (p = {p}, q = {q}, n = {n}): "
            "the canonical correlations are degenerate outside the model assumptions")
    dims = DimensionRatios(p, q, n, tau=0.0)
    ctx = TheoryContext.from_dims(dims)
    est = detect_spikes(scc_spectrum(X, Y), ctx, window_constant, window_eps)
    envs = bound_envelopes(est.t_hat, dims, eps=eps_tol)
    return {"estimate": est.to_dict(), "context": ctx.as_dict(), "envelopes": [asdict(e) for e in envs]}


def cmd_detect(args) -> int:
    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig(kind="detect")
    X, Y = load_data_pair(args.x, args.y, samples_in_rows=args.samples_in_rows)
    eps = args.eps_tol if args.eps_tol is not None else base.eps_tol
    out = detect_from_arrays(X, Y, base.window_constant, base.window_eps, eps)
    _emit(out, args.out_dir, "detect.json")
    return EXIT_OK


def cmd_verify_identities(args) -> int:
    cfg = _config(args, kind="identities")
    count = cfg.replicates if args.reps is not None else 20
    records = identity_suite(cfg.seed, count, tol=cfg.identity_tol)
    ok = all(r["passed"] for r in records)
    doc = {"seed": cfg.seed, "instances": count, "all_passed": ok,
           "max_residual": max((r["residual"] for r in records), default=0.0), "records": records}
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        write_json(Path(args.out_dir) / "identities.json", doc)
    sys.stdout.write(dumps({k: v for k, v in doc.items() if k != "records"}))
    return EXIT_OK if ok else EXIT_FAILED_CHECK


def cmd_goe(args) -> int:
    cfg = _config(args)
    count = args.reps if args.reps is not None else cfg.goe_samples
    seed = args.seed if args.seed is not None else cfg.goe_seed
    samples = goe_edge_samples(args.size or cfg.goe_size, count, seed)
    if args.out_dir:
        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_spectrum_rows(d / "goe.csv", [(k, 1, v, "null") for k, v in enumerate(samples)])
    q05, q50, q95 = np.quantile(samples, [0.05, 0.5, 0.95]) if count else (None,) * 3
    sys.stdout.write(dumps({"size": args.size or cfg.goe_size, "count": count, "seed": seed,
                            "mean": samples.mean() if count else None,
                            "sd": samples.std(ddof=1) if count > 1 else None,
                            "q05": q05, "median": q50, "q95": q95}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sccbbp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--reps", type=int, help="replicate count")
    common.add_argument("--workers", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--eps-tol", type=float)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theory", parents=[common], help="edges, threshold, outlier locations")
    p.add_argument("--no-gammas", action="store_true", help="omit the classical-location grid")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("simulate", parents=[common], help="one replicate and its spectra")
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--export-data", action="store_true", help="also write x.csv and y.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("campaign", parents=[common], help="Monte Carlo campaign")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("detect", parents=[common], help="spike detection on CSV data")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--samples-in-rows", action="store_true",
                   help="CSV rows are samples (default: rows are variables)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("verify-identities", parents=[common], help="exact resolvent identities")
    p.set_defaults(func=cmd_verify_identities)

    p = sub.add_parser("goe", parents=[common], help="GOE edge reference samples")
    p.add_argument("--size", type=int)
    p.set_defaults(func=cmd_goe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConstraintViolation as exc:
        log.error("constraint violation: %s", exc)
        return EXIT_CONSTRAINT
    except (CsvFormatError, DegenerateInputError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_FAILED_CHECK


if __name__ == "__main__":
    sys.exit(main())
