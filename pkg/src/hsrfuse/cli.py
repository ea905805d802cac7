"""Command-line surface: simulate, fuse, blind-fuse, evaluate, check.

Exit codes: 0 success, 2 configuration error, 3 dimension error,
4 numerical failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .blockterm import RecoverabilityQuery, check_recoverability, random_blockterm, reconstruct
from .degradation import DegradationOps, add_noise, degrade_spatial, degrade_spectral
from .errors import ConfigError, DimensionError, NumericalError
from .fileio import (
    load_config,
    parse_dims,
    read_htf,
    read_matrix_csv,
    require_input,
    write_htf,
    write_json,
    write_matrix_csv,
)
from .metrics import evaluate
from .solver import fuse, fuse_blind


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DimensionError as exc:
        print(f"dimension error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        # remaining validation failures (rank-deficient operators, bad values)
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hsrfuse",
        description="Fuse hyperspectral and multispectral images by coupled "
        "block-term tensor decomposition.",
    )
    parser.add_argument("--version", action="version", version=f"hsrfuse {__version__}")
    sub = parser.add_subparsers(required=True, metavar="command")

    sim = sub.add_parser("simulate", help="degrade a reference image into an HSI/MSI pair")
    sim.add_argument("--config", required=True, help="run configuration file")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", default=None, help="output directory")
    sim.add_argument("--snr", type=float, default=None, help="noise level in dB")
    sim.add_argument("--ratio", type=int, default=None, help="spatial downsampling factor")
    sim.add_argument("--rank", type=int, default=None, help="number of terms R")
    sim.add_argument("--term-rank", type=int, default=None, help="per-term spatial rank L")
    sim.set_defaults(func=cmd_simulate)

    for name, help_text in (
        ("fuse", "recover the SRI with known degradation operators"),
        ("blind-fuse", "recover the SRI without the spatial operators"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True)
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--out", default=None)
        cmd.add_argument("--rank", type=int, default=None)
        cmd.add_argument("--max-iters", type=int, default=None)
        cmd.add_argument("--no-accel", action="store_true", help="disable extrapolation")
        cmd.set_defaults(func=cmd_blind_fuse if name == "blind-fuse" else cmd_fuse)

    ev = sub.add_parser("evaluate", help="score an estimate against a reference")
    ev.add_argument("reference", help="reference tensor (.htf)")
    ev.add_argument("estimate", help="estimated tensor (.htf)")
    ev.add_argument("--ratio", type=int, default=4, help="spatial ratio for ERGAS")
    ev.add_argument("--per-band", action="store_true", help="include per-band curves")
    ev.add_argument("--out", default=None, help="also write metrics.json here")
    ev.set_defaults(func=cmd_evaluate)

    chk = sub.add_parser("check", help="evaluate the exact-recovery conditions")
    chk.add_argument("--msi-dims", required=True, help="MSI spatial dims, e.g. 256,256")
    chk.add_argument("--hsi-dims", required=True, help="HSI spatial dims, e.g. 64,64")
    chk.add_argument("--msi-bands", required=True, type=int)
    chk.add_argument("--rank", required=True, type=int)
    chk.add_argument("--term-rank", required=True, type=int)
    chk.add_argument("--blind", action="store_true")
    chk.set_defaults(func=cmd_check)
    return parser


def _apply_common_overrides(cfg, args):
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if getattr(args, "rank", None) is not None:
        cfg.rank = args.rank


def _outdir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _realized_snr(clean, noisy):
    err = float(np.sum((noisy - clean) ** 2))
    if err == 0.0:
        return float("inf")
    return 10.0 * float(np.log10(np.sum(clean**2) / err))


def cmd_simulate(args):
    cfg = load_config(args.config)
    _apply_common_overrides(cfg, args)
    if args.snr is not None:
        cfg.snr_db = args.snr
    if args.ratio is not None:
        cfg.blur.ratio = args.ratio
    if args.term_rank is not None:
        cfg.term_rank = args.term_rank
    out = _outdir(cfg)

    rng = np.random.default_rng(cfg.seed)
    if cfg.sri is not None:
        sri = read_htf(require_input(cfg.sri, "inputs.sri"))
    else:
        if cfg.dims is None or cfg.rank is None or cfg.term_rank is None:
            raise ConfigError(
                "simulate needs either inputs.sri or synthesis.dims plus model.rank/term_rank"
            )
        sri = reconstruct(
            random_blockterm(cfg.dims, cfg.rank, cfg.term_rank, seed=rng, nonneg=cfg.nonneg)
        )
    if cfg.bands is None:
        raise ConfigError("simulate needs spectral.bands")

    ops = DegradationOps.for_sri(sri.shape, cfg.blur, cfg.bands)
    recovery = None
    if cfg.rank is not None and cfg.term_rank is not None:
        result = check_recoverability(
            RecoverabilityQuery(
                msi_rows=sri.shape[0],
                msi_cols=sri.shape[1],
                hsi_rows=ops.p1.shape[0],
                hsi_cols=ops.p2.shape[0],
                msi_bands=ops.pm.shape[0],
                n_terms=cfg.rank,
                term_rank=cfg.term_rank,
            )
        )
        recovery = {"satisfied": result.satisfied, "failed_conditions": result.failed_conditions}
        if not result.satisfied:
            print(
                "warning: recovery conditions not satisfied: "
                + "; ".join(result.failed_conditions),
                file=sys.stderr,
            )

    hsi_clean = degrade_spatial(sri, ops)
    msi_clean = degrade_spectral(sri, ops)
    hsi = add_noise(hsi_clean, cfg.snr_db, rng)
    msi = add_noise(msi_clean, cfg.snr_db, rng)

    write_htf(out / "SRI.htf", sri)
    write_htf(out / "HSI.htf", hsi)
    write_htf(out / "MSI.htf", msi)
    write_matrix_csv(out / "P1.csv", ops.p1)
    write_matrix_csv(out / "P2.csv", ops.p2)
    write_matrix_csv(out / "PM.csv", ops.pm)
    write_json(
        out / "manifest.json",
        {
            "tool": "hsrfuse",
            "version": __version__,
            "config_sha256": cfg.fingerprint(),
            "seed": cfg.seed,
            "sri_dims": list(sri.shape),
            "hsi_dims": list(hsi.shape),
            "msi_dims": list(msi.shape),
            "op_dims": {
                "p1": list(ops.p1.shape),
                "p2": list(ops.p2.shape),
                "pm": list(ops.pm.shape),
            },
            "snr_db_requested": cfg.snr_db,
            "snr_db_realized": {
                "hsi": _realized_snr(hsi_clean, hsi),
                "msi": _realized_snr(msi_clean, msi),
            },
            "recoverability": recovery,
        },
    )
    for name in ("SRI.htf", "HSI.htf", "MSI.htf", "P1.csv", "P2.csv", "PM.csv", "manifest.json"):
        print(f"wrote {out / name}")
    return 0


def _apply_solver_overrides(cfg, args):
    if args.max_iters is not None:
        cfg.solver.max_iters = args.max_iters
    if args.no_accel:
        cfg.solver.accelerate = False
    cfg.solver.seed = cfg.seed


def _write_trace(path, trace, elapsed):
    lines = ["iteration,objective,elapsed"]
    lines += [f"{i},{obj:.17g},{dt:.6f}" for i, (obj, dt) in enumerate(zip(trace, elapsed))]
    Path(path).write_text("\n".join(lines) + "\n")


def _run_fusion(cfg, solve, mode):
    out = _outdir(cfg)
    try:
        report = solve()
    except NumericalError as exc:
        if exc.trace is not None:
            _write_trace(out / "trace.csv", exc.trace, exc.elapsed)
        raise
    metrics = None
    if cfg.reference is not None:
        reference = read_htf(require_input(cfg.reference, "inputs.reference"))
        metrics = evaluate(reference, report.sri, ratio=cfg.blur.ratio)
        report.metrics = metrics
    write_htf(out / "SRI.htf", report.sri)
    _write_trace(out / "trace.csv", report.objective_trace, report.elapsed)
    write_json(
        out / "report.json",
        {
            "tool": "hsrfuse",
            "version": __version__,
            "config_sha256": cfg.fingerprint(),
            "mode": mode,
            "seed": cfg.seed,
            "n_terms": cfg.rank,
            "iterations": report.iterations,
            "converged": report.converged,
            "final_objective": float(report.objective_trace[-1]),
            "weights": {
                "ridge": cfg.solver.ridge_weight,
                "tv": cfg.solver.tv_weight,
                "lowrank": cfg.solver.lowrank_weight,
            },
            "metrics": metrics.to_dict() if metrics is not None else None,
            "timing": {"total_seconds": float(report.elapsed[-1])},
        },
    )
    for name in ("SRI.htf", "trace.csv", "report.json"):
        print(f"wrote {out / name}")
    return 0


def cmd_fuse(args):
    cfg = load_config(args.config)
    _apply_common_overrides(cfg, args)
    _apply_solver_overrides(cfg, args)
    if cfg.rank is None:
        raise ConfigError("fuse needs model.rank (or --rank)")
    hsi = read_htf(require_input(cfg.hsi, "inputs.hsi"))
    msi = read_htf(require_input(cfg.msi, "inputs.msi"))
    ops = DegradationOps(
        p1=read_matrix_csv(require_input(cfg.p1, "inputs.p1")),
        p2=read_matrix_csv(require_input(cfg.p2, "inputs.p2")),
        pm=read_matrix_csv(require_input(cfg.pm, "inputs.pm")),
    )
    return _run_fusion(cfg, lambda: fuse(hsi, msi, ops, cfg.rank, cfg.solver), "fuse")


def cmd_blind_fuse(args):
    cfg = load_config(args.config)
    _apply_common_overrides(cfg, args)
    _apply_solver_overrides(cfg, args)
    if cfg.rank is None:
        raise ConfigError("blind-fuse needs model.rank (or --rank)")
    if cfg.p1 is not None or cfg.p2 is not None:
        print("warning: blind-fuse ignores the provided p1/p2 operators", file=sys.stderr)
    hsi = read_htf(require_input(cfg.hsi, "inputs.hsi"))
    msi = read_htf(require_input(cfg.msi, "inputs.msi"))
    pm = read_matrix_csv(require_input(cfg.pm, "inputs.pm"))
    return _run_fusion(cfg, lambda: fuse_blind(hsi, msi, pm, cfg.rank, cfg.solver), "blind-fuse")


def cmd_evaluate(args):
    reference = read_htf(require_input(args.reference, "reference"))
    estimate = read_htf(require_input(args.estimate, "estimate"))
    report = evaluate(reference, estimate, ratio=args.ratio, per_band=args.per_band)
    payload = report.to_dict()
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "metrics.json", payload)
    return 0


def cmd_check(args):
    msi_rows, msi_cols = _parse_pair(args.msi_dims, "--msi-dims")
    hsi_rows, hsi_cols = _parse_pair(args.hsi_dims, "--hsi-dims")
    result = check_recoverability(
        RecoverabilityQuery(
            msi_rows=msi_rows,
            msi_cols=msi_cols,
            hsi_rows=hsi_rows,
            hsi_cols=hsi_cols,
            msi_bands=args.msi_bands,
            n_terms=args.rank,
            term_rank=args.term_rank,
            blind=args.blind,
        )
    )
    print(
        json.dumps(
            {
                "satisfied": result.satisfied,
                "failed_conditions": result.failed_conditions,
                "conditions": result.conditions,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def _parse_pair(text, what):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{what} expects two comma-separated integers, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


if __name__ == "__main__":
    sys.exit(main())
