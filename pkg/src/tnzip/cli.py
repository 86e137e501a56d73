"""Command-line surface: compress, reconstruct, eval, train-toy, bench, report.

Exit codes: 0 success, 1 validation failure (including usage errors),
2 I/O failure.  All JSON reports are written with sorted keys;
``--no-timestamp`` strips timing fields so repeated runs are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import run_baselines_suite, run_table1_suite, run_trg_oracle_suite
from .decompose import als_refine, decompose_weight
from .errors import (
    BadMagic,
    ManifestError,
    TnzipError,
    TruncatedPayload,
    UnsupportedVersion,
)
from .gridspec import make_grid_spec
from .io import load_lattice, load_tensor, save_lattice, save_tensor
from .lattice import DEFAULT_ORACLE_BUDGET, lattice_matrix, parameter_count, validate_lattice
from .toymodel import ToyConfig, build_toy_model, choose_chi_for_ratio, compress_and_heal, train
from .trg import contract_forward

_TIMING_KEYS = ("timestamp", "wall_time_s")


def _scrub_timing(obj):
    if isinstance(obj, dict):
        return {k: _scrub_timing(v) for k, v in obj.items() if k not in _TIMING_KEYS}
    if isinstance(obj, list):
        return [_scrub_timing(v) for v in obj]
    return obj


def _write_json(payload: dict, path, no_timestamp: bool) -> None:
    if no_timestamp:
        payload = _scrub_timing(payload)
    else:
        payload = dict(payload)
        payload.setdefault("timestamp", time.strftime("%Y-%m-%dT%H:%M:%S"))
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError as exc:
        raise TnzipError(f"--grid expects RxC (e.g. 2x3), got {text!r}") from exc


def _cmd_compress(args) -> int:
    w = load_tensor(args.input)
    if w.ndim != 2:
        raise TnzipError(f"--input must hold a matrix, got order {w.ndim}")
    rows, cols = _parse_grid(args.grid)
    spec = make_grid_spec(w.shape[0], w.shape[1], rows, cols)
    lattice, report = decompose_weight(w, spec, args.chi, args.tol, args.oracle_budget)
    if args.als_sweeps > 0:
        lattice, report = als_refine(lattice, w, args.als_sweeps, args.tol, args.oracle_budget)
    out = Path(args.out)
    save_lattice(lattice, out, chi=args.chi, report=report.to_dict())
    payload = {
        "command": "compress",
        "tool_version": __version__,
        "input": str(args.input),
        "grid": [rows, cols],
        "chi": args.chi,
        "tol": args.tol,
        "als_sweeps": args.als_sweeps,
        "original_params": int(w.size),
        "lattice_params": parameter_count(lattice),
        "report": report.to_dict(),
    }
    _write_json(payload, out / "report.json", args.no_timestamp)
    print(f"wrote lattice to {out} (reconstruction error {report.reconstruction_error:.3e})")
    return 0


def _cmd_reconstruct(args) -> int:
    lattice, _ = load_lattice(args.lattice)
    spec = lattice.spec
    w_hat = lattice_matrix(lattice)[: spec.orig_out, : spec.orig_in]
    save_tensor(w_hat, args.out)
    print(f"wrote {spec.orig_out}x{spec.orig_in} reconstruction to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    lattice, manifest = load_lattice(args.lattice)
    w = load_tensor(args.reference)
    spec = lattice.spec
    if w.shape != (spec.orig_out, spec.orig_in):
        raise TnzipError(
            f"reference shape {w.shape} does not match lattice {spec.orig_out}x{spec.orig_in}"
        )
    w_hat = lattice_matrix(lattice)[: spec.orig_out, : spec.orig_in]
    denom = float(np.linalg.norm(w))
    recon_err = float(np.linalg.norm(w - w_hat)) / denom if denom > 0 else 0.0

    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(32):
        x = rng.uniform(-1.0, 1.0, spec.orig_in)
        y_ref = w @ x
        y = contract_forward(lattice, x, manifest.get("chi", lattice.chi_max), args.oracle_budget)
        d = float(np.linalg.norm(y_ref))
        worst = max(worst, float(np.linalg.norm(y - y_ref)) / d if d > 0 else 0.0)

    check = validate_lattice(lattice)
    payload = {
        "command": "eval",
        "tool_version": __version__,
        "lattice": str(args.lattice),
        "reference": str(args.reference),
        "seed": args.seed,
        "lattice_valid": check.ok,
        "reconstruction_error": recon_err,
        "forward_agreement_error": worst,
        "original_params": int(w.size),
        "lattice_params": parameter_count(lattice),
        "parameter_ratio": parameter_count(lattice) / w.size,
    }
    _write_json(payload, args.report, args.no_timestamp)
    print(
        f"reconstruction error {recon_err:.3e}, forward agreement {worst:.3e}, "
        f"params {parameter_count(lattice)}/{w.size}"
    )
    return 0


def _cmd_train_toy(args) -> int:
    with open(args.config) as fh:
        cfg_dict = json.load(fh)
    cfg_dict.setdefault("seed", args.seed)
    chi = cfg_dict.pop("chi", None)
    heal_steps = cfg_dict.pop("heal_steps", 100)
    target_ratio = cfg_dict.pop("target_param_ratio", None)
    cfg = ToyConfig.from_dict(cfg_dict)
    model = build_toy_model(cfg)
    dense_report = train(model, cfg.task, cfg.steps, phase="dense")
    if chi is None and target_ratio is not None:
        chi = choose_chi_for_ratio(model, target_ratio)
    model, (pre, post) = compress_and_heal(model, chi, heal_steps)
    payload = {
        "command": "train-toy",
        "tool_version": __version__,
        "config": cfg.to_dict(),
        "chi": chi,
        "heal_steps": heal_steps,
        "dense": dense_report.to_dict(),
        "compressed": pre.to_dict(),
        "healed": post.to_dict(),
        "parameter_reduction": 1.0 - post.parameter_count / dense_report.parameter_count,
    }
    _write_json(payload, args.out, args.no_timestamp)
    print(
        f"dense acc {dense_report.accuracy:.4f} -> compressed {pre.accuracy:.4f} "
        f"-> healed {post.accuracy:.4f} (params {dense_report.parameter_count} -> {post.parameter_count})"
    )
    return 0


def _cmd_bench(args) -> int:
    if args.suite == "table1":
        payload = run_table1_suite()
    elif args.suite == "baselines":
        payload = run_baselines_suite(args.seed)
    else:
        payload = run_trg_oracle_suite(args.seed, threads=max(1, args.threads))
    payload["tool_version"] = __version__
    _write_json(payload, args.report, args.no_timestamp)
    print(f"wrote {args.suite} suite report to {args.report}")
    return 0


def _flatten(prefix: str, obj, rows: list) -> None:
    if isinstance(obj, dict):
        for k, v in sorted(obj.items()):
            _flatten(f"{prefix}.{k}" if prefix else k, v, rows)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, obj))


def _cmd_report(args) -> int:
    with open(args.input) as fh:
        payload = json.load(fh)
    rows: list[tuple[str, object]] = []
    _flatten("", payload, rows)
    for key, value in rows:
        print(f"{key}: {value}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["key", "value"])
            writer.writerows(rows)
        print(f"wrote CSV to {args.csv}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tnzip",
        description="Compress weight matrices onto grid tensor networks and benchmark the result.",
    )
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument(
        "--oracle-budget",
        type=int,
        default=DEFAULT_ORACLE_BUDGET,
        help="max bond configurations for exact contraction",
    )
    parser.add_argument("--threads", type=int, default=1, help="worker threads for benchmark fixtures")
    parser.add_argument(
        "--no-timestamp",
        action="store_true",
        help="omit timestamps and wall-time fields so reports are reproducible byte for byte",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="decompose a weight matrix into a lattice")
    p.add_argument("--input", required=True, help="KTNS file holding the matrix")
    p.add_argument("--grid", required=True, help="lattice shape as RxC")
    p.add_argument("--chi", type=int, required=True, help="bond dimension")
    p.add_argument("--tol", type=float, default=0.0, help="relative singular-value cutoff")
    p.add_argument("--als-sweeps", type=int, default=0, help="refinement sweeps after construction")
    p.add_argument("--out", required=True, help="output directory for manifest and site blobs")
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("reconstruct", help="contract a stored lattice back to a matrix")
    p.add_argument("--lattice", required=True, help="lattice directory")
    p.add_argument("--out", required=True, help="output KTNS file")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("eval", help="compare a stored lattice against a reference matrix")
    p.add_argument("--lattice", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--report", required=True, help="output JSON report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("train-toy", help="dense -> compress -> heal pipeline on the toy block")
    p.add_argument("--config", required=True, help="JSON toy configuration")
    p.add_argument("--out", required=True, help="output JSON report")
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", required=True, choices=["table1", "baselines", "trg-oracle"])
    p.add_argument("--report", required=True, help="output JSON report")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("report", help="print a JSON report as key/value lines")
    p.add_argument("--in", dest="input", required=True, help="input JSON report")
    p.add_argument("--csv", help="also write key/value rows as CSV")
    p.set_defaults(func=_cmd_report)
    return parser


def run_cli(argv=None) -> int:
    """Parse and run; returns the process exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (BadMagic, UnsupportedVersion, TruncatedPayload, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    except (TnzipError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(run_cli())
