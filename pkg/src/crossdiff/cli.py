"""Command-line entry point: ``crossdiff check|simulate|ensemble|converge``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .assumptions import LEMMA_KINDS, certify_lemma, check_dominance, check_noise_assumptions
from .config import RunConfig, config_text, load_config
from .ensemble import MOMENT_NAMES, ensemble_moments, refinement_study, run_paths
from .errors import (
    CertificateError,
    ConfigError,
    ConvergenceError,
    CrossDiffError,
    DomainError,
    EnsembleError,
    FalsificationError,
    ModelError,
    StepError,
)
from .galerkin import build_basis
from .monitors import monitor_columns
from .steppers import TrajectoryRecord, run_path

__all__ = [
    "EXIT_OK",
    "EXIT_INVALID",
    "EXIT_NUMERICAL",
    "MOMENT_COLUMNS",
    "REFINEMENT_COLUMNS",
    "main",
    "run_command",
    "write_monitor_csv",
    "write_moments_csv",
    "write_refinement_csv",
    "write_manifest",
    "emit_plot_script",
]

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
MOMENT_COLUMNS = ["name", "mean", "std_error", "paths", "truncated"]
REFINEMENT_COLUMNS = ["level", "mean_distance", "rms_neighbour_diff", "order", "decreasing_fraction", "paths", "truncated"]


def _g(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return path


def write_monitor_csv(path, record: TrajectoryRecord, n: int) -> Path:
    rows = ([_g(v) for v in r.csv_values()] for r in record.monitors)
    return _write_csv(Path(path), monitor_columns(n), rows)


def write_moments_csv(path, estimates) -> Path:
    rows = ([e.name, _g(e.mean), _g(e.std_error), str(e.paths), str(e.truncated_paths)] for e in estimates)
    return _write_csv(Path(path), MOMENT_COLUMNS, rows)


def write_refinement_csv(path, table) -> Path:
    L = len(table.levels)
    cons = table.mean_consecutive
    orders = table.orders
    paths = table.distances.shape[0]
    rows = []
    for l in range(L):
        rows.append(
            [
                _g(table.levels[l]),
                _g(table.mean_distance[l]),
                _g(cons[l]) if l < L - 1 else "nan",
                _g(orders[l]) if l < L - 2 else "nan",
                _g(table.decreasing_fraction),
                str(paths),
                str(table.truncated_paths),
            ]
        )
    return _write_csv(Path(path), REFINEMENT_COLUMNS, rows)


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command: str, cfg: RunConfig, seeds, files) -> Path:
    """Plain-text manifest: version, command, config echo, seeds and checksums."""
    out_dir = Path(out_dir)
    lines = [
        f"crossdiff {__version__}",
        f"command = {command}",
        "seeds = " + ", ".join(str(s) for s in seeds),
        "",
        "# config",
        config_text(cfg).rstrip("\n"),
        "",
        "# sha256",
    ]
    for f in files:
        lines.append(f"{_sha256(f)}  {Path(f).name}")
    path = out_dir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def emit_plot_script(csv_paths, kind: str, out_path=None) -> Path:
    """Write a gnuplot script for monitor time series or a refinement log-log plot."""
    csv_paths = [Path(p) for p in csv_paths]
    if not csv_paths:
        raise DomainError("emit_plot_script needs at least one CSV")
    for p in csv_paths:
        if not p.exists():
            raise DomainError(f"CSV not found: {p}")
    header = csv_paths[0].read_text(encoding="utf-8").splitlines()[0].split(",")
    out_path = Path(out_path) if out_path else csv_paths[0].with_suffix(".gp")
    lines = [
        "# gnuplot script",
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set terminal pngcairo size 900,600",
        f"set output '{csv_paths[0].with_suffix('.png').name}'",
    ]
    if kind == "monitor":
        cols = [c for c in header if c != "t"]
        lines += ["set xlabel 't'", "set multiplot layout 2,1", "set logscale y"]
        plots = []
        for p in csv_paths:
            for c in ("l2_sq", "grad_sq", "grad_us_sq", "us_l2"):
                if c in cols:
                    plots.append(f"'{p.name}' using 't':'{c}' with lines title '{c}'")
        lines.append("plot " + ", \\\n     ".join(plots))
        lines.append("unset logscale y")
        plots = [f"'{p.name}' using 't':'entropy' with lines title 'entropy'" for p in csv_paths]
        lines.append("plot " + ", \\\n     ".join(plots))
        lines.append("unset multiplot")
    elif kind == "refinement":
        rows = [r.split(",") for r in csv_paths[0].read_text(encoding="utf-8").splitlines()[1:]]
        orders = [r[header.index("order")] for r in rows if r[header.index("order")] != "nan"]
        slope = orders[-1] if orders else "nan"
        lines += [
            "set logscale xy",
            "set xlabel 'level'",
            "set ylabel 'distance'",
            f"set label 1 'observed order {slope}' at graph 0.05, graph 0.9",
            f"plot '{csv_paths[0].name}' using 'level':'mean_distance' with linespoints title 'distance to finest', \\",
            f"     '{csv_paths[0].name}' using 'level':'rms_neighbour_diff' with linespoints title 'neighbour difference'",
        ]
    else:
        raise DomainError(f"plot kind must be 'monitor' or 'refinement', got {kind!r}")
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_path


# ---------------------------------------------------------------------------
# subcommands


def _cmd_check(cfg: RunConfig, out: Path, args, log) -> int:
    params = cfg.params
    dom = check_dominance(params)
    log(f"species n={params.n}, s={params.s:g}")
    log("pi = " + ", ".join(f"{p:.12g}" for p in params.pi))
    log("strong margins = " + ", ".join(f"{m:.6g}" for m in dom.strong_margins) + f"  ({'ok' if dom.strong_ok else 'FAIL'})")
    log("weak margins   = " + ", ".join(f"{m:.6g}" for m in dom.weak_margins) + f"  ({'ok' if dom.weak_ok else 'FAIL'})")
    certs, status = [], EXIT_OK
    for kind in LEMMA_KINDS:
        try:
            cert = certify_lemma(kind, params, args.samples, cfg.seed)
        except CertificateError as exc:
            log(f"{kind}: no certificate: {exc}")
            status = max(status, EXIT_INVALID)
            continue
        except FalsificationError as exc:
            log(f"{kind}: FALSIFIED: {exc}; witness {exc.witness}")
            status = EXIT_NUMERICAL
            continue
        certs.append(cert.to_dict())
        log(
            f"{kind}: alpha1={cert.alpha1:.6g} alpha2={cert.alpha2:.6g} "
            f"samples={cert.samples_tested} worst_slack={cert.worst_slack:.6g}"
        )
    report = {"certificates": certs}
    if not cfg.noise.is_zero:
        rep = check_noise_assumptions(cfg.noise, params, n_samples=min(args.samples, 2000), seed=cfg.seed)
        log(
            f"noise: lipschitz={rep.lipschitz_estimate:.4g} growth={rep.growth_estimate:.4g} "
            f"derivative={rep.derivative_estimate:.4g} entropy_coupling={rep.entropy_coupling_estimate:.4g} "
            f"pass={rep.passed}"
        )
        report["noise"] = {
            "lipschitz_estimate": rep.lipschitz_estimate,
            "growth_estimate": rep.growth_estimate,
            "derivative_estimate": rep.derivative_estimate,
            "entropy_coupling_estimate": rep.entropy_coupling_estimate,
            "sample_count": rep.sample_count,
            "caps": rep.caps,
            "pass": rep.passed,
        }
    path = out / "certificates.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, "check", cfg, [cfg.seed], [path])
    return status


def _cmd_simulate(cfg: RunConfig, out: Path, args, log) -> int:
    rec = run_path(cfg, cfg.seed)
    path = write_monitor_csv(out / "monitors.csv", rec, cfg.params.n)
    files = [path]
    if args.plot:
        files.append(emit_plot_script([path], "monitor"))
    write_manifest(out, "simulate", cfg, [cfg.seed], files)
    log(f"{len(rec.monitors)} monitor rows written to {path}")
    if rec.truncated:
        log(f"path truncated: {rec.error}")
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_ensemble(cfg: RunConfig, out: Path, args, log) -> int:
    basis = build_basis(cfg.grid)
    seeds = [cfg.seed + p for p in range(cfg.n_paths)]
    records = run_paths(lambda p: run_path(cfg, seeds[p], basis=basis), cfg.n_paths, cfg.workers)
    est = ensemble_moments(cfg, max(cfg.n_paths, 2), cfg.seed, records=records)
    path = write_moments_csv(out / "moments.csv", est)
    write_manifest(out, "ensemble", cfg, seeds, [path])
    for e in est:
        log(f"{e.name}: {e.mean:.6g} +/- {e.std_error:.3g} ({e.paths} paths, {e.truncated_paths} truncated)")
    return EXIT_OK


def _cmd_converge(cfg: RunConfig, out: Path, args, log) -> int:
    table = refinement_study(cfg.converge_kind, cfg, cfg.converge_levels, cfg.n_paths, cfg.seed, cfg.workers)
    path = write_refinement_csv(out / "refinement.csv", table)
    files = [path]
    if args.plot:
        files.append(emit_plot_script([path], "refinement"))
    write_manifest(out, "converge", cfg, [cfg.seed + p for p in range(cfg.n_paths)], files)
    log(f"{cfg.converge_kind} levels {list(table.levels)}: mean distance {list(table.mean_distance)}")
    log(f"orders {list(table.orders)}, decreasing fraction {table.decreasing_fraction:.3f}")
    return EXIT_OK


_COMMANDS = {
    "check": _cmd_check,
    "simulate": _cmd_simulate,
    "ensemble": _cmd_ensemble,
    "converge": _cmd_converge,
}


def run_command(subcommand: str, config, flags=None, log=None, err=None) -> int:
    """Run a subcommand on a config (RunConfig or path) and return the exit code."""
    flags = flags if flags is not None else argparse.Namespace()
    for key, default in (("seed", None), ("paths", None), ("out", None), ("workers", None), ("plot", False), ("samples", 100_000)):
        if not hasattr(flags, key):
            setattr(flags, key, default)
    log = log or (lambda msg: print(msg))
    err = err or (lambda msg: print(msg, file=sys.stderr))
    if subcommand not in _COMMANDS:
        err(f"unknown subcommand {subcommand!r}")
        return EXIT_INVALID
    try:
        cfg = config if isinstance(config, RunConfig) else load_config(config)
        over = {}
        if flags.seed is not None:
            over["seed"] = flags.seed
        if flags.paths is not None:
            over["n_paths"] = flags.paths
        if flags.out is not None:
            over["output_dir"] = str(flags.out)
        if flags.workers is not None:
            over["workers"] = flags.workers
        cfg = replace(cfg, **over) if over else cfg
    except (ConfigError, DomainError, OSError) as exc:
        err(str(exc))
        return EXIT_INVALID
    for w in cfg.warnings:
        err(f"warning: {w}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _COMMANDS[subcommand](cfg, out, flags, log)
    except (EnsembleError, StepError, ConvergenceError, ModelError, FalsificationError) as exc:
        err(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except (DomainError, CertificateError) as exc:
        err(str(exc))
        return EXIT_INVALID


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crossdiff", description="Stochastic cross-diffusion batch simulator")
    p.add_argument("command", choices=sorted(_COMMANDS))
    p.add_argument("--config", required=True, help="configuration file")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--paths", type=int, help="override the configured path count")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="worker threads for path ensembles")
    p.add_argument("--samples", type=int, default=100_000, help="samples per lemma certificate (check)")
    p.add_argument("--plot", action="store_true", help="also emit a gnuplot script")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    return run_command(args.command, args.config, args)


if __name__ == "__main__":
    sys.exit(main())
