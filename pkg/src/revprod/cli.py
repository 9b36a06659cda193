"""Command-line front end: simulate, estimate, diagnose, verify.

Every command is deterministic given (config, seed, input files): output
JSON is written with sorted keys, floats use shortest round-trip formatting,
and no timestamps are recorded.  Exit codes: 0 success, 2 validation failure,
3 solver or estimation failure, 4 I/O failure.

The REVPROD_THREADS environment variable sets the default worker count for
multi-start estimation (overridable per config).
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, parse_config
from .costmin import SolverError
from .diagnostics import build_identification_report, profile_scan
from .estimate import (
    EstimationError,
    build_quantity_moments,
    build_revenue_moments,
    first_stage_project,
    gmm_minimize,
)
from .panel_io import PanelFormatError, read_panel_csv, write_panel_csv
from .simulate import SimulationError, simulate_panel, verify_panel
from .technology import DomainError, ParameterError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _load_schema(name: str) -> dict:
    ref = importlib.resources.files("revprod.schemas").joinpath(name)
    return json.loads(ref.read_text())


def _write_json(payload: dict, path: Path, schema_name: str) -> None:
    import jsonschema

    jsonschema.validate(payload, _load_schema(schema_name))
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _provenance(command: str, cfg: RunConfig, outputs, extra=None) -> dict:
    record = {
        "command": command,
        "config_sha256": cfg.config_sha256,
        "seed": int(cfg.sim.seed),
        "version": __version__,
        "outputs": [str(o) for o in outputs],
    }
    if extra:
        record.update(extra)
    return record


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config, require_seed=args.seed is None)
    if args.seed is not None:
        import dataclasses

        cfg.sim = dataclasses.replace(cfg.sim, seed=args.seed)
    out_dir = Path(args.out or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    panel = simulate_panel(cfg.sim)
    panel_path = out_dir / "panel.csv"
    write_panel_csv(panel, panel_path)
    prov = _provenance("simulate", cfg, [panel_path.name], extra={"n_rows": len(panel)})
    _write_json(prov, out_dir / "provenance.json", "provenance.schema.json")
    logger.info("wrote %s (%d rows)", panel_path, len(panel))
    return EXIT_OK


def _moment_system(cfg: RunConfig, panel, mode: str):
    est = cfg.estimation
    fs = first_stage_project(panel, mode, est.first_stage_degree)
    kind = cfg.sim.tech.kind
    instruments = est.instruments
    if mode == "quantity":
        kwargs = {}
        if instruments is not None:
            kwargs["instruments"] = instruments
        ms = build_quantity_moments(kind, fs, panel, g_degree=est.g_degree, **kwargs)
    else:
        cal_e = est.cal_e if est.cal_e is not None else cfg.sim.shocks.cal_e
        kwargs = {}
        if instruments is not None:
            kwargs["instruments"] = instruments
        if est.level_instruments is not None:
            kwargs["level_instruments"] = est.level_instruments
        ms = build_revenue_moments(
            kind, fs, panel, g_degree=est.g_degree, cal_e=cal_e, which_v=est.which_v, **kwargs
        )
    return fs, ms


def cmd_estimate(args) -> int:
    cfg = parse_config(args.config)
    panel = read_panel_csv(args.panel)
    mode = args.mode
    fs, ms = _moment_system(cfg, panel, mode)
    est = cfg.estimation
    threads = est.threads
    env_threads = os.environ.get("REVPROD_THREADS")
    if env_threads and est.threads == 1:
        threads = max(1, int(env_threads))
    result = gmm_minimize(
        ms,
        weighting=est.weighting,
        restarts=est.restarts,
        seed=est.restart_seed,
        screen=est.screen,
        threads=threads,
    )
    payload = result.to_dict()
    payload["first_stage"] = {
        "degree": fs.degree,
        "r_squared": fs.r_squared,
        "cal_e_hat": fs.cal_e_hat,
    }
    if mode == "revenue":
        payload["non_identified_axes"] = ["beta_K"] if cfg.sim.tech.kind == "CD" else ["v"]
    payload["provenance"] = _provenance(
        "estimate", cfg, [], extra={"panel": Path(args.panel).name, "mode": mode}
    )
    out_dir = Path(args.out or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"estimate_{mode}.json"
    _write_json(payload, out_path, "estimate_result.schema.json")
    logger.info("wrote %s", out_path)
    return EXIT_OK


def _parse_grid(spec: str):
    try:
        start, stop, count = spec.split(":")
        return np.linspace(float(start), float(stop), int(count))
    except ValueError as exc:
        raise ConfigError(f"--grid expects start:stop:count, got {spec!r}") from exc


def cmd_diagnose(args) -> int:
    cfg = parse_config(args.config)
    panel = read_panel_csv(args.panel)
    est = cfg.estimation
    cal_e = est.cal_e if est.cal_e is not None else cfg.sim.shocks.cal_e
    _, ms = _moment_system(cfg, panel, "revenue")
    out_dir = Path(args.out or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    report = build_identification_report(
        panel,
        cfg.sim.tech,
        ms,
        cal_e=cal_e,
        fd_step=cfg.diagnostics.fd_step,
        flat_tol=cfg.diagnostics.flat_tol,
        rank_rtol=cfg.diagnostics.rank_rtol,
        equivalence_tol=cfg.diagnostics.equivalence_tol,
        which_v=est.which_v,
    )
    report_path = out_dir / "identification_report.json"
    _write_json(report.to_json_dict(), report_path, "identification_report.schema.json")
    logger.info("wrote %s", report_path)

    if args.scan:
        grid = _parse_grid(args.grid) if args.grid else np.linspace(0.7, 1.3, 25)
        center = [report.center[n] for n in ms.param_names]
        curve = profile_scan(ms, args.scan, grid, center)
        scan_path = out_dir / f"profile_{args.scan}.csv"
        with open(scan_path, "w") as fh:
            fh.write(f"{args.scan},objective\n")
            for g, v in zip(curve.grid, curve.objective):
                fh.write(f"{g!r},{v!r}\n")
        logger.info("wrote %s", scan_path)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = parse_config(args.config)
    panel = read_panel_csv(args.panel)
    report = verify_panel(panel, cfg.sim)
    payload = {
        "n_rows": report.n_rows,
        "violations": report.violations,
        "first_bad_rows": report.first_bad_rows,
        "passed": report.passed,
    }
    out_dir = Path(args.out or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "verify_report.json"
    _write_json(payload, out_path, "verify_report.schema.json")
    logger.info("wrote %s", out_path)
    if not report.passed:
        logger.error("panel failed verification: %s", report.violations)
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revprod",
        description="Simulate firm panels, estimate production functions, and diagnose what revenue data can identify.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a panel from a config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    sim.add_argument("--out", default=None, help="output directory")
    sim.set_defaults(func=cmd_simulate)

    estp = sub.add_parser("estimate", help="run proxy-variable GMM on a panel")
    estp.add_argument("panel")
    estp.add_argument("--config", required=True)
    estp.add_argument("--mode", choices=["quantity", "revenue"], default="quantity")
    estp.add_argument("--out", default=None)
    estp.set_defaults(func=cmd_estimate)

    diag = sub.add_parser("diagnose", help="identification diagnostics on a panel")
    diag.add_argument("panel")
    diag.add_argument("--config", required=True)
    diag.add_argument("--scan", default=None, help="parameter to profile (writes a CSV)")
    diag.add_argument("--grid", default=None, help="profile grid start:stop:count")
    diag.add_argument("--out", default=None)
    diag.set_defaults(func=cmd_diagnose)

    ver = sub.add_parser("verify", help="check model identities on a panel")
    ver.add_argument("panel")
    ver.add_argument("--config", required=True)
    ver.add_argument("--out", default=None)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PanelFormatError, ParameterError, DomainError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except (SolverError, SimulationError, EstimationError) as exc:
        logger.error("%s", exc)
        return EXIT_SOLVER
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
