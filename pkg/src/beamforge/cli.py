"""Batch front-end: config parsing with unit normalization, design/benchmark
runs, and artifact serialization (JSON codebooks, CSV grids, run manifest).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import benchmarks
from .channel import (Codebook, band, build_grid, codebook_rsnr_trace,
                      coverage_set, gains_over)
from .scenario import ScenarioConfig, SolverParams, db_to_linear, dbm_to_watt
from .search import SCHEMES, SolverError, sequential_design

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_RECHECK = 4


class ConfigError(ValueError):
    pass


class RecheckError(RuntimeError):
    """Post-hoc feasibility recheck failed on a designed codebook."""


# unit-variant key -> (canonical key, converter)
_SCENARIO_UNITS = {
    "alpha_deg": ("alpha", math.radians),
    "psi_min_deg": ("psi_min", math.radians),
    "psi_max_deg": ("psi_max", math.radians),
    "sigma_psi_deg": ("sigma_psi", math.radians),
    "v_kmh": ("v", lambda x: x / 3.6),
    "p_t_dbm": ("p_t", dbm_to_watt),
    "p_n_dbm": ("p_n", dbm_to_watt),
    "gamma_th_db": ("gamma_th", db_to_linear),
}

_SCENARIO_REQUIRED = ("f_c", "n_t", "y_0", "alpha", "v", "p_t", "p_n",
                      "eta", "r_0", "psi_min", "psi_max", "gamma_th", "eps_t")
_SCENARIO_OPTIONAL = ("b_f", "delta_t", "sigma_psi", "p_th")
_SOLVER_KEYS = tuple(SolverParams.__dataclass_fields__)


def _normalize_scenario(raw: dict) -> dict:
    out = {}
    for key, val in raw.items():
        if key in _SCENARIO_UNITS:
            canon, conv = _SCENARIO_UNITS[key]
            if canon in raw:
                raise ConfigError(f"both '{key}' and '{canon}' given")
            out[canon] = conv(val)
        elif key in _SCENARIO_REQUIRED or key in _SCENARIO_OPTIONAL:
            out[key] = val
        else:
            raise ConfigError(f"unknown scenario key '{key}'")
    for key in _SCENARIO_REQUIRED:
        if key not in out:
            raise ConfigError(f"missing scenario key '{key}'")
    return out


def parse_config(path: str | Path) -> tuple[ScenarioConfig, SolverParams]:
    """Load a JSON config with `scenario` and `solver` sections.

    Unit variants (alpha_deg, v_kmh, p_t_dbm, p_n_dbm, gamma_th_db, ...) are
    normalized here; everything downstream is radians / linear watts / m/s.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in raw:
        if key not in ("scenario", "solver"):
            raise ConfigError(f"unknown top-level key '{key}'")
    if "scenario" not in raw:
        raise ConfigError("missing 'scenario' section")
    scen = _normalize_scenario(raw["scenario"])
    solver_raw = raw.get("solver", {})
    for key in solver_raw:
        if key not in _SOLVER_KEYS:
            raise ConfigError(f"unknown solver key '{key}'")
    try:
        cfg = ScenarioConfig(**scen)
        params = SolverParams(**solver_raw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, params


def config_digest(cfg: ScenarioConfig, params: SolverParams, scheme: str) -> str:
    """Stable hex digest of the canonicalized config."""
    payload = {"scenario": asdict(cfg), "solver": asdict(params), "scheme": scheme}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: Path, header: list[str], rows):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def codebook_to_json(cb: Codebook) -> str:
    beams = []
    for b in cb.beams:
        inter = np.empty(2 * len(b.weights))
        inter[0::2] = b.weights.real
        inter[1::2] = b.weights.imag
        beams.append({"phi_lo": b.phi_lo, "phi_hi": b.phi_hi,
                      "weights": inter.tolist()})
    return json.dumps({"n": cb.n, "switch_angles": cb.switch_angles,
                       "beams": beams}, indent=1, sort_keys=True)


def codebook_from_json(text: str) -> Codebook:
    from .channel import Beam
    raw = json.loads(text)
    beams = []
    for b in raw["beams"]:
        inter = np.asarray(b["weights"])
        beams.append(Beam(weights=inter[0::2] + 1j * inter[1::2],
                          phi_lo=b["phi_lo"], phi_hi=b["phi_hi"]))
    return Codebook(beams=beams)


def run_design(cfg: ScenarioConfig, params: SolverParams, scheme: str,
               out_dir: str | Path) -> dict:
    """Design a codebook and write codebook.json, pattern.csv, rsnr.csv,
    band.csv and manifest.json into out_dir. Returns the manifest dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    grid = build_grid(cfg)
    cb = sequential_design(grid, cfg, params, scheme)

    # exact feasibility recheck before anything is written
    for beam in cb.beams:
        idx = coverage_set(grid, beam.phi_lo, beam.phi_hi, cfg.sigma_psi, cfg.p_th)
        if len(idx) and np.any(gains_over(grid.steering[idx], beam.weights)
                               < grid.gamma[idx]):
            raise RecheckError(
                f"beam over [{beam.phi_lo}, {beam.phi_hi}) fails the gain recheck")

    _atomic_write(out / "codebook.json", codebook_to_json(cb))

    psi_grid = np.concatenate([
        np.linspace(cfg.psi_min, cfg.psi_max, 2001), grid.psi])
    psi_grid = np.unique(psi_grid)
    from .channel import steering_for
    r_line = np.array([_interp_r(grid, p) for p in psi_grid])
    a_grid = steering_for(cfg, psi_grid, r_line)
    rows = []
    for m, p in enumerate(psi_grid):
        row = [f"{p:.10g}"]
        for beam in cb.beams:
            g = float(np.abs(a_grid[m].conj() @ beam.weights) ** 2)
            row.append(f"{10.0 * math.log10(max(g, 1e-300)):.6f}")
        rows.append(row)
    _write_csv(out / "pattern.csv",
               ["psi_rad"] + [f"beam_{i}_gain_db" for i in range(cb.n)], rows)

    trace, _ = codebook_rsnr_trace(cb, grid, cfg, rng_seed=params.seed,
                                   sigma_psi=cfg.sigma_psi)
    edges = np.array(cb.switch_angles)
    beam_idx = np.clip(np.searchsorted(edges, grid.psi, side="right") - 1,
                       0, cb.n - 1)
    _write_csv(out / "rsnr.csv",
               ["t_s", "psi_rad", "beam_index", "rsnr_db"],
               [[f"{t:.10g}", f"{p:.10g}", int(i),
                 f"{10.0 * math.log10(max(s, 1e-300)):.6f}"]
                for t, p, i, s in zip(grid.t, grid.psi, beam_idx, trace)])

    psis = np.linspace(cfg.psi_min, cfg.psi_max, 101)
    _write_csv(out / "band.csv", ["psi_rad", "band_m"],
               [[f"{p:.10g}",
                 f"{band(float(p), cfg.n_t, cfg.b_f, 0.05, cfg):.6f}"]
                for p in psis])

    manifest = {
        "digest": config_digest(cfg, params, scheme),
        "scheme": scheme,
        "seed": params.seed,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(t0)),
        "outputs": ["codebook.json", "pattern.csv", "rsnr.csv", "band.csv"],
        "n": cb.n,
        "seconds": time.time() - t0,
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def _interp_r(grid, psi: float) -> float:
    return float(np.interp(psi, grid.psi, grid.r))


def _spread_stats(cb: Codebook, grid, cfg):
    trace, _ = codebook_rsnr_trace(cb, grid, cfg)
    covered = trace > 0
    db = 10.0 * np.log10(trace[covered])
    return float(db.min()), float(db.max())


def compare_schemes(cfg: ScenarioConfig, params: SolverParams,
                    scheme_list: list[str], out_dir: str | Path,
                    threads: int = 1) -> list[dict]:
    """Design with each scheme and tabulate N, RSNR range/spread, wall-clock."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = build_grid(cfg)
    rows = []
    reference_n = None
    for scheme in scheme_list:
        t0 = time.time()
        if scheme in SCHEMES:
            cb = sequential_design(grid, cfg, params, scheme)
            if scheme == "pp_pdg_ms":
                reference_n = cb.n
        else:
            n = reference_n
            if n is None:
                n = sequential_design(grid, cfg, params, "pp_pdg_ms").n
                reference_n = n
            part = {"ubw": benchmarks.ubw_partition,
                    "esc": benchmarks.esc_partition,
                    "nubw_m": benchmarks.nubw_m_partition,
                    "nubw_s": benchmarks.nubw_s_partition}[scheme](cfg, n)
            cb = benchmarks.partition_codebook(grid, part, params, cfg, threads)
        lo_db, hi_db = _spread_stats(cb, grid, cfg)
        rows.append({"scheme": scheme, "n": cb.n,
                     "min_rsnr_db": round(lo_db, 6),
                     "max_rsnr_db": round(hi_db, 6),
                     "spread_db": round(hi_db - lo_db, 6),
                     "seconds": round(time.time() - t0, 3)})
    _write_csv(out / "compare.csv",
               ["scheme", "n", "min_rsnr_db", "max_rsnr_db", "spread_db", "seconds"],
               [[r["scheme"], r["n"], r["min_rsnr_db"], r["max_rsnr_db"],
                 r["spread_db"], r["seconds"]] for r in rows])
    return rows


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="beamforge",
                                 description="beam-switching codebook design")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scheme=True):
        p.add_argument("--config", required=True)
        p.add_argument("--out", default="out")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        if scheme:
            p.add_argument("--scheme", default="pp_pdg_ms")

    common(sub.add_parser("design", help="design a codebook"))
    common(sub.add_parser("band", help="near-field distance sweep"), scheme=False)
    p_eval = sub.add_parser("evaluate", help="RSNR trace of an existing codebook")
    common(p_eval, scheme=False)
    p_eval.add_argument("--codebook", required=True)
    p_bench = sub.add_parser("benchmark", help="partition-scheme codebook")
    common(p_bench)
    p_cmp = sub.add_parser("compare", help="multi-scheme comparison table")
    common(p_cmp, scheme=False)
    p_cmp.add_argument("--schemes", default="",
                       help="comma-separated list, e.g. pp_pdg_ms,ubw")
    return ap


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("BEAMFORGE_THREADS")
    return int(env) if env else 1


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg, params = parse_config(args.config)
        if args.seed is not None:
            params = SolverParams(**{**asdict(params), "seed": args.seed})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    threads = _resolve_threads(args)
    out = Path(args.out)
    try:
        if args.command == "design":
            if args.scheme not in SCHEMES:
                print(f"config error: unknown scheme '{args.scheme}'", file=sys.stderr)
                return EXIT_CONFIG
            manifest = run_design(cfg, params, args.scheme, out)
            print(f"N={manifest['n']} scheme={args.scheme} out={out}")
        elif args.command == "band":
            out.mkdir(parents=True, exist_ok=True)
            psis = np.linspace(cfg.psi_min, cfg.psi_max, 101)
            _write_csv(out / "band.csv", ["psi_rad", "band_m"],
                       [[f"{p:.10g}",
                         f"{band(float(p), cfg.n_t, cfg.b_f, 0.05, cfg):.6f}"]
                        for p in psis])
            print(f"band sweep written to {out / 'band.csv'}")
        elif args.command == "evaluate":
            cb = codebook_from_json(Path(args.codebook).read_text())
            grid = build_grid(cfg)
            trace, switches = codebook_rsnr_trace(cb, grid, cfg,
                                                  rng_seed=params.seed,
                                                  sigma_psi=cfg.sigma_psi)
            out.mkdir(parents=True, exist_ok=True)
            _write_csv(out / "rsnr.csv", ["t_s", "psi_rad", "rsnr_db"],
                       [[f"{t:.10g}", f"{p:.10g}",
                         f"{10.0 * math.log10(max(s, 1e-300)):.6f}"]
                        for t, p, s in zip(grid.t, grid.psi, trace)])
            print(f"samples={grid.m_count} switches={switches} out={out}")
        elif args.command == "benchmark":
            schemes = {"ubw": benchmarks.ubw_partition,
                       "esc": benchmarks.esc_partition,
                       "nubw_m": benchmarks.nubw_m_partition,
                       "nubw_s": benchmarks.nubw_s_partition}
            if args.scheme not in schemes:
                print(f"config error: unknown benchmark scheme '{args.scheme}'",
                      file=sys.stderr)
                return EXIT_CONFIG
            grid = build_grid(cfg)
            n = sequential_design(grid, cfg, params, "pp_pdg_ms").n
            part = schemes[args.scheme](cfg, n)
            cb = benchmarks.partition_codebook(grid, part, params, cfg, threads)
            out.mkdir(parents=True, exist_ok=True)
            _atomic_write(out / "codebook.json", codebook_to_json(cb))
            print(f"N={cb.n} scheme={args.scheme} out={out}")
        elif args.command == "compare":
            names = [s for s in args.schemes.split(",") if s]
            rows = compare_schemes(cfg, params, names, out, threads)
            for r in rows:
                print(f"{r['scheme']}: N={r['n']} spread={r['spread_db']} dB "
                      f"({r['seconds']} s)")
    except RecheckError as exc:
        print(f"recheck error: {exc}", file=sys.stderr)
        return EXIT_RECHECK
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
