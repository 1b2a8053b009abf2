"""Command-line entry point ``hallmhd``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import snapshot
from .config import resolve
from .diagnostics import (
    MomentConfig,
    aldous_increments,
    convergence_in_n,
    energy_balance_residual,
    h_family,
    martingale_residual,
    mean_estimate,
    moment_estimates,
    quadratic_variation_check,
    richardson_slope,
)
from .integrator import ConfigError, EnsembleResult, run_ensemble, resolve_threads
from .noise import validate_noise
from .spectral import make_lattice

EXIT_OK, EXIT_CONFIG, EXIT_ANOMALY, EXIT_VERIFY = 0, 2, 3, 4
log = logging.getLogger("hallmhd")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _g(x: float) -> str:
    return format(float(x), ".17g")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o)}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def write_energies(path: Path, ens: EnsembleResult) -> None:
    npsi = len(ens.config.test_functions)
    head = ["path", "t", "energy_H", "energy_V"] + [f"martingale_{i}" for i in range(npsi)]
    lines = [",".join(head)]
    for r in ens.records:
        for m, t in enumerate(r.times):
            row = [str(r.path), _g(t), _g(r.energy_H[m]), _g(r.energy_V[m])]
            row += [_g(r.martingale[m, i]) for i in range(npsi)]
            lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def write_snapshots(directory: Path, ens: EnsembleResult, prefix: str = "") -> None:
    directory.mkdir(parents=True, exist_ok=True)
    dt = ens.config.dt
    for r in ens.records:
        for i, t in enumerate(r.snapshot_times):
            step = int(round(t / dt))
            snapshot.write_state(directory / f"{prefix}path{r.path:05d}_step{step:07d}.bin", r.state(i), t)


def _ensemble_summary(ens: EnsembleResult, resolved: dict) -> dict:
    cfg = ens.config
    out = {
        "n_paths": ens.n_paths,
        "stopped_paths": ens.stopped,
        "aborted_paths": ens.aborted,
        "energy_balance_final": mean_estimate(
            np.array([energy_balance_residual(r, cfg)[-1] for r in ens.records])).as_dict(),
    }
    mom = resolved.get("moments")
    if mom and cfg.noise is not None:
        cert = validate_noise(cfg.noise, cfg.params).certificate
        mc = MomentConfig.from_eta(cert.eta, float(mom.get("p", 2.0)), tuple(mom.get("q_list", [2.0])))
        out["moments"] = moment_estimates(ens, mc).as_dict()
    elif mom:
        mc = MomentConfig(float(mom.get("p", 2.0)), tuple(mom.get("q_list", [2.0])))
        out["moments"] = moment_estimates(ens, mc).as_dict()
    if cfg.test_functions and ens.n_paths > 1:
        hs = h_family()
        T = cfg.T
        out["martingale"] = {name: martingale_residual(ens, 0, T / 2, T, h).as_dict() for name, h in hs.items()}
        out["quadratic_variation"] = quadratic_variation_check(ens, 0, 0).as_dict()
    ald = resolved.get("aldous")
    if ald:
        out["aldous"] = aldous_increments(ens, ald["thetas"], ald.get("m", 3.0),
                                          tuple(ald.get("base_times", [0.0]))).as_dict()
    return out


def _finish(out: Path, resolved: dict, args, started: float, extra: dict | None = None) -> None:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "artifact_version": _version(),
        "command": args.command,
        "config": resolved,
        "seed": resolved["seed"],
        "threads": resolve_threads(args.threads),
        "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config_sha256": hashlib.sha256(json.dumps(resolved, sort_keys=True, default=_json_default)
                                        .encode()).hexdigest(),
        "outputs": {str(p.relative_to(out)): _sha256(p) for p in files},
        "domain": "periodic box [0, L)^3 standing in for R^3",
    }
    if extra:
        manifest.update(extra)
    _write_json(out / "manifest.json", manifest)


def _apply_overrides(raw: dict, args) -> dict:
    raw = dict(raw)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.paths is not None:
        raw["n_paths"] = args.paths
    return raw


def cmd_run(args) -> int:
    started = time.time()
    raw = json.loads(Path(args.config).read_text()) if args.config else None
    if raw is None:
        raise ConfigError("--config is required")
    raw = _apply_overrides(raw, args)
    if args.command == "simulate":
        raw["n_paths"] = 1
    cfg, resolved = resolve(raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = resolve_threads(args.threads)
    anomaly = False

    if args.command in ("simulate", "ensemble"):
        ens = run_ensemble(cfg, threads=threads)
        write_energies(out / "energies.csv", ens)
        write_snapshots(out / "snapshots", ens)
        report = _ensemble_summary(ens, resolved)
        _write_json(out / "report.json", report)
        anomaly = bool(ens.stopped or ens.aborted)

    elif args.command == "sweep-n":
        values = _values(args.values) or resolved.get("sweep", {}).get("n_values")
        if not values:
            raise ConfigError("sweep-n needs --values or sweep.n_values")
        big = make_lattice(cfg.lattice.N, cfg.lattice.L, max(values))
        template = cfg.on_lattice(big) if big != cfg.lattice else cfg
        conv = convergence_in_n(template, values, threads=threads)
        ensembles = conv.pop("ensembles")
        per_n = {}
        for n, ens in ensembles.items():
            write_energies(out / f"energies_n{n:g}.csv", ens)
            per_n[f"{n:g}"] = _ensemble_summary(ens, resolved)
            anomaly |= bool(ens.stopped or ens.aborted)
        conv["per_n"] = per_n
        _write_json(out / "convergence.json", conv)

    elif args.command == "sweep-dt":
        values = _values(args.values) or resolved.get("sweep", {}).get("dt_values")
        if not values:
            raise ConfigError("sweep-dt needs --values or sweep.dt_values")
        rows = []
        for dt in values:
            c = cfg.replace(dt=float(dt))
            ens = run_ensemble(c, threads=threads)
            res = np.array([abs(energy_balance_residual(r, c)[-1]) for r in ens.records])
            rows.append({"dt": dt, "mean_abs_residual": mean_estimate(res).as_dict()})
            write_energies(out / f"energies_dt{dt:g}.csv", ens)
            anomaly |= bool(ens.stopped or ens.aborted)
        slope = richardson_slope([r["dt"] for r in rows], [r["mean_abs_residual"]["value"] for r in rows]) \
            if len(rows) > 1 else None
        _write_json(out / "dt_sweep.json", {"schema_version": 1, "rows": rows, "slope": slope})

    _finish(out, resolved, args, started)
    if anomaly:
        log.error("blow-up guard or non-finite state encountered; see report")
        return EXIT_ANOMALY
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_all

    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_all(seeds=args.seeds)
    _write_json(out / "verify.json", result)
    resolved = {"seed": 0, "verify_seeds": args.seeds}
    _finish(out, resolved, args, started)
    failed = [k for k, ok in result["checks"].items() if not ok]
    for k in failed:
        log.error("verification failed: %s", k)
    return EXIT_OK if not failed else EXIT_VERIFY


def _values(text: str | None):
    if not text:
        return None
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hallmhd", description="Truncated stochastic Hall-MHD simulator")
    p.add_argument("command", choices=["simulate", "ensemble", "sweep-n", "sweep-dt", "verify"])
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the RNG seed")
    p.add_argument("--paths", type=int, help="override the number of paths")
    p.add_argument("--threads", type=int, help="worker threads (default: HALLMHD_THREADS or 1)")
    p.add_argument("--values", help="comma-separated cut-offs or time steps for sweeps")
    p.add_argument("--seeds", type=int, default=20, help="random draws per verify suite")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if not args.config:
            raise ConfigError("--config is required")
        return cmd_run(args)
    except ConfigError as e:
        log.error("%s", e)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        log.error("%s", e)
        return EXIT_CONFIG
    except json.JSONDecodeError as e:
        log.error("config is not valid JSON: %s", e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
