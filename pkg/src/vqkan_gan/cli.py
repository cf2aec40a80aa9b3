"""Command-line entry point: train, evaluate, seed-study, sweep.

Every command writes only inside its run directory. The manifest is written
before any training starts and never touched again.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    DEFAULTS,
    ConfigError,
    load_config_file,
    load_dataset,
    parse_override,
    resolve,
    train_config,
)
from .data import DataFormatError, Dataset
from .generator import generator_from_dict
from .metrics import SeedGroup, bonferroni_matrix, write_matrix_csv
from .training import evaluate, train

log = logging.getLogger("vqkan_gan")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
WORKERS_ENV = "VQKAN_MAX_WORKERS"


class DataError(RuntimeError):
    """Missing or unreadable input data or run artifacts."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def parse_overrides(tokens: list[str]) -> dict:
    """``--key value`` pairs; ``--key`` alone means true. Dashes in keys become underscores."""
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, text = key.split("=", 1)
            i += 1
        elif i + 1 < len(tokens) and not tokens[i + 1].startswith("--"):
            text = tokens[i + 1]
            i += 2
        else:
            text = "true"
            i += 1
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = parse_override(key, text)
    return out


def resolve_args(args) -> dict:
    file_values = load_config_file(args.config) if args.config else {}
    return resolve(file_values, parse_overrides(args.overrides))


def _fresh_run_dir(path) -> Path:
    run_dir = Path(path)
    if (run_dir / "manifest.json").exists():
        raise ConfigError(f"run directory {run_dir} already holds a manifest; pick a new one")
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _dataset(cfg: dict) -> Dataset:
    try:
        return load_dataset(cfg)
    except FileNotFoundError as exc:
        raise DataError(f"dataset file not found: {exc.filename}") from None
    except DataFormatError as exc:
        raise DataError(str(exc)) from None
    except ValueError as exc:
        raise DataError(f"dataset: {exc}") from None


def write_manifest(run_dir: Path, command: list[str], cfg: dict, seeds: list[int], ds: Dataset) -> dict:
    manifest = {
        "command": command,
        "config": cfg,
        "seeds": seeds,
        "dataset_fingerprint": ds.fingerprint(),
        "version": __version__,
        "created": _now(),
        "metric_notes": {
            "kid": "unbiased squared MMD on raw pixel vectors, kernel (x.y/d + 1)^3; no Inception features",
            "swd": "sliced W2 over seeded Gaussian unit directions",
        },
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def max_workers(n_jobs: int) -> int:
    cap = os.environ.get(WORKERS_ENV)
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = int(cap)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {cap!r}") from None
        if limit < 1:
            raise ConfigError(f"{WORKERS_ENV} must be >= 1")
    return max(1, min(n_jobs, limit))


def _run_one(cfg: dict, ds: Dataset, run_dir: str) -> dict:
    """One training run in a worker; failures come back as data, not exceptions."""
    try:
        out = train(train_config(cfg), ds, run_dir)
    except Exception as exc:  # noqa: BLE001  (isolate per-run failures)
        log.exception("run in %s failed", run_dir)
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
    recs = out.log.eval_records()
    return {
        "ok": True,
        "iterations": [r.iteration for r in recs],
        "mse": [r.mse for r in recs],
        "swd": [r.swd for r in recs],
        "kid": [r.kid for r in recs],
        "total_ms": out.log.total_ms,
        "n_iterations": len(out.log.records),
    }


def _fan_out(jobs: list[tuple[dict, Dataset, str]]) -> list[dict]:
    workers = max_workers(len(jobs))
    if workers == 1:
        return [_run_one(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_one, *job) for job in jobs]
        return [f.result() for f in futures]


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _cell(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = resolve_args(args)
    ds = _dataset(cfg)
    run_dir = _fresh_run_dir(args.run_dir)
    write_manifest(run_dir, args.argv, cfg, [cfg["seed"]], ds)
    out = train(train_config(cfg), ds, run_dir)
    last = out.log.records[-1]
    print(f"{run_dir}: {last.iteration} iterations, mse {last.mse:.6f} swd {last.swd:.6f} kid {last.kid:.6f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise DataError(f"run directory {run_dir} does not exist")
    snap_path, manifest_path = run_dir / "snapshot.json", run_dir / "manifest.json"
    for path in (snap_path, manifest_path):
        if not path.exists():
            raise DataError(f"{path} is missing; is {run_dir} a finished train run?")
    base = json.loads(manifest_path.read_text())["config"]
    cfg = resolve(base, parse_overrides(args.overrides))
    snap = json.loads(snap_path.read_text())
    gen = generator_from_dict(snap["generator"])
    latents = np.array(snap["eval_latents"], dtype=float)
    ds = _dataset(cfg)
    if ds.images.shape[1] != gen.config.image_len:
        raise DataError(f"dataset images have {ds.images.shape[1]} pixels, generator emits {gen.config.image_len}")
    real = ds.images[: len(latents)]
    m = evaluate(gen, latents, real, cfg["swd_projections"], cfg["metric_seed"])
    name = args.output or f"metrics_seed{cfg['metric_seed']}.csv"
    if Path(name).name != name:
        raise ConfigError(f"--output must be a file name inside the run directory, got {name!r}")
    out = run_dir / name
    _write_rows(out, ["iteration", "metric_seed", "mse", "swd", "kid"],
                [[snap["iteration"], cfg["metric_seed"], _cell(m["mse"]), _cell(m["swd"]), _cell(m["kid"])]])
    print(f"{out}: mse {m['mse']:.6f} swd {m['swd']:.6f} kid {m['kid']:.6f}")
    return EXIT_OK


def cmd_seed_study(args) -> int:
    cfg = resolve_args(args)
    seeds = cfg["seeds"]
    if len(seeds) < 2:
        raise ConfigError("key 'seeds' needs at least 2 seeds for a seed study")
    if -(-cfg["iterations"] // cfg["eval_every"]) < 2:
        raise ConfigError("key 'iterations' must span at least 2 evaluation points (see 'eval_every') for a seed study")
    ds = _dataset(cfg)
    run_dir = _fresh_run_dir(args.run_dir)
    write_manifest(run_dir, args.argv, cfg, seeds, ds)
    jobs = [({**cfg, "seed": s}, ds, str(run_dir / f"seed-{s}")) for s in seeds]
    results = _fan_out(jobs)

    ok = [s for s, r in zip(seeds, results) if r["ok"]]
    n = len(seeds)
    t, p = np.full((n, n), np.nan), np.full((n, n), np.nan)
    mask = np.full((n, n), None, dtype=object)
    if len(ok) >= 2:
        res = bonferroni_matrix([SeedGroup(s, r["swd"]) for s, r in zip(seeds, results) if r["ok"]])
        pos = [seeds.index(s) for s in ok]
        t[np.ix_(pos, pos)], p[np.ix_(pos, pos)] = res.t, res.p
        for a, i in enumerate(pos):
            for b, j in enumerate(pos):
                mask[i, j] = bool(res.significant[a, b])
    write_matrix_csv(run_dir / "t.csv", seeds, t, "t value")
    write_matrix_csv(run_dir / "p.csv", seeds, p, "p value")
    write_matrix_csv(run_dir / "mask.csv", seeds, mask, "significant")
    _write_rows(
        run_dir / "seeds.csv",
        ["seed", "status", "final_swd", "mean_swd", "error"],
        [
            [s, "ok", _cell(r["swd"][-1]), _cell(np.mean(r["swd"])), ""] if r["ok"] else [s, "failed", "", "", r["error"]]
            for s, r in zip(seeds, results)
        ],
    )
    failed = n - len(ok)
    print(f"{run_dir}: {len(ok)} seeds finished, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


def cmd_sweep(args) -> int:
    cfg = resolve_args(args)
    seeds = cfg["seeds"] if args.all_seeds else [cfg["seed"]]
    depths = cfg["depths"]
    ds = _dataset(cfg)
    run_dir = _fresh_run_dir(args.run_dir)
    write_manifest(run_dir, args.argv, cfg, seeds, ds)
    grid = [(s, d) for s in seeds for d in depths]
    jobs = []
    for s, d in grid:
        try:
            train_config({**cfg, "seed": s, "depth": d})
        except ValueError as exc:
            raise ConfigError(f"key 'depths': depth {d} invalid: {exc}") from None
        jobs.append(({**cfg, "seed": s, "depth": d}, ds, str(run_dir / f"seed-{s}-depth-{d}")))
    results = _fan_out(jobs)

    summary, curves = [], []
    for (s, d), r in zip(grid, results):
        if not r["ok"]:
            summary.append([s, d, "failed", "", "", "", "", "", r["error"]])
            continue
        per_iter = r["total_ms"] / r["n_iterations"]
        summary.append([s, d, "ok", _cell(r["mse"][-1]), _cell(r["swd"][-1]), _cell(r["kid"][-1]),
                        f"{r['total_ms']:.3f}", f"{per_iter:.3f}", ""])
        for it, m, w, k in zip(r["iterations"], r["mse"], r["swd"], r["kid"]):
            curves.append([s, d, it, _cell(m), _cell(w), _cell(k)])
    _write_rows(run_dir / "sweep.csv",
                ["seed", "depth", "status", "final_mse", "final_swd", "final_kid", "total_ms", "ms_per_iteration", "error"],
                summary)
    _write_rows(run_dir / "curves.csv", ["seed", "depth", "iteration", "mse", "swd", "kid"], curves)
    failed = sum(not r["ok"] for r in results)
    print(f"{run_dir}: {len(grid) - failed} runs finished, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqkan-gan",
        allow_abbrev=False,
        description="VQKAN generator vs MLP discriminator on a state-vector simulator.",
        epilog="Any config key can be overridden as --key value, e.g. --generator qgan --depth 6 --basis rbf.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="one training run", allow_abbrev=False)
    p.add_argument("--config", help="JSON config file (a run manifest also works)")
    p.add_argument("--run-dir", default="runs/train", help="output directory (default: runs/train)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="recompute metrics from a run's snapshot", allow_abbrev=False)
    p.add_argument("run_dir")
    p.add_argument("--output", help="CSV name inside the run directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("seed-study", help="one run per seed plus pairwise Welch/Bonferroni matrices on SWD", allow_abbrev=False)
    p.add_argument("--config")
    p.add_argument("--run-dir", default="runs/seed-study")
    p.set_defaults(func=cmd_seed_study)

    p = sub.add_parser("sweep", help="one run per depth, aggregated SWD/KID/time", allow_abbrev=False)
    p.add_argument("--config")
    p.add_argument("--run-dir", default="runs/sweep")
    p.add_argument("--all-seeds", action="store_true", help="sweep every seed in 'seeds' instead of just 'seed'")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    args.overrides = rest
    args.argv = ["vqkan-gan", *argv]
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
