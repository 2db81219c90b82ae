"""Orchestration: simulation runs written to CSV and verification reports written to JSON."""
from __future__ import annotations

import hashlib
import io
import json
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig
from .jumps import JumpOptions, simulate_skew_product, write_events_csv, write_full_csv
from .sde import SimConfig, simulate_radial, write_paths_csv
from .verification import run_verification

JUMP_PROCESSES = ("ho", "dunkl", "f0_complex")


def git_blob_hash(data: bytes) -> str:
    """Hash identical to ``git hash-object`` for the given bytes."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def sim_config(cfg: RunConfig) -> SimConfig:
    model = cfg.build_model()
    return SimConfig(model, cfg.process, start=cfg.start, dt=cfg.dt, horizon=cfg.T, path_count=cfg.paths,
                     master_seed=cfg.seed, wall_floor=cfg.wall_floor, stride=cfg.stride, workers=cfg.workers)


def _write(path: Path, text: str) -> str:
    data = text.encode()
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None
    return git_blob_hash(data)


def _render(writer, *args) -> str:
    buf = io.StringIO()
    writer(*args, buf)
    return buf.getvalue()


def run_simulate(cfg: RunConfig) -> dict:
    """Simulate and write ``paths.csv`` (plus ``full.csv``/``events.csv`` for jump processes) and ``run.json``."""
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    sc = sim_config(cfg)
    files = {}
    if cfg.process in JUMP_PROCESSES and not cfg.radial_only:
        res = simulate_skew_product(sc, options=JumpOptions(rate_cap=cfg.rate_cap))
        radial = _radial_view(res)
        files["paths.csv"] = _write(out / "paths.csv", _render(write_paths_csv, radial))
        files["full.csv"] = _write(out / "full.csv", _render(write_full_csv, res))
        files["events.csv"] = _write(out / "events.csv", _render(write_events_csv, res))
        flags = res.flags
    else:
        res = simulate_radial(sc)
        files["paths.csv"] = _write(out / "paths.csv", _render(write_paths_csv, res))
        flags = res.flags
    resolved = cfg.to_dict()
    resolved["start"] = np.asarray(sc.start).tolist()
    resolved["wall_floor"] = sc.floor
    payload = json.dumps(resolved, sort_keys=True).encode()
    sidecar = {"config": resolved, "config_hash": git_blob_hash(payload), "files": files,
               "flags": list(flags), "version": __version__}
    _write(out / "run.json", json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return sidecar


class _radial_view:
    """Adapter exposing the radial part of skew-product paths to :func:`write_paths_csv`."""

    def __init__(self, res):
        self.path_ids, self.times, self.states = res.path_ids, res.times, res.radial


def run_verify(cfg: RunConfig) -> dict:
    model = cfg.build_model()
    entries = run_verification(model, cfg.verify, cfg.seed, cfg.budgets, cfg.workers)
    echo = cfg.to_dict()
    echo["python"] = platform.python_version()
    echo["numpy"] = np.__version__
    echo["version"] = __version__
    return {"config_echo": echo, "entries": entries}


def report_passed(report: dict) -> bool:
    """True iff no selected entry failed (skipped entries do not count as failures)."""
    return all(e["status"] != "fail" for e in report["entries"])
