"""Command-line interface: ``hoproc roots|field|simulate|verify|registry``."""
from __future__ import annotations

import json
import sys

import click
import numpy as np

from .config import ConfigError, parse_config, parse_point
from .fields import FIELD_KINDS, SingularInputError, field_table
from .roots import RootSystemError, dump_roots
from .runio import report_passed, run_simulate, run_verify
from .verification import registry_listing


def _system_options(fn):
    fn = click.option("--k", "k", type=float, default=None, help="Multiplicity on every orbit.")(fn)
    fn = click.option("--rank", type=int, default=None)(fn)
    fn = click.option("--system", default=None, help="Root system name such as A2, B3 or BC1.")(fn)
    fn = click.option("--config", "config_file", type=click.Path(), default=None,
                      help="YAML or JSON run configuration; flags override its keys.")(fn)
    return fn


def _run_options(fn):
    for name, typ, help_ in (
        ("--seed", int, "Master seed."), ("--dt", float, "Euler step."), ("--T", float, "Horizon."),
        ("--paths", int, "Number of paths."), ("--wall-floor", float, "Pairing floor in the drift."),
        ("--rate-cap", float, "Cap on each jump rate."), ("--stride", int, "Store every stride-th step."),
        ("--workers", int, "Worker processes."),
    ):
        fn = click.option(name, type=typ, default=None, help=help_)(fn)
    return fn


def _load(config_file, **flags):
    try:
        return parse_config(config_file, **flags)
    except (ConfigError, RootSystemError) as exc:
        raise click.UsageError(str(exc)) from None


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Heckman-Opdam and Dunkl process simulation on root systems."""


@main.command()
@_system_options
def roots(config_file, system, rank, k):
    """Print the roots, multiplicities and orbits of a system."""
    cfg = _load(config_file, system=system, rank=rank, k=k)
    for line in dump_roots(cfg.build_model()):
        click.echo(line)


@main.command()
@_system_options
@click.option("--kind", type=click.Choice(FIELD_KINDS), default="ho_drift", show_default=True)
@click.option("--point", "points", multiple=True, required=True, help="Comma-separated coordinates; repeatable.")
def field(config_file, system, rank, k, kind, points):
    """Evaluate a drift field or jump-rate vector at the given points."""
    cfg = _load(config_file, system=system, rank=rank, k=k)
    model = cfg.build_model()
    try:
        pts = np.stack([parse_point(p) for p in points])
        if pts.shape[1] != model.rank:
            raise ConfigError(f"points must have {model.rank} coordinates")
        vals = field_table(model, kind, pts)
    except (ConfigError, SingularInputError) as exc:
        raise click.UsageError(str(exc)) from None
    click.echo("point," + kind)
    for p, v in zip(pts, np.atleast_2d(vals)):
        click.echo(" ".join(f"{c:.15g}" for c in p) + "," + " ".join(f"{c:.15g}" for c in v))


@main.command()
@_system_options
@_run_options
@click.option("--process", type=str, default=None, help="ho, dunkl, intrinsic, f0_complex or brownian.")
@click.option("--radial-only", is_flag=True, default=None, help="Skip the chamber jumps.")
@click.option("--start", type=str, default=None, help="Comma-separated start point in the closed chamber.")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
def simulate(config_file, system, rank, k, process, radial_only, start, out, **run):
    """Simulate paths and write CSV files plus a run.json sidecar."""
    flags = dict(system=system, rank=rank, k=k, process=process, radial_only=radial_only, out=out,
                 start=None if start is None else parse_point(start).tolist(), **_rename(run))
    cfg = _load(config_file, **flags)
    try:
        side = run_simulate(cfg)
    except (ConfigError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(json.dumps({"out": cfg.out, "files": side["files"], "flags": side["flags"]}, indent=2))


@main.command()
@_system_options
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--ids", type=str, default=None, help="Comma-separated registry ids (default: all).")
@click.option("--report", type=click.Path(), default=None, help="Write the JSON report here (default stdout).")
def verify(config_file, system, rank, k, seed, workers, ids, report):
    """Run verification entries; exit code 0 iff no selected entry fails."""
    cfg = _load(config_file, system=system, rank=rank, k=k, seed=seed, workers=workers, verify=ids)
    rep = run_verify(cfg)
    text = json.dumps(rep, indent=2)
    if report:
        with open(report, "w") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)
    for e in rep["entries"]:
        click.echo(f"{e['id']:<12} {e['status']:<8} {e['runtime']:.1f}s", err=True)
    sys.exit(0 if report_passed(rep) else 1)


@main.command()
@click.option("--json", "as_json", is_flag=True, help="Print the full listing as JSON.")
def registry(as_json):
    """List the verification ids with their anchors and default budgets."""
    listing = registry_listing()
    if as_json:
        click.echo(json.dumps(listing, indent=2))
        return
    for e in listing:
        click.echo(f"{e['id']:<12} {e['anchor']}")


def _rename(run: dict) -> dict:
    mapping = {"wall_floor": "wall_floor", "rate_cap": "rate_cap", "t": "T"}
    return {mapping.get(k, k): v for k, v in run.items()}


if __name__ == "__main__":
    main()
