"""Command-line front end.

    homoclinickit analyze --config demo.conf --out out/
    homoclinickit scatter --config demo.conf --out out/ --seed 3
    homoclinickit report --out out/

Exit codes: 0 when every stage and certificate passed, 2 when a certificate
failed, 1 on any other error.
"""

import functools
import sys

import click

from . import __version__
from .config import LOG_LEVELS, default_config, parse_config
from .engine import STAGES, Engine
from .errors import CertificateFailure, HomoclinicKitError
from .reports import emit_reports, rerender_summary

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CERTIFICATE = 2


@click.group()
@click.version_option(__version__, prog_name="homoclinickit")
def cli():
    """Homoclinic orbits to a 1-elliptic fixed point of a 4-D symplectic map."""
    pass


def run_options(func):
    """Options shared by every pipeline verb."""
    @click.option('--config', '-c', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None,
                  help='Path to a key = value configuration file (demo model when omitted)')
    @click.option('--out', '-o', 'out_dir', type=click.Path(file_okay=False), default=None,
                  help='Directory for the report files (config out_dir when omitted)')
    @click.option('--stage', 'stage', type=click.Choice(STAGES), default=None,
                  help='Stop after this stage')
    @click.option('--seed', 'seed', type=click.IntRange(min=0), default=None,
                  help='Seed for every random draw of the run')
    @click.option('--threads', 'threads', type=click.IntRange(min=1), default=None,
                  help='Worker threads for the KAM scan and trace jobs')
    @click.option('--log-path', 'log_path', type=click.Path(dir_okay=False), default=None,
                  help='Append JSON-lines logs to this file')
    @click.option('--log-level', 'log_level', type=click.Choice(LOG_LEVELS, case_sensitive=False), default=None,
                  help='Level for the homoclinickit logger')
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        return func(*args, **kwargs)
    return wrapper


def _load_config(config_path, out_dir, seed, threads, log_path, log_level):
    cfg = parse_config(config_path) if config_path else default_config()
    return cfg.with_overrides(out_dir=out_dir, seed=seed, log_path=log_path,
                              log_level=log_level.upper() if log_level else None,
                              **{"analysis.threads": threads})


def _run(stop_after=None, stages=None, **opts):
    """Load config, run the pipeline, write reports and exit with the run's code."""
    engine = None
    try:
        stage = opts.pop("stage")
        cfg = _load_config(**opts)
        if stage is not None:
            stop_after = stage if stop_after is None else min(stage, stop_after, key=STAGES.index)
        engine = Engine()
        report = engine.run_pipeline(cfg, stop_after=stop_after, stages=stages)
        emit_reports(report, cfg.out_dir)
    except HomoclinicKitError as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_CERTIFICATE if isinstance(e, CertificateFailure) else EXIT_ERROR)
    finally:
        if engine is not None:
            engine.close()

    for name, rec in report.stages.items():
        click.echo(f"{name}: {rec.status}")
    if report.error is not None:
        click.echo(f"Error: {report.error}", err=True)
    for cert in report.failed_certificates:
        click.echo(f"certificate {cert.name} failed: value={cert.value} threshold={cert.threshold}", err=True)
    click.echo(f"Reports written to {cfg.out_dir}")
    sys.exit(report.exit_code())


@cli.command()
@run_options
def analyze(**opts):
    """Run the full pipeline: model, orbit, scattering, KAM curves, traces and intersections."""
    _run(**opts)


@cli.command()
@run_options
def scatter(**opts):
    """Build the scattering matrix and stop."""
    _run(stop_after="scattering", **opts)


@cli.command()
@run_options
def genericity(**opts):
    """Classify the scattering matrix and stop."""
    _run(stop_after="genericity", **opts)


@cli.command(name="kam-scan")
@run_options
def kam_scan(**opts):
    """Scan the action grid for invariant curves of the center map."""
    _run(stages=("build", "fixed_point", "kam_scan"), **opts)


@cli.command(name="homoclinic-scan")
@run_options
def homoclinic_scan(**opts):
    """Assemble the homoclinic orbit and the manifold distance diagnostic."""
    _run(stages=("build", "fixed_point", "homoclinic"), **opts)


@cli.command()
@run_options
def report(**opts):
    """Re-render summary.txt from the files of an output directory."""
    try:
        out_dir = opts["out_dir"]
        if out_dir is None:
            out_dir = (parse_config(opts["config_path"]) if opts["config_path"] else default_config()).out_dir
        path = rerender_summary(out_dir)
    except HomoclinicKitError as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_ERROR)
    with open(path, "r", encoding="utf-8") as fh:
        click.echo(fh.read(), nl=False)


if __name__ == "__main__":
    cli()
