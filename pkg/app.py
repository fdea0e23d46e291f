"""
Command line entry point: run a scenario, check the algebraic lemmas, render reports.

Exit codes: 0 ok, 1 property failure or no convergence, 2 configuration error,
3 flow breakdown.
"""
import logging
from pathlib import Path

import click

import config
from errors import AdmissibilityError, ArgumentError, ConfigurationError, FlowBreakdownError
from lemmas import check_lemmas
from report import RunReport, render_report, write_oscillation_csv
from scenario import execute_run, load_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PROPERTY = 1
EXIT_CONFIG = 2
EXIT_BREAKDOWN = 3


@click.group()
@click.option('--log-level', default=None, help='Overrides PPFLOW_LOG_LEVEL.')
def cli(log_level):
    """Parabolic (p,p)-form flows on the flat torus."""
    level = (log_level or config.LOG_LEVEL).upper()
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    logging.getLogger().setLevel(level)


@cli.command()
@click.argument('config_path', required=False, type=click.Path(exists=True, dir_okay=False))
@click.option('--config', 'config_option', type=click.Path(exists=True, dir_okay=False),
              help='Scenario TOML file (alternative to the positional argument).')
@click.option('--out-dir', default='ppflow-out', show_default=True, type=click.Path(file_okay=False))
@click.option('--threads', type=click.IntRange(min=1), envvar='PPFLOW_THREADS',
              help='Worker threads for the pointwise kernel.')
@click.option('--seed', type=int, help='Overrides flow.seed.')
@click.pass_context
def run(ctx, config_path, config_option, out_dir, threads, seed):
    """Evolve the scenario in CONFIG_PATH and write diagnostics, dumps and report.json."""
    path = config_option or config_path
    if path is None:
        raise click.UsageError('a scenario file is required (CONFIG_PATH or --config)')
    try:
        scenario_config = load_config(path)
        report = execute_run(scenario_config, out_dir, threads=threads, seed=seed)
    except ConfigurationError as error:
        click.echo(f"configuration error: {error}", err=True)
        ctx.exit(EXIT_CONFIG)
    except AdmissibilityError as error:
        click.echo(f"initial data not admissible: {error}", err=True)
        for point in error.violating:
            click.echo(f"  violating point {point}", err=True)
        ctx.exit(EXIT_CONFIG)
    except FlowBreakdownError as error:
        click.echo(f"flow breakdown at t={error.t:.6g}: {error}", err=True)
        ctx.exit(EXIT_BREAKDOWN)

    click.echo(f"{report.verdict}: residual {report.final_residual:.3e}, b = {report.b:.12g}, "
               f"t = {report.t_end:.6g}")
    click.echo(f"report written to {report.artifacts['report']}")
    ctx.exit(report.exit_code)


@cli.command('check-lemmas')
@click.option('--n', 'n', type=int, required=True)
@click.option('--p', 'p', type=int, required=True)
@click.option('--samples', type=click.IntRange(min=1), default=10000, show_default=True)
@click.option('--seed', type=int, default=None)
@click.pass_context
def check_lemmas_command(ctx, n, p, samples, seed):
    """Run the randomized property suites for (n, p)."""
    try:
        result = check_lemmas(n, p, samples=samples, seed=seed)
    except ArgumentError as error:
        click.echo(f"invalid arguments: {error}", err=True)
        ctx.exit(EXIT_CONFIG)
    for line in result.lines():
        click.echo(line)
    ctx.exit(EXIT_OK if result.passed else EXIT_PROPERTY)


@cli.command()
@click.argument('report_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--out-dir', default=None, type=click.Path(file_okay=False),
              help='Where report.txt and oscillation.csv go (default: next to the report).')
@click.pass_context
def report(ctx, report_path, out_dir):
    """Render a report.json to text and a plot-ready oscillation table."""
    try:
        loaded = RunReport.load(report_path)
    except ArgumentError as error:
        click.echo(f"invalid report: {error}", err=True)
        ctx.exit(EXIT_CONFIG)
    target = Path(out_dir) if out_dir else Path(report_path).parent
    target.mkdir(parents=True, exist_ok=True)
    text = render_report(loaded)
    (target / 'report.txt').write_text(text, encoding='utf-8')
    write_oscillation_csv(loaded, target / 'oscillation.csv')
    click.echo(text)


if __name__ == '__main__':
    cli()
