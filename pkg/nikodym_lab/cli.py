"""
nikodym-lab Command Line

Entry point for the `nikodym-lab` console script:
- One subcommand per experiment, all sharing the run options
  (--config, --metric, --delta-list, --out, --threads, --seed, --format, --svg)
- Every run writes its tables and JSON report through ReportStore and
  refreshes manifest.json
- A short rich summary table is printed at the end of each command

Exit status is 0 on completion (check verdicts are reported, not raised),
1 when an experiment raises a package error, 2 on usage errors.
"""

import logging
import time
from typing import Any, Callable, Dict, Optional, Sequence

import click
from rich.console import Console
from rich.table import Table

from . import __version__
from .config import ExperimentConfig, config_hash, load_config
from .errors import ConfigError, NikodymLabError
from .experiments import (
    ScalingReport,
    boxdim,
    counterexample_quartic,
    counterexample_sogge,
    curvature_report,
    discrete_bound,
    fermi_check,
    fold_check,
    maximal_scaling,
    nikodym_degenerate,
    taylor_check,
)
from .persistence import ReportStore

logger = logging.getLogger(__name__)

LOG_FORMAT = "[%(asctime)s] [%(name)-20s] [%(levelname)-5s] %(message)s"
LOG_DATEFMT = "%H:%M:%S"

console = Console()


# ========== Setup ==========


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Configure the root logger once per process."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, datefmt=LOG_DATEFMT, force=True)
    # matplotlib is chatty at DEBUG
    logging.getLogger("matplotlib").setLevel(max(level, logging.INFO))


def parse_metric_option(value: str):
    """'name' or 'name:p1,p2' -> (name, [p1, p2])."""
    name, _, params = value.partition(":")
    try:
        return name.strip(), [float(p) for p in params.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad metric parameters in '{value}'", field="metric")


def parse_delta_list(value: str):
    """Comma-separated deltas; '2^-5' style powers are accepted."""
    deltas = []
    for token in value.replace(" ", "").split(","):
        if not token:
            continue
        try:
            if "^" in token:
                base, exponent = token.split("^")
                deltas.append(float(base) ** float(exponent))
            else:
                deltas.append(float(token))
        except ValueError:
            raise ConfigError(f"cannot parse '{token}'", field="deltas")
    return deltas


def resolve_config(
    config_path: Optional[str],
    metric: Optional[str] = None,
    delta_list: Optional[str] = None,
    out: Optional[str] = None,
    threads: Optional[int] = None,
    seed: Optional[int] = None,
    table_format: Optional[str] = None,
    svg: Optional[bool] = None,
) -> ExperimentConfig:
    """Load the TOML configuration and apply command-line overrides."""
    config = load_config(config_path)
    overrides: Dict[str, Any] = {
        "out": out,
        "threads": threads,
        "seed": seed,
        "format": table_format,
        "svg": svg or None,
    }
    if metric:
        overrides["metric"], params = parse_metric_option(metric)
        if params:
            overrides["metric_params"] = params
    if delta_list:
        overrides["deltas"] = parse_delta_list(delta_list)
    return config.with_overrides(**overrides)


def with_command_option(config: ExperimentConfig, command: str, **values) -> ExperimentConfig:
    """Merge non-None values into config.commands[command]."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return config
    commands = {k: dict(v) for k, v in config.commands.items()}
    commands.setdefault(command, {}).update(values)
    return config.with_overrides(commands=commands)


# ========== Output ==========


def _scalar_items(report: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Flatten scalar entries one level deep for the summary table."""
    items = {}
    for key, value in report.items():
        if key in ("rows", "records", "runtime"):
            continue
        if isinstance(value, (bool, int, float, str)):
            items[f"{prefix}{key}"] = value
        elif isinstance(value, dict) and not prefix:
            items.update(_scalar_items(value, prefix=f"{key}."))
    return items


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "[green]yes[/green]" if value else "[red]no[/red]"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def print_summary(command: str, result: Any, runtime: float) -> None:
    table = Table(title=f"{command} ({runtime:.1f} s)")
    if isinstance(result, ScalingReport):
        table.add_column("quantity")
        table.add_column("slope", justify="right")
        table.add_column("band95", justify="right")
        table.add_column("expected", justify="right")
        for name, fit in result.fits.items():
            expected = result.expected.get(name)
            table.add_row(name, f"{fit.slope:.4f}", f"{fit.band:.3g}", "-" if expected is None else f"{expected:.4f}")
    else:
        table.add_column("key")
        table.add_column("value", justify="right")
        for key, value in _scalar_items(result).items():
            table.add_row(key, _format(value))
    console.print(table)


def store_result(store: ReportStore, command: str, result: Any) -> None:
    if isinstance(result, ScalingReport):
        store.write_table(command, "scaling", result.rows)
        store.write_json(command, "report", result.to_dict())
        store.write_scaling_svg(command, "scaling", result)
        return
    rows = result.get("rows")
    if rows:
        store.write_table(command, "rows", rows)
    store.write_json(command, "report", result)


def run_command(command: str, config: ExperimentConfig, fn: Callable[[], Any]) -> Any:
    """
    Run one experiment and persist its outputs.

    Raises:
        click.ClickException: the experiment raised a package error
    """
    store = ReportStore(config.out, config.format, config.svg)
    logger.info(f"{command}: started (metric {config.metric_name}, seed {config.seed}, threads {config.threads})")
    started = time.perf_counter()
    try:
        result = fn()
    except NikodymLabError as e:
        logger.error(f"{command} failed: {e}")
        raise click.ClickException(str(e))
    runtime = time.perf_counter() - started
    store_result(store, command, result)
    store.record_runtime(command, runtime)
    store.write_manifest(config, config_hash(config))
    logger.info(f"{command}: finished in {runtime:.2f} s")
    print_summary(command, result, runtime)
    return result


# ========== Options ==========


def run_options(fn):
    """Options shared by every subcommand."""
    decorators = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="TOML file"),
        click.option("--metric", help="Builtin metric, optionally with parameters: space_form:1"),
        click.option("--delta-list", help="Comma-separated deltas, descending (0.125,2^-4,...)"),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory"),
        click.option("--threads", type=click.IntRange(min=1), help="Worker threads"),
        click.option("--seed", type=int, help="Random seed"),
        click.option("--format", "table_format", type=click.Choice(["csv", "json"]), help="Table format"),
        click.option("--svg", is_flag=True, default=False, help="Write log-log scaling plots"),
        click.option("--verbose", "-v", is_flag=True, help="DEBUG logging"),
        click.option("--quiet", "-q", is_flag=True, help="WARNING logging, no progress bars"),
    ]
    for decorator in reversed(decorators):
        fn = decorator(fn)
    return fn


def _prepare(options: Dict[str, Any]) -> ExperimentConfig:
    setup_logging(options.pop("verbose"), options.get("quiet"))
    options.pop("quiet")
    try:
        return resolve_config(**options)
    except ConfigError as e:
        raise click.BadParameter(str(e))


@click.group()
@click.version_option(__version__, prog_name="nikodym-lab")
def main() -> None:
    """Numerical experiments on Nikodym-type maximal functions in curved 3-manifolds."""


def _simple(name: str, fn: Callable[[ExperimentConfig], Any], help_text: str, progress: bool = False):
    @main.command(name=name, help=help_text)
    @run_options
    def command(**options):
        quiet = options["quiet"]
        config = _prepare(options)
        if progress:
            run_command(name, config, lambda: fn(config, progress=not quiet))
        else:
            run_command(name, config, lambda: fn(config))

    return command


curvature_report_cmd = _simple(
    "curvature-report", curvature_report, "Tensor identities, constant-curvature test and chaotic margins."
)
fermi_check_cmd = _simple("fermi-check", fermi_check, "Geodesic accuracy and Fermi chart conditions.")
taylor_check_cmd = _simple("taylor-check", taylor_check, "Third and fourth order geodesic coefficients against rho.")
fold_check_cmd = _simple("fold-check", fold_check, "Fold identities and fold Hessian leading terms.", progress=True)
maximal_scaling_cmd = _simple(
    "maximal-scaling", maximal_scaling, "Structural properties of the maximal operators.", progress=True
)
counterexample_sogge_cmd = _simple(
    "counterexample-sogge", counterexample_sogge, "Fan counterexample scaling in sogge_example.", progress=True
)
counterexample_quartic_cmd = _simple(
    "counterexample-quartic", counterexample_quartic, "Fan counterexample for a quartic-form metric.", progress=True
)
nikodym_degenerate_cmd = _simple(
    "nikodym-degenerate", nikodym_degenerate, "Totally geodesic half-plane and geodesic capture."
)


@main.command(name="boxdim")
@run_options
@click.option("--region", "regions", multiple=True, help="Region name from [regions] or an inequality (repeatable)")
def boxdim_cmd(regions: Sequence[str], **options):
    """Minkowski dimension of a region by box counting."""
    config = _prepare(options)
    region = None
    if len(regions) == 1:
        region = regions[0]
    elif regions:
        region = list(regions)
    run_command("boxdim", config, lambda: boxdim(config, region))


@main.command(name="discrete-bound")
@run_options
@click.option("--family", type=click.Choice(["sliding_bush", "disjoint", "common_point"]), help="Synthetic tube family")
@click.option("--e-path", type=click.Path(exists=True, dir_okay=False), help="ScalarField file to use as E")
def discrete_bound_cmd(family: Optional[str], e_path: Optional[str], **options):
    """Both sides of the discrete tube inequalities with multiplicity selection."""
    config = with_command_option(_prepare(options), "discrete-bound", family=family, e_path=e_path)
    run_command("discrete-bound", config, lambda: discrete_bound(config))


if __name__ == "__main__":
    main()
