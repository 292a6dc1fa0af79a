import logging
from pathlib import Path
from typing import Any

import click
import pandas as pd
from dotenv import load_dotenv

from karma.ar_fit import LossKind
from karma.commands import (
    ExportKind,
    export_plotdata,
    rediagnose,
    run_calibrate,
    run_cluster,
    run_outlier,
    run_recover,
    run_vanish,
    simulate_dataset,
)
from karma.commands.cluster import result_path
from karma.constants import (
    CALIBRATION_PHI,
    DEFAULT_LAGS,
    DEFAULT_RESTARTS,
    VANISHING_REPLICATIONS,
    resolve_config_path,
)
from karma.evaluation import builtin_specs
from karma.exceptions import AssignmentError, ClusteringFailureError, KarmaError
from karma.kmodels import InitKind, VanishPolicy
from karma.logging import setup_logging
from karma.manifest import InputFormat, RunManifest
from karma.utils import parse_int_list

logger = logging.getLogger(__name__)


BANNER = r"""
 _
| | ____ _ _ __ _ __ ___   __ _
| |/ / _` | '__| '_ ` _ \ / _` |
|   < (_| | |  | | | | | | (_| |
|_|\_\__,_|_|  |_| |_| |_|\__,_|

"""

SPEC_NAMES = [spec.name for spec in builtin_specs()]
LOSSES = [k.value for k in LossKind]
INITS = [k.value for k in InitKind]


class RichGroup(click.Group):
    """Custom Click group that displays a banner before the help text."""

    def format_help(self, ctx: click.Context, formatter: click.HelpFormatter) -> None:
        """Writes the help into the formatter if it exists.

        This method is called by Click when the help text is requested.
        """
        click.secho(BANNER, nl=False)
        super().format_help(ctx, formatter)


def get_version() -> str:
    """Get version info."""
    from karma import __version__

    return __version__


def get_copyright() -> str:
    """Get copyright info."""
    from karma import __copyright__

    return __copyright__


def _int_list(
    ctx: click.Context, param: click.Parameter, value: str | None
) -> list[int] | None:
    if value is None:
        return None
    try:
        return parse_int_list(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc), ctx=ctx, param=param) from exc


def _echo_table(table: pd.DataFrame) -> None:
    click.echo(table.to_string(index=False))


@click.group(
    cls=RichGroup,
    help="K-Models clustering of time series under AR, ARMA and ARIMA models.",
)
@click.version_option(
    version=get_version(),
    prog_name="karma",
    message="%(prog)s %(version)s\n"
    + get_copyright()
    + "\n"
    + "This is free software; see the source for copying conditions.  There is NO\n"
    + "warranty; not even for MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.",
)
@click.option(
    "--debug",
    is_flag=True,
    help="Enable debug logging, including per-iteration clustering progress.",
)
@click.pass_context
def cli(ctx: click.Context, debug: bool) -> None:
    """Entrypoint for karma CLI."""
    load_dotenv()
    setup_logging(debug)

    ctx.ensure_object(dict)
    ctx.obj["DEBUG"] = debug


@cli.command()
@click.argument("input", required=False)
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=resolve_config_path,
    show_default="env: KARMA_CONFIG",
    help="JSON run manifest; flags override its fields.",
)
@click.option(
    "--format",
    "format",
    type=click.Choice([f.value for f in InputFormat]),
    help="Input layout: one row per series or id,t,value rows.",
)
@click.option("--labels", help="Column holding ground-truth labels.")
@click.option("--center/--no-center", default=None, help="Subtract series means.")
@click.option("--log/--no-log", default=None, help="Log-transform the series.")
@click.option("--rolling-window", type=int, help="Rolling mean window (1 = off).")
@click.option("--d", type=int, help="Differencing order applied before clustering.")
@click.option("--p", type=int, help="AR order.")
@click.option("--q", type=int, help="MA order; q > 0 selects CSS ARMA fitting.")
@click.option("--loss", type=click.Choice(LOSSES), help="AR loss: l2 or l1.")
@click.option("--k", type=int, help="Number of clusters.")
@click.option("--init", type=click.Choice(INITS), help="Initialization method.")
@click.option("--restarts", type=int, help="Restarts; the smallest loss wins.")
@click.option("--seed", type=int, help="Seed of the first restart.")
@click.option("--lags", type=int, help="Autocorrelation lags of the diagnostics.")
@click.option("--threshold", type=float, help="Flag series below this p-value.")
@click.option(
    "--relaxed-lengths/--strict-lengths",
    default=None,
    help="Score unequal-length clusters with per-series lengths.",
)
@click.option("--max-iters", type=int, help="Upper bound on K-Models iterations.")
@click.option(
    "--vanish",
    type=click.Choice([v.value for v in VanishPolicy]),
    help="What happens to a cluster left without series.",
)
@click.option("--jobs", "n_jobs", type=int, help="Clusters fitted in parallel.")
@click.option("--output", help="Result document path.")
def cluster(config: Path | None, **options: Any) -> None:
    """Cluster the series of INPUT and write a JSON result document."""
    base = RunManifest.load(config) if config else RunManifest()
    manifest = base.merge(options)
    run_cluster(manifest)
    click.echo(result_path(manifest))


@cli.command()
@click.argument("result", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--lags", type=int, help="Autocorrelation lags.")
@click.option("--threshold", type=float, help="Flag series below this p-value.")
@click.option(
    "--relaxed-lengths/--strict-lengths",
    default=None,
    help="Score unequal-length clusters with per-series lengths.",
)
@click.option(
    "--output",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Write the updated document here instead of replacing RESULT.",
)
def diagnose(
    result: Path,
    lags: int | None,
    threshold: float | None,
    relaxed_lengths: bool | None,
    output: Path | None,
) -> None:
    """Recompute the diagnostics of a stored RESULT."""
    document = rediagnose(result, lags, threshold, relaxed_lengths, output)
    report = document["diagnostics"] or {}
    click.echo(f"flagged: {', '.join(report.get('flagged', [])) or '-'}")
    for row in report.get("clusters", []):
        test = row["q_group_r"]
        click.echo(
            f"cluster {row['index']}: Q={test['statistic']:.4f} "
            f"df={test['df']} p={test['p_value']:.4g} worst={row['worst_series']}"
        )


@cli.command()
@click.argument("spec", type=click.Choice(SPEC_NAMES))
@click.argument("path", type=click.Path(dir_okay=False, path_type=Path))
@click.option(
    "--format",
    "fmt",
    type=click.Choice([f.value for f in InputFormat]),
    default=InputFormat.WIDE.value,
    show_default=True,
)
@click.option("--seed", type=int, help="Dataset seed (default: the design's own).")
def simulate(spec: str, path: Path, fmt: str, seed: int | None) -> None:
    """Write the builtin design SPEC to PATH as CSV with a label column."""
    simulate_dataset(spec, path, InputFormat(fmt), seed)


@cli.group()
def study() -> None:
    """Reproduce the simulation experiments."""


@study.command()
@click.argument("spec", type=click.Choice(SPEC_NAMES))
@click.option(
    "--k",
    "k_values",
    default="1-10",
    show_default=True,
    callback=_int_list,
    help="Cluster counts, e.g. 1,2,5-8.",
)
@click.option("--init", type=click.Choice(INITS), default=InitKind.PROTOTYPE.value)
@click.option("--loss", type=click.Choice(LOSSES), default=LossKind.L1.value)
@click.option(
    "--replications", type=int, default=VANISHING_REPLICATIONS, show_default=True
)
def vanish(
    spec: str, k_values: list[int], init: str, loss: str, replications: int
) -> None:
    """Count the clusters that survive single K-Models runs."""
    table = run_vanish(spec, k_values, InitKind(init), LossKind(loss), replications)
    _echo_table(table)


@study.command()
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--T", "T", type=int, default=200, show_default=True)
@click.option("--m", type=int, default=15, show_default=True)
@click.option("--replications", type=int, default=2000, show_default=True)
@click.option("--phi", type=float, default=CALIBRATION_PHI, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def calibrate(n: int, T: int, m: int, replications: int, phi: float, seed: int) -> None:
    """Sample the grouped statistics under correctly specified AR(1) clusters."""
    _echo_table(run_calibrate(n, T, m, replications, seed, phi))


@study.command()
@click.argument("spec", type=click.Choice(SPEC_NAMES))
@click.option(
    "--seeds",
    default="0-9",
    show_default=True,
    callback=_int_list,
    help="Dataset seeds.",
)
@click.option("--k", type=int, help="Number of clusters (default: the design's).")
@click.option("--init", type=click.Choice(INITS), default=InitKind.PROTOTYPE.value)
@click.option("--loss", type=click.Choice(LOSSES), default=LossKind.L2.value)
@click.option("--restarts", type=int, default=DEFAULT_RESTARTS, show_default=True)
def recover(
    spec: str,
    seeds: list[int],
    k: int | None,
    init: str,
    loss: str,
    restarts: int,
) -> None:
    """Score how well best-of-restarts runs recover the generating clusters."""
    table = run_recover(spec, seeds, k, InitKind(init), LossKind(loss), restarts)
    _echo_table(table)


@study.command()
@click.option(
    "--seeds",
    default="0",
    show_default=True,
    callback=_int_list,
    help="Dataset seeds.",
)
@click.option("--m", type=int, default=DEFAULT_LAGS, show_default=True)
@click.option("--restarts", type=int, default=DEFAULT_RESTARTS, show_default=True)
def outlier(seeds: list[int], m: int, restarts: int) -> None:
    """Plant one foreign series and check that diagnostics single it out."""
    _echo_table(run_outlier(seeds, m, restarts))


@cli.command()
@click.argument("kind", type=click.Choice([k.value for k in ExportKind]))
@click.argument("source", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("path", type=click.Path(dir_okay=False, path_type=Path))
def export(kind: str, source: Path, path: Path) -> None:
    """Write plot input of KIND from SOURCE to PATH.

    SOURCE is a result document for ``scatter`` and a calibration draws table
    for ``hist``.
    """
    export_plotdata(source, kind, path)


def main(args: list[str] | None = None) -> int:
    try:
        cli.main(args=args, standalone_mode=False)
        return 0
    except click.exceptions.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        # Handle keyboard interrupts gracefully
        click.echo("Operation aborted by user")
        return 130  # Standard exit code for SIGINT
    except click.exceptions.Exit as e:
        # Handle normal exit
        return e.exit_code
    except (ClusteringFailureError, AssignmentError) as exc:
        logger.error("Clustering failed: %s", exc)
        return 2
    except (KarmaError, OSError, RuntimeError) as exc:
        logger.error("%s", exc)
        for note in getattr(exc, "__notes__", []):
            logger.error("%s", note)
        return 1
    except Exception as exc:  # pylint: disable=broad-exception-caught
        # Handle unexpected errors
        logger.error(exc, exc_info=True)
        return 1
