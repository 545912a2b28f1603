"""Shared command options, error-to-exit-code mapping, and the validate/synth commands."""

import functools
import logging
from pathlib import Path

import click
import pandas as pd

from geotrade.config import DEFAULT_OUTPUT_DIR, RunConfig, build_config
from geotrade.services.domain import ValidationError
from geotrade.services.glm import ConvergenceError
from geotrade.services.ingest import (
    load_capitals,
    load_cities,
    load_gdp,
    load_ownership,
    load_trade_flows,
)
from geotrade.services.network import ConservationError
from geotrade.services.result_store import write_table
from geotrade.services.synth import FIXTURE_KINDS, generate_fixtures


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

VALIDATION_COLUMNS = ["file", "records", "dropped", "status", "message"]


def _path_option(name: str, help_text: str):
    return click.option(f"--{name}", envvar=f"GEOTRADE_{name.upper()}", default=None, help=help_text)


OPTION_FACTORIES = {
    "trade": lambda: _path_option("trade", "Trade flows file: year,origin,dest,sector,value."),
    "cities": lambda: _path_option("cities", "City file: city_id,name,country,lat,lon,population."),
    "gdp": lambda: _path_option("gdp", "GDP file: country,year,gdp."),
    "capitals": lambda: _path_option("capitals", "Optional capitals file: country,city_id."),
    "ownership": lambda: _path_option(
        "ownership",
        "Ownership file: parent_firm,parent_city,subsidiary_firm,subsidiary_city,ownership_pct,sector,revenue.",
    ),
    "scheme": lambda: click.option(
        "--scheme", envvar="GEOTRADE_SCHEME", default=None, help="Built-in scheme name (trade10, fdi9) or a raw_code,group file."
    ),
    "years": lambda: click.option(
        "--years", envvar="GEOTRADE_YEARS", default=None, help="Comma-separated years or ranges such as 1970-2010:5."
    ),
    "a": lambda: click.option("--a", "a", envvar="GEOTRADE_A", type=float, default=2.0, show_default=True, help="Distance exponent of theoretical flows."),
    "tol": lambda: click.option("--tol", envvar="GEOTRADE_TOL", type=float, default=1e-10, show_default=True, help="IRLS relative deviance tolerance."),
    "max_iter": lambda: click.option("--max-iter", envvar="GEOTRADE_MAX_ITER", type=int, default=50, show_default=True, help="IRLS iteration limit."),
    "k_variant": lambda: click.option(
        "--k-variant",
        envvar="GEOTRADE_K_VARIANT",
        type=click.Choice(["paper", "total-preserving"]),
        default="paper",
        show_default=True,
        help="Calibration of the mobility constant k.",
    ),
    "assume_zero": lambda: click.option(
        "--assume-zero/--observed-only",
        envvar="GEOTRADE_ASSUME_ZERO",
        default=False,
        help="Treat every missing country pair as a zero flow.",
    ),
    "strict": lambda: click.option("--strict/--no-strict", envvar="GEOTRADE_STRICT", default=False, help="Fail with exit code 2 when a fit does not converge."),
    "mass_year": lambda: click.option("--mass-year", envvar="GEOTRADE_MASS_YEAR", type=int, default=None, help="Take GDP masses from this year for every fit."),
    "axes": lambda: click.option("--axes", envvar="GEOTRADE_AXES", type=int, default=3, show_default=True, help="Number of CA axes to keep."),
    "clusters": lambda: click.option("--clusters", envvar="GEOTRADE_CLUSTERS", type=int, default=4, show_default=True, help="Number of Ward clusters to cut."),
    "min_control_pct": lambda: click.option(
        "--min-control-pct", envvar="GEOTRADE_MIN_CONTROL_PCT", type=float, default=50.0, show_default=True, help="Minimum ownership percentage of a control link."
    ),
    "weights": lambda: click.option(
        "--weights", envvar="GEOTRADE_WEIGHTS", type=click.Choice(["revenue", "count"]), default="revenue", show_default=True, help="City x sector cell weights."
    ),
    "min_share": lambda: click.option(
        "--min-share", envvar="GEOTRADE_MIN_SHARE", type=float, default=0.0, show_default=True, help="Minimum revenue share for a sector to count toward a city's specialisation."
    ),
    "out": lambda: click.option("--out", envvar="GEOTRADE_OUT", default=DEFAULT_OUTPUT_DIR, show_default=True, help="Output directory."),
    "format": lambda: click.option("--format", "format", envvar="GEOTRADE_FORMAT", default="csv", show_default=True, help="Comma-separated output formats: csv, json, svg."),
    "jobs": lambda: click.option("--jobs", envvar="GEOTRADE_JOBS", type=int, default=1, show_default=True, help="Worker threads for independent analyses."),
}


def shared_options(*names: str):
    """Attach the named shared options to a command, in the given order."""

    def decorator(func):
        for name in reversed(names):
            func = OPTION_FACTORIES[name]()(func)
        return func

    return decorator


def guarded(default_scheme: str, default_years: str = ""):
    """Build a RunConfig from the command's parameters and map failures to exit codes."""

    def decorator(func):
        @functools.wraps(func)
        @click.pass_context
        def wrapper(ctx: click.Context, **params):
            code = run_guarded(lambda: func(build_config(params, default_scheme, default_years)))
            ctx.exit(code)

        return wrapper

    return decorator


def run_guarded(action) -> int:
    """Run ``action`` and return its exit code, translating known errors."""
    try:
        result = action()
    except ValidationError as error:
        logger.error("%s", error)
        return EXIT_VALIDATION
    except (ConservationError, ConvergenceError) as error:
        logger.error("Numerical failure: %s", error)
        return EXIT_NUMERICAL
    except OSError as error:
        logger.error("I/O failure: %s", error)
        return EXIT_IO
    except ValueError as error:
        logger.error("%s", error)
        return EXIT_VALIDATION
    except Exception:
        logger.exception("Unexpected error while running the command")
        return EXIT_VALIDATION
    return EXIT_OK if result is None else int(result)


@click.command("validate")
@shared_options("trade", "cities", "gdp", "capitals", "ownership", "scheme", "min_control_pct")
@click.option("--ownership-scheme", envvar="GEOTRADE_OWNERSHIP_SCHEME", default=None, help="Sector scheme for ownership links (default fdi9).")
@click.option("--out", envvar="GEOTRADE_OUT", default=None, help="Also write validation.csv into this directory.")
@guarded(default_scheme="trade10")
def validate_cmd(config: RunConfig) -> int:
    """Run every loader on the given files and report record counts and errors."""
    rows = []

    def check(name, path, load, count=len, dropped=lambda _: 0):
        if path is None:
            return None
        try:
            loaded = load()
        except ValidationError as error:
            rows.append((Path(path).name, 0, 0, "error", str(error)))
            return None
        except OSError as error:
            rows.append((Path(path).name, 0, 0, "io-error", str(error)))
            return None
        rows.append((Path(path).name, count(loaded), dropped(loaded), "ok", ""))
        logger.info("Validated %s: %d records", name, count(loaded))
        return loaded

    cities = check("cities", config.cities, lambda: load_cities(config.cities))
    capitals = check("capitals", config.capitals, lambda: load_capitals(config.capitals))
    if config.gdp is not None:
        if cities is None:
            rows.append((Path(config.gdp).name, 0, 0, "error", "GDP needs a valid --cities file to resolve capitals"))
        else:
            check("gdp", config.gdp, lambda: load_gdp(config.gdp, cities, capitals))
    check("trade", config.trade, lambda: load_trade_flows(config.trade, config.resolve_scheme("scheme")))
    check(
        "ownership",
        config.ownership,
        lambda: load_ownership(
            config.ownership,
            min_control_pct=config.min_control_pct,
            cities=cities,
            scheme=config.resolve_scheme("ownership_scheme"),
        ),
        dropped=lambda links: links.dropped_count,
    )

    report = pd.DataFrame(rows, columns=VALIDATION_COLUMNS)
    click.echo(report.to_csv(index=False, lineterminator="\n"), nl=False)
    if config.out is not None:
        write_table(report, config.out, "validation", ["csv"])

    statuses = set(report["status"])
    if "error" in statuses:
        return EXIT_VALIDATION
    if "io-error" in statuses:
        return EXIT_IO
    return EXIT_OK


@click.command("synth")
@click.option("--seed", envvar="GEOTRADE_SEED", type=int, default=7, show_default=True, help="Random seed of the generator.")
@click.option("--kind", type=click.Choice(list(FIXTURE_KINDS)), default="pipeline", show_default=True, help="Which fixture set to write.")
@click.option("--out", envvar="GEOTRADE_OUT", default="fixtures", show_default=True, help="Directory for the generated files.")
def synth_cmd(seed: int, kind: str, out: str) -> None:
    """Generate synthetic input files from a seed."""
    code = run_guarded(lambda: _echo_paths(generate_fixtures(kind, out, seed=seed)))
    click.get_current_context().exit(code)


def _echo_paths(paths) -> None:
    for name in sorted(paths):
        click.echo(f"{name}: {paths[name]}")
