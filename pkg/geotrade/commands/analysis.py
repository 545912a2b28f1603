"""Analysis commands: gravity estimation, correspondence analyses and ownership networks."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Optional, Tuple

import click
import numpy as np
import pandas as pd

from geotrade.commands.main import guarded, shared_options
from geotrade.config import (
    DEFAULT_ANALYSIS_YEARS,
    DEFAULT_GRAVITY_YEARS,
    NETWORK_SCHEME,
    TRADE_SCHEME,
    RunConfig,
)
from geotrade.services.ca import (
    CAResult,
    ContingencyTable,
    axis_report,
    build_trajectories,
    ca_fit,
    contributions,
    export_table,
)
from geotrade.services.clustering import cut_tree, describe_clusters, hca_ward
from geotrade.services.glm import ConvergenceError
from geotrade.services.gravity import fit_gravity, gravity_flows
from geotrade.services.ingest import (
    capital_distances,
    load_capitals,
    load_cities,
    load_gdp,
    load_ownership,
    load_trade_flows,
)
from geotrade.services.network import (
    aggregate_to_cities,
    aggregate_to_countries,
    check_conservation,
    city_sector_table,
    city_strengths,
    sector_size_crosstab,
    share_matrix,
    specialisation_classify,
)
from geotrade.services.plotting import scatter_svg
from geotrade.services.result_store import write_table


logger = logging.getLogger(__name__)

GRAVITY_COLUMNS = ["year", "beta", "gamma", "delta", "r2_deviance", "r2_corr", "n_obs", "converged", "error"]
CITY_AXIS_REPORTS = 3


@click.command("gravity")
@shared_options(
    "trade", "cities", "gdp", "capitals", "scheme", "years", "a", "tol", "max_iter",
    "k_variant", "assume_zero", "strict", "mass_year", "out", "format", "jobs",
)
@guarded(default_scheme=TRADE_SCHEME, default_years=DEFAULT_GRAVITY_YEARS)
def gravity_cmd(config: RunConfig) -> None:
    """Fit the Poisson gravity model for each requested year."""
    config.require("trade", "cities", "gdp")
    years = config.require_years()
    cities = load_cities(config.cities)
    capitals = load_capitals(config.capitals) if config.capitals is not None else None
    countries = load_gdp(config.gdp, cities, capitals)
    flows = load_trade_flows(config.trade, config.resolve_scheme())
    dist = capital_distances(countries, cities)

    def fit_year(year: int):
        try:
            fit = fit_gravity(flows, year, countries, dist, config.gravity)
            comparison = gravity_flows(flows, year, countries, dist, config.gravity, fit=fit)
        except ConvergenceError as error:
            logger.error("Gravity fit for %d did not converge: %s", year, error)
            return _failed_gravity_row(year, error), None, error
        except ValueError as error:
            logger.warning("Gravity fit for %d failed: %s", year, error)
            return _failed_gravity_row(year, error), None, None
        return {**fit.as_row(), "error": ""}, comparison, None

    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        outcomes = list(pool.map(fit_year, years))

    write = _writer(config)
    write(pd.DataFrame([row for row, _, _ in outcomes], columns=GRAVITY_COLUMNS), "gravity")
    for year, (_, comparison, _) in zip(years, outcomes):
        if comparison is not None:
            write(comparison, f"gravity_flows_{year}")

    failures = [error for _, _, error in outcomes if error is not None]
    if failures:
        raise failures[0]


@click.command("trade-ca")
@shared_options("trade", "scheme", "years", "axes", "clusters", "out", "format")
@guarded(default_scheme=TRADE_SCHEME, default_years=DEFAULT_ANALYSIS_YEARS)
def trade_ca_cmd(config: RunConfig) -> None:
    """Correspondence analysis of country-year exports by sector, with trajectories."""
    config.require("trade")
    years = config.require_years()
    scheme = config.resolve_scheme()
    flows = load_trade_flows(config.trade, scheme)
    table = export_table(flows, scheme, years)
    result = _run_ca(table, "trade_ca", config)

    trajectories = build_trajectories(result, years)
    _writer(config)(trajectories.to_frame(), "trade_ca_trajectories")
    if config.wants_svg:
        polylines = {
            country: ([point.axis1 for point in points], [point.axis2 for point in points])
            for country, points in trajectories.trajectories.items()
        }
        _plane_svg(result, "trade_ca", config, "Export specialisation trajectories", polylines)


@click.command("city-ca")
@shared_options("ownership", "cities", "scheme", "min_control_pct", "weights", "axes", "clusters", "out", "format")
@guarded(default_scheme=NETWORK_SCHEME)
def city_ca_cmd(config: RunConfig) -> None:
    """Correspondence analysis of destination cities by sector of controlled firms."""
    config.require("ownership", "cities")
    scheme = config.resolve_scheme()
    cities = load_cities(config.cities)
    links = load_ownership(config.ownership, config.min_control_pct, cities=cities, scheme=scheme)
    graph = aggregate_to_cities(links, scheme, cities)
    table = city_sector_table(graph, weights=config.weights)
    result = _run_ca(table, "city_ca", config)

    write = _writer(config)
    for axis in range(min(CITY_AXIS_REPORTS, result.n_axes)):
        write(axis_report(result, axis).to_frame(), f"city_ca_axis{axis + 1}")
    if config.wants_svg:
        _plane_svg(result, "city_ca", config, "Cities and sectors of controlled firms")


@click.command("network")
@shared_options("ownership", "cities", "scheme", "min_control_pct", "min_share", "out", "format", "jobs")
@guarded(default_scheme=NETWORK_SCHEME)
def network_cmd(config: RunConfig) -> None:
    """Aggregate control links to cities and countries and report the size/sector tables."""
    config.require("ownership", "cities")
    scheme = config.resolve_scheme()
    cities = load_cities(config.cities)
    links = load_ownership(config.ownership, config.min_control_pct, cities=cities, scheme=scheme)
    graph = aggregate_to_cities(links, scheme, cities)
    matrix = aggregate_to_countries(graph, cities)
    check_conservation(links, graph, matrix)

    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        crosstab = pool.submit(sector_size_crosstab, graph, cities)
        specialisation = pool.submit(specialisation_classify, graph, cities, config.min_share)
        strengths = pool.submit(city_strengths, graph)
        crosstab, specialisation, strengths = crosstab.result(), specialisation.result(), strengths.result()

    if matrix.total() > 0:
        country_frame = share_matrix(matrix).to_frame()
    else:
        logger.warning("No cross-border links; country shares are undefined")
        country_frame = matrix.to_frame()
        country_frame["%"] = np.nan
        country_frame.index.name = "origin"
        country_frame = country_frame.reset_index()

    write = _writer(config)
    write(graph.edges_frame(), "edges")
    write(country_frame, "country_matrix")
    write(crosstab.to_frame(), "crosstab")
    write(specialisation.to_frame(), "specialisation")
    write(specialisation.cities, "specialisation_cities")
    write(strengths, "strengths")
    logger.info(
        "Network of %d cities and %d edges; %.6g cross-border and %.6g domestic revenue",
        len(graph.nodes),
        len(graph),
        matrix.total(),
        matrix.domestic_total,
    )


def _run_ca(table: ContingencyTable, prefix: str, config: RunConfig) -> CAResult:
    """Fit CA, classify rows by Ward on their coordinates and write the shared CA outputs."""
    max_axes = min(len(table.row_ids), len(table.col_ids)) - 1
    n_axes = min(config.axes, max_axes) if max_axes >= 1 else None
    if max_axes >= 1 and config.axes > max_axes:
        logger.warning("Requested %d axes; a %dx%d table has at most %d", config.axes, *table.counts.shape, max_axes)
    result = ca_fit(table, n_axes=n_axes)

    write = _writer(config)
    write(result.row_frame(), f"{prefix}_coordinates")
    write(result.col_frame(), f"{prefix}_columns")
    write(result.inertia_frame(), f"{prefix}_inertia")
    write(contributions(result), f"{prefix}_contributions")

    merges, clusters, profiles = _classify_rows(table, result, config.clusters)
    write(merges, f"{prefix}_merges")
    write(clusters, f"{prefix}_clusters")
    write(profiles, f"{prefix}_cluster_profiles")
    return result


def _classify_rows(
    table: ContingencyTable, result: CAResult, clusters: int
) -> Tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]:
    if result.n_axes < 1 or len(result.row_ids) < 2:
        logger.warning("Skipping Ward classification: no factor axes or fewer than two rows")
        return (
            pd.DataFrame(columns=["step", "node_a", "node_b", "height", "size"]),
            pd.DataFrame(columns=["row_id", "cluster"]),
            pd.DataFrame(columns=["cluster", "size", "dominant", *table.col_ids]),
        )
    tree = hca_ward(result.row_coords, weights=result.row_masses)
    labels = cut_tree(tree, min(clusters, tree.n_leaves))
    membership = pd.DataFrame({"row_id": list(result.row_ids), "cluster": labels})
    return tree.to_frame(), membership, describe_clusters(table, labels)


def _plane_svg(
    result: CAResult,
    prefix: str,
    config: RunConfig,
    title: str,
    polylines: Optional[Dict[str, Tuple[list, list]]] = None,
) -> None:
    if result.n_axes < 1:
        logger.warning("No factor axes to plot for %s", prefix)
        return
    second = result.row_coords[:, 1] if result.n_axes > 1 else np.zeros(len(result.row_ids))
    col_second = result.col_coords[:, 1] if result.n_axes > 1 else np.zeros(len(result.col_ids))
    shares = result.inertia_shares
    labels = (
        f"axis 1 ({shares[0]:.2f}%)",
        f"axis 2 ({shares[1]:.2f}%)" if shares.size > 1 else "axis 2",
    )
    scatter_svg(
        config.output_dir / f"{prefix}_plane.svg",
        result.row_coords[:, 0],
        second,
        result.row_ids,
        title=title,
        axis_labels=labels,
        polylines=polylines,
        columns=(result.col_coords[:, 0], col_second, result.col_ids),
    )


def _failed_gravity_row(year: int, error: Exception) -> dict:
    row = {name: np.nan for name in GRAVITY_COLUMNS}
    row.update({"year": year, "n_obs": 0, "converged": False, "error": str(error)})
    return row


def _writer(config: RunConfig):
    def write(frame: pd.DataFrame, name: str) -> None:
        write_table(frame, config.output_dir, name, config.table_formats)

    return write
