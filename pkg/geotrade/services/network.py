"""City and country aggregation of capital-control links and the statistics built on them."""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from geotrade.services.ca import ContingencyTable
from geotrade.services.domain import CityTable, SectorScheme, SizeClass
from geotrade.services.ingest import OwnershipLinkTable, UnknownCityError


logger = logging.getLogger(__name__)

WEIGHT_MODES = ("revenue", "count")
CONSERVATION_RTOL = 1e-9
MONO = "MONO"
PLURI = "PLURI"
SIZE_LABELS = tuple(size.name for size in SizeClass)

EDGE_COLUMNS = ["origin_city", "dest_city", "revenue", "count", "self_loop"]
STRENGTH_COLUMNS = ["city_id", "in_degree", "out_degree", "in_strength", "out_strength"]


class NetworkError(ValueError):
    """Raised when a network aggregation cannot be carried out."""


class ConservationError(RuntimeError):
    """Raised when revenue totals disagree between aggregation levels."""


class CityGraph:
    """Parent city -> subsidiary city digraph of aggregated control links.

    Edge attributes: ``revenue``, ``count``, ``sectors`` (group -> revenue),
    ``sector_counts`` (group -> link count) and ``self_loop``.
    """

    def __init__(self, graph: nx.DiGraph, groups: Sequence[str] = ()):
        self.graph = graph if nx.is_frozen(graph) else nx.freeze(graph)
        self.groups = tuple(groups)

    @property
    def nodes(self) -> Tuple[str, ...]:
        return tuple(self.graph.nodes)

    def is_empty(self) -> bool:
        return self.graph.number_of_edges() == 0

    def total_revenue(self) -> float:
        return float(sum(data["revenue"] for _, _, data in self.graph.edges(data=True)))

    def destination_sectors(self) -> Dict[str, Dict[str, Tuple[float, int]]]:
        """Map each destination city to group -> (revenue, link count) over its inbound edges."""
        result: Dict[str, Dict[str, Tuple[float, int]]] = {}
        for _, dest, data in sorted(self.graph.edges(data=True), key=lambda edge: (edge[1], edge[0])):
            sectors = result.setdefault(dest, {})
            for group, revenue in data["sectors"].items():
                old_revenue, old_count = sectors.get(group, (0.0, 0))
                sectors[group] = (old_revenue + revenue, old_count + data["sector_counts"][group])
        return result

    def edges_frame(self) -> pd.DataFrame:
        rows = [
            (origin, dest, data["revenue"], data["count"], data["self_loop"])
            for origin, dest, data in sorted(self.graph.edges(data=True), key=lambda edge: edge[:2])
        ]
        return pd.DataFrame(rows, columns=EDGE_COLUMNS)

    def __len__(self) -> int:
        return self.graph.number_of_edges()


@dataclass(frozen=True)
class CountryMatrix:
    """Origin x destination revenue sums; the diagonal is NaN (structurally absent)."""

    countries: Tuple[str, ...]
    values: np.ndarray
    domestic_total: float

    def total(self) -> float:
        return float(np.nansum(self.values))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.countries), columns=list(self.countries))


@dataclass(frozen=True)
class ShareTable:
    matrix: CountryMatrix
    origin_shares: np.ndarray
    dest_shares: np.ndarray

    def rounded(self) -> Tuple[np.ndarray, np.ndarray]:
        """Integer display percentages, each summing to 100."""
        return largest_remainder(self.origin_shares), largest_remainder(self.dest_shares)

    def to_frame(self) -> pd.DataFrame:
        """The matrix with an origin-share column and a destination-share row labelled ``%``."""
        frame = self.matrix.to_frame()
        frame["%"] = self.origin_shares
        margin = pd.DataFrame([[*self.dest_shares, 100.0]], index=["%"], columns=frame.columns)
        frame = pd.concat([frame, margin])
        frame.index.name = "origin"
        return frame.reset_index()


@dataclass(frozen=True)
class SectorSizeCrosstab:
    counts: pd.DataFrame
    percentages: pd.DataFrame

    def rounded(self) -> pd.DataFrame:
        return _rounded_rows(self.percentages)

    def to_frame(self) -> pd.DataFrame:
        return _count_pct_frame("sector", self.counts, self.rounded())


@dataclass(frozen=True)
class SpecialisationReport:
    cities: pd.DataFrame
    counts: pd.DataFrame
    percentages: pd.DataFrame

    def rounded(self) -> pd.DataFrame:
        return _rounded_rows(self.percentages)

    def to_frame(self) -> pd.DataFrame:
        return _count_pct_frame("classification", self.counts, self.rounded())


def aggregate_to_cities(
    links: OwnershipLinkTable, scheme: SectorScheme, cities: Optional[CityTable] = None
) -> CityGraph:
    """Sum firm-level links into one edge per (parent city, subsidiary city)."""
    frame = links.frame
    if cities is not None:
        for city_id in sorted(set(frame["parent_city"]).union(frame["subsidiary_city"])):
            if city_id not in cities:
                raise UnknownCityError(f"unknown city id {city_id!r} in ownership links")
    frame["group"] = [scheme.map_code(code) for code in frame["sector"]]

    graph = nx.DiGraph()
    graph.add_nodes_from(sorted(set(frame["parent_city"]).union(frame["subsidiary_city"])))
    grouped = frame.groupby(["parent_city", "subsidiary_city", "group"], sort=True)["revenue"].agg(["sum", "count"])
    for (origin, dest, group), row in grouped.iterrows():
        if not graph.has_edge(origin, dest):
            graph.add_edge(
                origin, dest, revenue=0.0, count=0, sectors={}, sector_counts={}, self_loop=origin == dest
            )
        data = graph[origin][dest]
        data["revenue"] += float(row["sum"])
        data["count"] += int(row["count"])
        data["sectors"][group] = float(row["sum"])
        data["sector_counts"][group] = int(row["count"])

    self_loops = nx.number_of_selfloops(graph)
    if self_loops:
        logger.info("%d city graph edges are self-loops within one city", self_loops)
    return CityGraph(graph, groups=scheme.groups)


def aggregate_to_countries(graph: CityGraph, cities: CityTable) -> CountryMatrix:
    """Sum city edges into an origin x destination country matrix; domestic links go to ``domestic_total``."""
    country_of = {}
    for node in graph.nodes:
        try:
            country_of[node] = cities.country_of(node)
        except KeyError:
            raise NetworkError(f"city {node!r} does not resolve to a country") from None

    countries = tuple(sorted(set(country_of.values())))
    index = {code: position for position, code in enumerate(countries)}
    values = np.zeros((len(countries), len(countries)))
    domestic = 0.0
    for origin, dest, data in graph.graph.edges(data=True):
        c1, c2 = country_of[origin], country_of[dest]
        if c1 == c2:
            domestic += data["revenue"]
        else:
            values[index[c1], index[c2]] += data["revenue"]
    np.fill_diagonal(values, np.nan)
    return CountryMatrix(countries=countries, values=values, domestic_total=domestic)


def share_matrix(matrix: CountryMatrix) -> ShareTable:
    """Origin and destination shares of the grand total, in percent."""
    total = matrix.total()
    if not total > 0:
        raise NetworkError("country matrix has a zero grand total")
    return ShareTable(
        matrix=matrix,
        origin_shares=100.0 * np.nansum(matrix.values, axis=1) / total,
        dest_shares=100.0 * np.nansum(matrix.values, axis=0) / total,
    )


def sector_size_crosstab(graph: CityGraph, cities: CityTable) -> SectorSizeCrosstab:
    """Count distinct destination cities per sector group, bucketed by city size class."""
    counts: Dict[str, np.ndarray] = {}
    for dest, sectors in graph.destination_sectors().items():
        size = _size_of(dest, cities)
        for group in sectors:
            counts.setdefault(group, np.zeros(len(SIZE_LABELS), dtype=int))[size] += 1
    order = [group for group in graph.groups if group in counts] + sorted(set(counts) - set(graph.groups))
    count_frame = pd.DataFrame([counts[group] for group in order], index=order, columns=list(SIZE_LABELS))
    return SectorSizeCrosstab(counts=count_frame, percentages=_row_percentages(count_frame))


def specialisation_classify(
    graph: CityGraph, cities: CityTable, min_share: float = 0.0
) -> SpecialisationReport:
    """Classify destination cities as MONO (one sector group) or PLURI (several).

    A group counts toward a city when its share of the city's inbound revenue is at
    least ``min_share`` (0 means any controlled firm). When no group reaches the share, the
    city keeps its dominant group and is MONO. Cities without inbound links are not classified.
    """
    if not 0.0 <= min_share < 1.0:
        raise NetworkError(f"min_share must lie in [0, 1), got {min_share!r}")
    rows = []
    for dest, sectors in sorted(graph.destination_sectors().items()):
        total = sum(revenue for revenue, _ in sectors.values())
        if min_share > 0 and total > 0:
            present = [group for group, (revenue, _) in sectors.items() if revenue / total >= min_share]
            if not present:
                present = [max(sorted(sectors), key=lambda group: sectors[group][0])]
        else:
            present = [group for group, (_, count) in sectors.items() if count > 0]
        size = _size_of(dest, cities)
        rows.append(
            {
                "city_id": dest,
                "size_class": SIZE_LABELS[size],
                "sector_count": len(present),
                "classification": PLURI if len(present) >= 2 else MONO,
            }
        )
    city_frame = pd.DataFrame(rows, columns=["city_id", "size_class", "sector_count", "classification"])

    counts = pd.DataFrame(0, index=[MONO, PLURI], columns=list(SIZE_LABELS))
    for row in rows:
        counts.loc[row["classification"], row["size_class"]] += 1
    counts = counts[counts.sum(axis=1) > 0]
    return SpecialisationReport(cities=city_frame, counts=counts, percentages=_row_percentages(counts))


def city_sector_table(graph: CityGraph, weights: str = "revenue") -> ContingencyTable:
    """Destination city x sector group table of revenue (or link counts) for correspondence analysis."""
    if weights not in WEIGHT_MODES:
        raise NetworkError(f"weights must be one of {', '.join(WEIGHT_MODES)}, got {weights!r}")
    if graph.is_empty():
        raise NetworkError("city graph has no edges")
    by_city = graph.destination_sectors()
    groups = list(graph.groups) or sorted({group for sectors in by_city.values() for group in sectors})
    row_ids = sorted(by_city)
    position = 0 if weights == "revenue" else 1
    counts = np.array(
        [[by_city[city].get(group, (0.0, 0))[position] for group in groups] for city in row_ids],
        dtype=float,
    )
    return ContingencyTable.from_counts(row_ids, groups, counts)


def city_strengths(graph: CityGraph) -> pd.DataFrame:
    """Per-city in/out degree and revenue-weighted in/out strength."""
    g = graph.graph
    in_strength = dict(g.in_degree(weight="revenue"))
    out_strength = dict(g.out_degree(weight="revenue"))
    rows = [
        (node, g.in_degree(node), g.out_degree(node), float(in_strength[node]), float(out_strength[node]))
        for node in sorted(g.nodes)
    ]
    return pd.DataFrame(rows, columns=STRENGTH_COLUMNS)


def check_conservation(
    links: OwnershipLinkTable, graph: CityGraph, matrix: CountryMatrix, rtol: float = CONSERVATION_RTOL
) -> None:
    """Raise ConservationError unless link, city and country revenue totals agree."""
    ingested = links.total_revenue()
    city_total = graph.total_revenue()
    country_total = matrix.total() + matrix.domestic_total
    scale = max(abs(ingested), 1.0)
    for label, value in (("city graph", city_total), ("country matrix + domestic", country_total)):
        if abs(value - ingested) > rtol * scale:
            raise ConservationError(
                f"{label} total {value!r} differs from ingested revenue {ingested!r}"
            )


def largest_remainder(percentages, total: int = 100) -> np.ndarray:
    """Round percentages to integers summing to ``total``; ties go to the earlier position."""
    values = np.asarray(percentages, dtype=float)
    if values.size == 0 or not values.sum() > 0:
        return np.zeros(values.size, dtype=int)
    floors = np.floor(values).astype(int)
    remainder = int(round(total - floors.sum()))
    order = sorted(range(values.size), key=lambda index: (-(values[index] - floors[index]), index))
    for index in order[:max(remainder, 0)]:
        floors[index] += 1
    return floors


def _size_of(city_id: str, cities: CityTable) -> SizeClass:
    try:
        return cities[city_id].size_class
    except KeyError:
        raise NetworkError(f"city {city_id!r} is not in the city table") from None


def _row_percentages(counts: pd.DataFrame) -> pd.DataFrame:
    totals = counts.sum(axis=1)
    return counts.astype(float).div(totals.where(totals > 0), axis=0).mul(100.0)


def _rounded_rows(percentages: pd.DataFrame) -> pd.DataFrame:
    rounded = [largest_remainder(row) for row in percentages.to_numpy()]
    return pd.DataFrame(
        np.array(rounded, dtype=int).reshape(len(percentages.index), len(percentages.columns)),
        index=percentages.index,
        columns=percentages.columns,
    )


def _count_pct_frame(key: str, counts: pd.DataFrame, rounded: pd.DataFrame) -> pd.DataFrame:
    columns = [key] + [f"{label.lower()}_count" for label in SIZE_LABELS] + [f"{label.lower()}_pct" for label in SIZE_LABELS]
    rows = [
        [label, *counts.loc[label].tolist(), *rounded.loc[label].tolist()]
        for label in counts.index
    ]
    return pd.DataFrame(rows, columns=columns)
