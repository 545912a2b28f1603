import dataclasses

import numpy as np
import pandas as pd
import pytest

from conftest import make_cities, make_links
from geotrade.services.domain import get_scheme
from geotrade.services.ingest import UnknownCityError, load_cities, load_ownership
from geotrade.services.network import (
    MONO,
    PLURI,
    ConservationError,
    NetworkError,
    aggregate_to_cities,
    aggregate_to_countries,
    check_conservation,
    city_sector_table,
    city_strengths,
    largest_remainder,
    sector_size_crosstab,
    share_matrix,
    specialisation_classify,
)
from geotrade.services.synth import TABLE2_ORIGIN_SHARES


FDI = get_scheme("fdi9")

CITIES = make_cities(
    ("CZ-PRG", "CZ", 1_300_000),
    ("CZ-BRN", "CZ", 380_000),
    ("SK-BTS", "SK", 475_000),
    ("SK-KSC", "SK", 240_000),
    ("HU-BUD", "HU", 1_750_000),
    ("HU-EGR", "HU", 30_000),
)


def _random_links(rng, n=30):
    ids = sorted(CITIES)
    rows = []
    for _ in range(n):
        parent, dest = rng.choice(len(ids), size=2)
        sector = FDI.groups[int(rng.integers(len(FDI.groups)))]
        rows.append((ids[parent], ids[dest], sector, float(np.round(rng.uniform(0.0, 500.0), 2))))
    return make_links(rows)


def test_links_between_the_same_cities_collapse_to_one_edge():
    links = make_links([("CZ-PRG", "SK-BTS", "FINANCE", 1.0), ("CZ-PRG", "SK-BTS", "IT", 2.0), ("CZ-PRG", "SK-BTS", "IT", 3.0)])

    graph = aggregate_to_cities(links, FDI, CITIES)

    assert len(graph) == 1
    data = graph.graph["CZ-PRG"]["SK-BTS"]
    assert data["revenue"] == 6.0
    assert data["count"] == 3
    assert data["sectors"] == {"FINANCE": 1.0, "IT": 5.0}
    assert data["sector_counts"] == {"FINANCE": 1, "IT": 2}


def test_city_graph_is_read_only():
    graph = aggregate_to_cities(make_links([("CZ-PRG", "SK-BTS", "IT", 1.0)]), FDI)

    with pytest.raises(Exception):
        graph.graph.add_edge("A", "B")


def test_empty_links_give_an_empty_graph():
    graph = aggregate_to_cities(make_links([]), FDI, CITIES)

    assert graph.is_empty()
    assert len(graph) == 0
    assert graph.edges_frame().empty
    assert list(graph.edges_frame().columns) == ["origin_city", "dest_city", "revenue", "count", "self_loop"]


def test_self_loops_are_flagged():
    links = make_links([("CZ-PRG", "CZ-PRG", "SALES", 4.0), ("CZ-PRG", "CZ-BRN", "SALES", 1.0)])

    frame = aggregate_to_cities(links, FDI, CITIES).edges_frame()

    assert frame["self_loop"].tolist() == [False, True]


def test_unknown_city_is_rejected():
    with pytest.raises(UnknownCityError, match="PL-WAW"):
        aggregate_to_cities(make_links([("CZ-PRG", "PL-WAW", "IT", 1.0)]), FDI, CITIES)


def test_country_matrix_and_domestic_total():
    links = make_links(
        [
            ("HU-BUD", "SK-BTS", "FINANCE", 1000.0),
            ("HU-BUD", "SK-KSC", "CARS", 676.0),
            ("CZ-PRG", "CZ-BRN", "IT", 50.0),
        ]
    )
    graph = aggregate_to_cities(links, FDI, CITIES)

    matrix = aggregate_to_countries(graph, CITIES)
    frame = matrix.to_frame()

    assert matrix.countries == ("CZ", "HU", "SK")
    assert frame.loc["HU", "SK"] == 1676.0
    assert np.isnan(frame.loc["SK", "SK"])
    assert matrix.domestic_total == 50.0
    assert matrix.total() == 1676.0


def test_only_domestic_links_give_a_zero_matrix():
    links = make_links([("CZ-PRG", "CZ-BRN", "IT", 5.0), ("SK-BTS", "SK-KSC", "IT", 7.0)])
    matrix = aggregate_to_countries(aggregate_to_cities(links, FDI, CITIES), CITIES)

    assert matrix.total() == 0.0
    assert matrix.domestic_total == 12.0
    with pytest.raises(NetworkError, match="zero grand total"):
        share_matrix(matrix)


def test_uniform_shares():
    links = make_links([("CZ-PRG", "SK-BTS", "IT", 5.0), ("SK-BTS", "CZ-PRG", "IT", 5.0)])
    shares = share_matrix(aggregate_to_countries(aggregate_to_cities(links, FDI, CITIES), CITIES))

    np.testing.assert_allclose(shares.origin_shares, [50.0, 50.0])
    np.testing.assert_allclose(shares.dest_shares, [50.0, 50.0])
    frame = shares.to_frame()
    assert frame["origin"].tolist() == ["CZ", "SK", "%"]
    assert frame.iloc[-1]["%"] == 100.0


def test_table2_origin_and_destination_shares(table2_dir):
    cities = load_cities(table2_dir / "cities.csv")
    links = load_ownership(table2_dir / "ownership.csv", cities=cities, scheme=FDI)
    matrix = aggregate_to_countries(aggregate_to_cities(links, FDI, cities), cities)

    shares = share_matrix(matrix)
    origin_rounded, dest_rounded = shares.rounded()

    assert matrix.total() == pytest.approx(6164.86)
    assert matrix.to_frame().loc["HU", "SK"] == 1676.0
    assert shares.origin_shares.sum() == pytest.approx(100.0)
    assert dict(zip(matrix.countries, origin_rounded.tolist())) == TABLE2_ORIGIN_SHARES
    assert shares.dest_shares[matrix.countries.index("SK")] == pytest.approx(34.3, abs=0.05)
    assert dest_rounded.sum() == 100


@pytest.fixture
def table34(table34_dir):
    cities = load_cities(table34_dir / "cities.csv")
    links = load_ownership(table34_dir / "ownership.csv", cities=cities, scheme=FDI)
    return cities, links, aggregate_to_cities(links, FDI, cities)


def test_control_filter_drops_minority_link(table34):
    _, links, _ = table34

    assert links.dropped_count == 1
    assert "F-MINORITY" not in set(links.frame["subsidiary_firm"])


def test_table3_sector_by_city_size(table34):
    cities, _, graph = table34

    crosstab = sector_size_crosstab(graph, cities)
    rounded = crosstab.rounded()

    assert crosstab.counts.loc["CARS"].tolist() == [1, 1, 5]
    assert rounded.loc["CARS"].tolist() == [14, 14, 72]
    assert crosstab.counts.loc["REAL ESTATE"].tolist() == [0, 0, 2]
    assert rounded.loc["REAL ESTATE"].tolist() == [0, 0, 100]
    assert all(sum(row) == 100 for row in rounded.to_numpy().tolist())
    assert list(crosstab.counts.index[:2]) == ["CARS", "FINANCE"]


def test_table4_specialisation_by_city_size(table34):
    cities, _, graph = table34

    report = specialisation_classify(graph, cities)
    rounded = report.rounded()

    assert report.counts.loc[MONO].tolist() == [24, 9, 4]
    assert report.counts.loc[PLURI].tolist() == [0, 3, 8]
    assert rounded.loc[MONO].tolist() == [65, 24, 11]
    assert rounded.loc[PLURI].tolist() == [0, 27, 73]
    frame = report.to_frame()
    assert list(frame.columns) == [
        "classification",
        "small_count",
        "medium_count",
        "large_count",
        "small_pct",
        "medium_pct",
        "large_pct",
    ]
    assert len(report.cities) == 48


def test_specialisation_ignores_revenue_scale(rng):
    links = _random_links(rng)
    scaled = make_links(
        [
            (row.parent_city, row.subsidiary_city, row.sector, row.revenue * 1000.0)
            for row in links.frame.itertuples(index=False)
        ]
    )

    for min_share in (0.0, 0.25):
        base = specialisation_classify(aggregate_to_cities(links, FDI, CITIES), CITIES, min_share)
        other = specialisation_classify(aggregate_to_cities(scaled, FDI, CITIES), CITIES, min_share)
        pd.testing.assert_frame_equal(base.cities, other.cities)


def test_min_share_drops_minor_sectors():
    links = make_links([("CZ-PRG", "SK-BTS", "IT", 95.0), ("CZ-PRG", "SK-BTS", "MEDIA", 5.0)])
    graph = aggregate_to_cities(links, FDI, CITIES)

    assert specialisation_classify(graph, CITIES).cities["classification"].tolist() == [PLURI]
    assert specialisation_classify(graph, CITIES, min_share=0.1).cities["classification"].tolist() == [MONO]
    with pytest.raises(NetworkError):
        specialisation_classify(graph, CITIES, min_share=1.0)


def test_city_with_no_group_above_min_share_keeps_its_dominant_group():
    links = make_links(
        [
            ("CZ-PRG", "SK-BTS", "IT", 40.0),
            ("CZ-PRG", "SK-BTS", "MEDIA", 30.0),
            ("CZ-PRG", "SK-BTS", "SALES", 30.0),
        ]
    )
    graph = aggregate_to_cities(links, FDI, CITIES)

    report = specialisation_classify(graph, CITIES, min_share=0.5)

    row = report.cities.iloc[0]
    assert row["city_id"] == "SK-BTS"
    assert row["sector_count"] == 1
    assert row["classification"] == MONO
    assert PLURI not in report.counts.index
    assert (report.cities["classification"] == PLURI).sum() == (report.cities["sector_count"] >= 2).sum()


def test_conservation_holds_on_random_links(rng):
    links = _random_links(rng)
    graph = aggregate_to_cities(links, FDI, CITIES)
    matrix = aggregate_to_countries(graph, CITIES)

    check_conservation(links, graph, matrix)
    assert matrix.total() + matrix.domestic_total == pytest.approx(links.total_revenue(), rel=1e-12)


def test_conservation_failure_is_reported(rng):
    links = _random_links(rng)
    graph = aggregate_to_cities(links, FDI, CITIES)
    matrix = aggregate_to_countries(graph, CITIES)
    broken = dataclasses.replace(matrix, domestic_total=matrix.domestic_total + 1.0)

    with pytest.raises(ConservationError, match="country matrix"):
        check_conservation(links, graph, broken)


def test_city_sector_table_weights(rng):
    links = _random_links(rng)
    graph = aggregate_to_cities(links, FDI, CITIES)

    by_revenue = city_sector_table(graph)
    by_count = city_sector_table(graph, weights="count")

    assert by_revenue.grand_total == pytest.approx(graph.total_revenue())
    assert by_count.grand_total == len(links)
    assert list(by_revenue.row_ids) == sorted(by_revenue.row_ids)
    with pytest.raises(NetworkError):
        city_sector_table(graph, weights="employees")


def test_city_sector_table_exact_cells():
    links = make_links(
        [
            ("CZ-PRG", "SK-BTS", "IT", 3.0),
            ("HU-BUD", "SK-BTS", "IT", 4.0),
            ("HU-BUD", "CZ-BRN", "CARS", 2.0),
        ]
    )

    table = city_sector_table(aggregate_to_cities(links, FDI, CITIES))

    assert table.row_ids == ("CZ-BRN", "SK-BTS")
    assert table.col_ids == ("CARS", "IT")
    np.testing.assert_allclose(table.counts, [[2.0, 0.0], [0.0, 7.0]])


def test_city_strengths():
    links = make_links(
        [
            ("CZ-PRG", "SK-BTS", "IT", 3.0),
            ("CZ-PRG", "HU-BUD", "IT", 4.0),
            ("HU-BUD", "SK-BTS", "CARS", 2.0),
        ]
    )

    frame = city_strengths(aggregate_to_cities(links, FDI, CITIES)).set_index("city_id")

    assert frame.loc["CZ-PRG", "out_degree"] == 2
    assert frame.loc["CZ-PRG", "out_strength"] == 7.0
    assert frame.loc["SK-BTS", "in_degree"] == 2
    assert frame.loc["SK-BTS", "in_strength"] == 5.0


@pytest.mark.parametrize(
    "values, expected",
    [
        ([33.3, 33.3, 33.4], [33, 33, 34]),
        ([50.0, 50.0], [50, 50]),
        ([100 / 3, 100 / 3, 100 / 3], [34, 33, 33]),
        ([0.0, 0.0], [0, 0]),
        ([12.5, 12.5, 75.0], [13, 12, 75]),
    ],
)
def test_largest_remainder(values, expected):
    assert largest_remainder(values).tolist() == expected
