"""Synthetic input files for the gravity, correspondence and network analyses.

The generators only use a seeded ``numpy.random.Generator``, so a seed fully
determines the written bytes.
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from geotrade.services.domain import FDI_GROUPS, TRADE_GROUPS
from geotrade.services.ingest import (
    CAPITAL_COLUMNS,
    CITY_COLUMNS,
    GDP_COLUMNS,
    OWNERSHIP_COLUMNS,
    TRADE_COLUMNS,
    haversine_km,
)
from geotrade.services.result_store import write_table


logger = logging.getLogger(__name__)

FIXTURE_KINDS = ("pipeline", "table2", "table34")

# code -> (capital id, name, lat, lon, population)
CAPITALS = {
    "CZ": ("CZ-PRG", "Praha", 50.0755, 14.4378, 1_300_000),
    "PL": ("PL-WAW", "Warszawa", 52.2297, 21.0122, 1_790_000),
    "HU": ("HU-BUD", "Budapest", 47.4979, 19.0402, 1_750_000),
    "SK": ("SK-BTS", "Bratislava", 48.1486, 17.1077, 475_000),
    "HR": ("HR-ZAG", "Zagreb", 45.8150, 15.9819, 790_000),
    "SI": ("SI-LJU", "Ljubljana", 46.0569, 14.5058, 290_000),
    "BG": ("BG-SOF", "Sofia", 42.6977, 23.3219, 1_240_000),
    "RO": ("RO-BUH", "Bucuresti", 44.4268, 26.1025, 1_830_000),
}
COUNTRY_CODES = tuple(CAPITALS)

# year -> (beta, gamma, delta) used as generator truth; other years are interpolated
GRAVITY_ANCHORS = {
    1967: (0.8, 0.8, 0.4),
    1992: (0.5, 0.5, -1.7),
    2002: (0.8, 0.8, -1.1),
    2012: (1.2, 1.1, -1.8),
}
ANALYSIS_YEARS = tuple(range(1970, 2011, 5))
PIPELINE_YEARS = tuple(sorted(set(GRAVITY_ANCHORS) | set(ANALYSIS_YEARS)))
MIN_PAIR_MEAN = 50.0
GDP_RANGE = (2.0e4, 4.0e5)

# origin -> dest -> revenue (EUR millions); blank and "-" cells are zero.
# RO -> BG is 253.8 so that the rounded origin shares come out as TABLE2_ORIGIN_SHARES.
TABLE2_REVENUES = {
    "CZ": {"PL": 52, "HU": 1, "SK": 383, "HR": 0.4, "SI": 0.1, "BG": 215, "RO": 203},
    "PL": {"CZ": 1148, "HU": 9, "SK": 28, "HR": 9, "SI": 1, "BG": 0.4, "RO": 73},
    "HU": {"CZ": 30, "PL": 31, "SK": 1676, "HR": 607, "SI": 60, "BG": 96, "RO": 235},
    "SK": {"CZ": 390, "PL": 194, "HU": 33, "HR": 0.6, "SI": 10, "BG": 1, "RO": 0.1},
    "HR": {"CZ": 8, "PL": 8, "HU": 2, "SK": 28, "SI": 128, "BG": 0.01, "RO": 0.1},
    "SI": {"CZ": 8, "PL": 2, "SK": 0.3, "HR": 212, "BG": 1, "RO": 23},
    "BG": {"CZ": 1, "HR": 0.05, "RO": 3},
    "RO": {"BG": 253.8},
}
TABLE2_ORIGIN_SHARES = {"CZ": 14, "PL": 21, "HU": 44, "SK": 10, "HR": 3, "SI": 4, "BG": 0, "RO": 4}

_OTHER_SECTORS = ("INDUSTRY", "SALES", "SERVICES", "ENERGY", "FINANCE", "IT", "MEDIA")
_LARGE_PLURI_SECTORS = (
    ("CARS", "REAL ESTATE", "FINANCE"),
    ("CARS", "REAL ESTATE"),
    ("CARS", "IT"),
    ("CARS", "SALES", "SERVICES"),
    ("FINANCE", "IT"),
    ("MEDIA", "SALES"),
    ("FINANCE", "SERVICES", "IT"),
    ("INDUSTRY", "ENERGY"),
)
_MEDIUM_PLURI_SECTORS = (("INDUSTRY", "SALES"), ("SERVICES", "FINANCE"), ("IT", "MEDIA"))
_HEADQUARTERS = ("AT-VIE", "Wien", "AT", 48.2082, 16.3738, 1_900_000)


def gravity_coefficients(year: int) -> Tuple[float, float, float]:
    """Generator (beta, gamma, delta) for ``year``, linear between the anchor years."""
    anchors = sorted(GRAVITY_ANCHORS)
    columns = list(zip(*(GRAVITY_ANCHORS[anchor] for anchor in anchors)))
    return tuple(float(np.interp(year, anchors, column)) for column in columns)


def generate_pipeline_fixtures(out_dir, seed: int) -> Dict[str, Path]:
    """Write trade, GDP, city, capital and ownership files drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    cities = _pipeline_cities(rng)
    gdp = _pipeline_gdp(rng)
    trade = _pipeline_trade(rng, gdp, cities)
    ownership = _pipeline_ownership(rng, cities)
    capitals = pd.DataFrame(
        [(code, capital[0]) for code, capital in CAPITALS.items()], columns=list(CAPITAL_COLUMNS)
    )

    paths = {}
    for name, frame in (
        ("trade_flows", trade),
        ("gdp", gdp),
        ("cities", cities),
        ("capitals", capitals),
        ("ownership", ownership),
    ):
        (paths[name],) = write_table(frame, out_dir, name, ["csv"])
    logger.info("Wrote pipeline fixtures for seed %d to %s", seed, out_dir)
    return paths


def write_table2_fixture(out_dir) -> Dict[str, Path]:
    """Write one capital per country and one fully controlled link per non-empty origin/destination cell."""
    cities = pd.DataFrame(
        [(capital[0], capital[1], code, capital[2], capital[3], capital[4]) for code, capital in CAPITALS.items()],
        columns=list(CITY_COLUMNS),
    )
    rows = []
    for origin, row in TABLE2_REVENUES.items():
        for dest, revenue in row.items():
            index = len(rows)
            rows.append(
                (f"P{index:03d}", CAPITALS[origin][0], f"S{index:03d}", CAPITALS[dest][0], 100.0, "FINANCE", revenue)
            )
    ownership = pd.DataFrame(rows, columns=list(OWNERSHIP_COLUMNS))
    return _write_pair(out_dir, cities, ownership)


def write_table34_fixture(out_dir) -> Dict[str, Path]:
    """Write cities and links whose destination cities give known size/sector proportions (CARS 14/14/72, MONO 65/24/11).

    24 small, 12 medium and 12 large destination cities; one headquarters city
    owns every subsidiary. A 30% link would turn a small city pluri-specialised if the
    control filter were skipped.
    """
    assignments: List[Tuple[str, str, float, Sequence[str]]] = []
    for index in range(24):
        sectors = ("CARS",) if index == 0 else (_OTHER_SECTORS[index % len(_OTHER_SECTORS)],)
        assignments.append((f"S{index + 1:02d}", "small", 20_000.0 + 500 * index, sectors))
    for index in range(12):
        if index == 0:
            sectors = ("CARS",)
        elif index < 9:
            sectors = (_OTHER_SECTORS[index % len(_OTHER_SECTORS)],)
        else:
            sectors = _MEDIUM_PLURI_SECTORS[index - 9]
        assignments.append((f"M{index + 1:02d}", "medium", 100_000.0 + 5_000 * index, sectors))
    for index in range(12):
        if index < 4:
            sectors = ("CARS",) if index == 0 else (("FINANCE", "SALES", "IT")[index - 1],)
        else:
            sectors = _LARGE_PLURI_SECTORS[index - 4]
        assignments.append((f"L{index + 1:02d}", "large", 400_000.0 + 50_000 * index, sectors))

    city_rows = [_HEADQUARTERS]
    link_rows = []
    for position, (label, _, population, sectors) in enumerate(assignments):
        code = COUNTRY_CODES[position % len(COUNTRY_CODES)]
        lat, lon = CAPITALS[code][2:4]
        city_id = f"{code}-{label}"
        city_rows.append((city_id, f"City {label}", code, lat + 0.01 * position, lon, population))
        for sector in sectors:
            index = len(link_rows)
            link_rows.append(
                ("HQ", _HEADQUARTERS[0], f"F{index:03d}", city_id, 75.0, sector, 10.0 + index)
            )
    small_city = f"{COUNTRY_CODES[1]}-S02"
    link_rows.append(("HQ", _HEADQUARTERS[0], "F-MINORITY", small_city, 30.0, "REAL ESTATE", 5.0))

    cities = pd.DataFrame(city_rows, columns=list(CITY_COLUMNS))
    ownership = pd.DataFrame(link_rows, columns=list(OWNERSHIP_COLUMNS))
    return _write_pair(out_dir, cities, ownership)


def generate_fixtures(kind: str, out_dir, seed: int = 7) -> Dict[str, Path]:
    if kind == "pipeline":
        return generate_pipeline_fixtures(out_dir, seed)
    if kind == "table2":
        return write_table2_fixture(out_dir)
    if kind == "table34":
        return write_table34_fixture(out_dir)
    raise ValueError(f"unknown fixture kind {kind!r}; choose from {', '.join(FIXTURE_KINDS)}")


def _write_pair(out_dir, cities: pd.DataFrame, ownership: pd.DataFrame) -> Dict[str, Path]:
    (cities_path,) = write_table(cities, out_dir, "cities", ["csv"])
    (ownership_path,) = write_table(ownership, out_dir, "ownership", ["csv"])
    return {"cities": cities_path, "ownership": ownership_path}


def _pipeline_cities(rng: np.random.Generator) -> pd.DataFrame:
    """Capitals plus one large, one medium and two small cities per country."""
    rows = []
    for code, (capital_id, name, lat, lon, population) in CAPITALS.items():
        rows.append((capital_id, name, code, lat, lon, float(population)))
        populations = (
            rng.uniform(260_000, 600_000),
            rng.uniform(50_000, 250_000),
            rng.uniform(8_000, 49_000),
            rng.uniform(8_000, 49_000),
        )
        for index, population in enumerate(populations, start=1):
            offset_lat, offset_lon = rng.uniform(-1.5, 1.5, size=2)
            rows.append(
                (
                    f"{code}-{index:02d}",
                    f"{name} region {index}",
                    code,
                    round(lat + offset_lat, 4),
                    round(lon + offset_lon, 4),
                    float(round(population)),
                )
            )
    return pd.DataFrame(rows, columns=list(CITY_COLUMNS))


def _pipeline_gdp(rng: np.random.Generator) -> pd.DataFrame:
    """Log-uniform base GDP in the first year with a country-specific growth drift."""
    low, high = np.log(GDP_RANGE[0]), np.log(GDP_RANGE[1])
    first = PIPELINE_YEARS[0]
    rows = []
    for code in COUNTRY_CODES:
        base = rng.uniform(low, high)
        growth = rng.uniform(0.005, 0.035)
        for year in PIPELINE_YEARS:
            level = base + growth * (year - first) + rng.normal(0.0, 0.05)
            rows.append((code, year, float(np.round(np.exp(level), 3))))
    return pd.DataFrame(rows, columns=list(GDP_COLUMNS))


def _pipeline_trade(rng: np.random.Generator, gdp: pd.DataFrame, cities: pd.DataFrame) -> pd.DataFrame:
    """Poisson pair totals from the gravity truth, split multinomially over sector profiles."""
    located = cities.set_index("city_id")
    capital_points = {code: located.loc[capital[0], ["lat", "lon"]].to_numpy(dtype=float) for code, capital in CAPITALS.items()}
    mass = gdp.set_index(["country", "year"])["gdp"]
    n_groups = len(TRADE_GROUPS)
    start_profiles = {code: rng.dirichlet(np.full(n_groups, 0.8)) for code in COUNTRY_CODES}
    end_profiles = {code: rng.dirichlet(np.full(n_groups, 0.8)) for code in COUNTRY_CODES}
    first, last = PIPELINE_YEARS[0], PIPELINE_YEARS[-1]

    rows = []
    for year in PIPELINE_YEARS:
        beta, gamma, delta = gravity_coefficients(year)
        pairs = [(origin, dest) for origin in COUNTRY_CODES for dest in COUNTRY_CODES if origin != dest]
        log_core = np.array(
            [
                beta * np.log(mass[(origin, year)])
                + gamma * np.log(mass[(dest, year)])
                + delta * np.log(haversine_km(*capital_points[origin], *capital_points[dest]))
                for origin, dest in pairs
            ]
        )
        intercept = np.log(MIN_PAIR_MEAN) - log_core.min()
        totals = rng.poisson(np.exp(intercept + log_core))
        weight = (year - first) / (last - first)
        for (origin, dest), total in zip(pairs, totals):
            profile = (1.0 - weight) * start_profiles[origin] + weight * end_profiles[origin]
            split = rng.multinomial(int(total), profile / profile.sum())
            for group, value in zip(TRADE_GROUPS, split):
                if value > 0:
                    rows.append((year, origin, dest, group, int(value)))
    return pd.DataFrame(rows, columns=list(TRADE_COLUMNS))


def _pipeline_ownership(rng: np.random.Generator, cities: pd.DataFrame, n_links: int = 400) -> pd.DataFrame:
    """Links from population-weighted parent cities to cities with size-dependent sector mixes."""
    city_ids = cities["city_id"].to_numpy()
    populations = cities["population"].to_numpy(dtype=float)
    parent_weights = populations / populations.sum()
    n_groups = len(FDI_GROUPS)
    # Small cities draw from a concentrated sector mix, large ones from a flat one.
    concentration = np.where(populations < 50_000, 0.15, np.where(populations <= 250_000, 0.6, 3.0))
    profiles = [rng.dirichlet(np.full(n_groups, alpha)) for alpha in concentration]

    rows = []
    for index in range(n_links):
        parent = int(rng.choice(city_ids.size, p=parent_weights))
        dest = int(rng.integers(city_ids.size))
        sector = FDI_GROUPS[int(rng.choice(n_groups, p=profiles[dest]))]
        rows.append(
            (
                f"P{index:04d}",
                city_ids[parent],
                f"S{index:04d}",
                city_ids[dest],
                float(np.round(rng.uniform(10.0, 100.0), 1)),
                sector,
                float(np.round(rng.lognormal(2.0, 1.5), 3)),
            )
        )
    return pd.DataFrame(rows, columns=list(OWNERSHIP_COLUMNS))
