"""Loaders for trade flows, cities, GDP and ownership links, plus capital distances."""

import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from geotrade.services.domain import (
    CityRecord,
    CityTable,
    CountryRecord,
    CountryTable,
    SectorScheme,
    TradeFlowRecord,
    ValidationError,
    validate_country_code,
)
from geotrade.services.file_parser import parse_integer, parse_numeric, read_table


logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
DEFAULT_MIN_CONTROL_PCT = 50.0

TRADE_COLUMNS = ("year", "origin", "dest", "sector", "value")
CITY_COLUMNS = ("city_id", "name", "country", "lat", "lon", "population")
OWNERSHIP_COLUMNS = (
    "parent_firm",
    "parent_city",
    "subsidiary_firm",
    "subsidiary_city",
    "ownership_pct",
    "sector",
    "revenue",
)
GDP_COLUMNS = ("country", "year", "gdp")
SCHEME_COLUMNS = ("raw_code", "group")
CAPITAL_COLUMNS = ("country", "city_id")


class SelfFlowError(ValidationError):
    """Raised when a trade row has the same origin and destination."""


class OwnershipRangeError(ValidationError):
    """Raised when an ownership percentage lies outside (0, 100]."""


class DuplicateLinkError(ValidationError):
    """Raised when the same parent/subsidiary firm pair appears twice."""


class UnknownCityError(ValidationError):
    """Raised when a link references a city id absent from the city table."""


class UnresolvedCapitalError(ValidationError):
    """Raised when a country's capital cannot be located in the city table."""


class TradeFlowTable:
    """Trade values aggregated per (year, origin, dest, sector group).

    Rows are sorted by key, so two loads of the same bytes compare equal.
    """

    COLUMNS = TRADE_COLUMNS

    def __init__(self, frame: pd.DataFrame, scheme_name: str = "", year_range: Optional[Tuple[int, int]] = None):
        data = frame.loc[:, list(self.COLUMNS)].copy()
        data["year"] = data["year"].astype("int64")
        data["value"] = data["value"].astype(float)
        self._frame = data.sort_values(["year", "origin", "dest", "sector"], kind="mergesort").reset_index(drop=True)
        self.scheme_name = scheme_name
        self.year_range = year_range

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    @property
    def years(self) -> Tuple[int, ...]:
        return tuple(sorted(int(year) for year in self._frame["year"].unique()))

    @property
    def countries(self) -> Tuple[str, ...]:
        codes = set(self._frame["origin"]).union(self._frame["dest"])
        return tuple(sorted(codes))

    def total(self) -> float:
        return float(self._frame["value"].sum())

    def records(self) -> Iterator[TradeFlowRecord]:
        for row in self._frame.itertuples(index=False):
            yield TradeFlowRecord(int(row.year), row.origin, row.dest, row.sector, float(row.value))

    def pair_totals(self, year: int) -> pd.Series:
        """Return flows summed over sectors, indexed by (origin, dest), for one year."""
        subset = self._frame[self._frame["year"] == year]
        return subset.groupby(["origin", "dest"], sort=True)["value"].sum()

    def __len__(self) -> int:
        return len(self._frame.index)


@dataclass(frozen=True)
class OwnershipLinkRecord:
    parent_firm: str
    parent_city: str
    subsidiary_firm: str
    subsidiary_city: str
    ownership_pct: float
    sector: str
    revenue: float

    def __post_init__(self) -> None:
        if not 0 < self.ownership_pct <= 100:
            raise OwnershipRangeError(f"ownership_pct must lie in (0, 100], got {self.ownership_pct!r}")
        if not self.revenue >= 0:
            raise ValidationError(f"revenue must be non-negative, got {self.revenue!r}")


class OwnershipLinkTable:
    """Firm-level control links kept after the control threshold filter."""

    COLUMNS = OWNERSHIP_COLUMNS

    def __init__(self, frame: pd.DataFrame, min_control_pct: float, dropped_count: int = 0):
        data = frame.loc[:, list(self.COLUMNS)].copy()
        data["ownership_pct"] = data["ownership_pct"].astype(float)
        data["revenue"] = data["revenue"].astype(float)
        self._frame = data.sort_values(["parent_firm", "subsidiary_firm"], kind="mergesort").reset_index(drop=True)
        self.min_control_pct = min_control_pct
        self.dropped_count = dropped_count

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    def total_revenue(self) -> float:
        return float(self._frame["revenue"].sum())

    def records(self) -> Iterator[OwnershipLinkRecord]:
        for row in self._frame.itertuples(index=False):
            yield OwnershipLinkRecord(*row)

    def __len__(self) -> int:
        return len(self._frame.index)


class DistanceTable(Mapping[Tuple[str, str], float]):
    """Symmetric kilometre distances between distinct countries."""

    def __init__(self, distances: Mapping[Tuple[str, str], float]):
        stored: Dict[Tuple[str, str], float] = {}
        for (first, second), km in distances.items():
            if first == second:
                raise ValidationError(f"self-distance for {first} cannot be stored")
            if not km > 0:
                raise ValidationError(f"distance between {first} and {second} must be positive, got {km!r}")
            key = _pair_key(first, second)
            if key in stored and stored[key] != km:
                raise ValidationError(f"conflicting distances for {first}-{second}")
            stored[key] = float(km)
        self._distances = MappingProxyType(dict(sorted(stored.items())))

    def __getitem__(self, pair: Tuple[str, str]) -> float:
        return self._distances[_pair_key(*pair)]

    def __contains__(self, pair) -> bool:
        try:
            return _pair_key(*pair) in self._distances
        except TypeError:
            return False

    def __iter__(self):
        return iter(self._distances)

    def __len__(self) -> int:
        return len(self._distances)

    def distance(self, origin: str, dest: str) -> Optional[float]:
        return self._distances.get(_pair_key(origin, dest))


def load_trade_flows(path, scheme: SectorScheme, year_range: Optional[Tuple[int, int]] = None) -> TradeFlowTable:
    """Load trade rows, map their sectors through ``scheme`` and sum duplicates per key."""
    df = read_table(path, TRADE_COLUMNS)
    source = _source_name(path)

    years = parse_integer(df, "year", source)
    values = parse_numeric(df, "value", source)

    for position, row in enumerate(df.itertuples(index=False)):
        line = int(row.source_line)
        _check_code(row.origin, source, line)
        _check_code(row.dest, source, line)
        if row.origin == row.dest:
            raise SelfFlowError(f"trade flow from {row.origin} to itself", source=source, line=line)
        if values.iloc[position] < 0:
            raise ValidationError(
                f"trade value must be non-negative, got {row.value!r}", source=source, line=line
            )
        if year_range is not None and not year_range[0] <= years.iloc[position] <= year_range[1]:
            raise ValidationError(
                f"year {years.iloc[position]} outside declared range {year_range[0]}-{year_range[1]}",
                source=source,
                line=line,
            )

    groups = [scheme.map_code(code, source=source, line=int(line)) for code, line in zip(df["sector"], df["source_line"])]
    raw = pd.DataFrame(
        {
            "year": years,
            "origin": df["origin"],
            "dest": df["dest"],
            "sector": groups,
            "value": values,
        },
        columns=list(TRADE_COLUMNS),
    )
    aggregated = raw.groupby(["year", "origin", "dest", "sector"], sort=True, as_index=False)["value"].sum()
    logger.debug("Loaded %d trade rows from %s into %d records", len(raw.index), source, len(aggregated.index))
    return TradeFlowTable(aggregated, scheme_name=scheme.name, year_range=year_range)


def load_cities(path) -> CityTable:
    """Load the city table, rejecting duplicate ids and out-of-range coordinates."""
    df = read_table(path, CITY_COLUMNS)
    source = _source_name(path)
    lats = parse_numeric(df, "lat", source)
    lons = parse_numeric(df, "lon", source)
    populations = parse_numeric(df, "population", source)

    cities = []
    seen = set()
    for position, row in enumerate(df.itertuples(index=False)):
        line = int(row.source_line)
        if not row.city_id:
            raise ValidationError("empty city_id", source=source, line=line)
        if row.city_id in seen:
            raise ValidationError(f"duplicate city id {row.city_id!r}", source=source, line=line)
        seen.add(row.city_id)
        cities.append(
            _located(
                lambda: CityRecord(
                    id=row.city_id,
                    name=row.name,
                    country=row.country,
                    lat=float(lats.iloc[position]),
                    lon=float(lons.iloc[position]),
                    population=float(populations.iloc[position]),
                ),
                source,
                line,
            )
        )
    return CityTable(cities)


def load_capitals(path) -> Dict[str, str]:
    """Load an explicit country -> capital city id mapping."""
    df = read_table(path, CAPITAL_COLUMNS)
    source = _source_name(path)
    capitals: Dict[str, str] = {}
    for row in df.itertuples(index=False):
        line = int(row.source_line)
        _check_code(row.country, source, line)
        if row.country in capitals:
            raise ValidationError(f"duplicate capital for {row.country}", source=source, line=line)
        capitals[row.country] = row.city_id
    return capitals


def load_gdp(path, cities: CityTable, capitals: Optional[Mapping[str, str]] = None) -> CountryTable:
    """Load GDP per country and year and attach each country's capital city.

    Without an explicit ``capitals`` mapping the most populous city of the country is used.
    """
    df = read_table(path, GDP_COLUMNS)
    source = _source_name(path)
    years = parse_integer(df, "year", source)
    gdp = parse_numeric(df, "gdp", source)

    by_country: Dict[str, Dict[int, float]] = {}
    for position, row in enumerate(df.itertuples(index=False)):
        line = int(row.source_line)
        _check_code(row.country, source, line)
        value = float(gdp.iloc[position])
        if not value > 0:
            raise ValidationError(f"GDP must be positive, got {row.gdp!r}", source=source, line=line)
        year = int(years.iloc[position])
        country_years = by_country.setdefault(row.country, {})
        if year in country_years:
            raise ValidationError(f"duplicate GDP for {row.country} in {year}", source=source, line=line)
        country_years[year] = value

    countries = []
    for code in sorted(by_country):
        capital = _resolve_capital(code, cities, capitals)
        countries.append(CountryRecord(code=code, gdp_by_year=by_country[code], capital_city_id=capital))
    return CountryTable(countries)


def load_ownership(
    path,
    min_control_pct: float = DEFAULT_MIN_CONTROL_PCT,
    cities: Optional[CityTable] = None,
    scheme: Optional[SectorScheme] = None,
) -> OwnershipLinkTable:
    """Load ownership links and keep those with ``ownership_pct >= min_control_pct``.

    With ``cities`` every city id must be known; with ``scheme`` every sector code must map.
    """
    if not 0 < min_control_pct <= 100:
        raise ValidationError(f"min_control_pct must lie in (0, 100], got {min_control_pct!r}")

    df = read_table(path, OWNERSHIP_COLUMNS)
    source = _source_name(path)
    pct = parse_numeric(df, "ownership_pct", source)
    revenue = parse_numeric(df, "revenue", source)

    seen_pairs = set()
    for position, row in enumerate(df.itertuples(index=False)):
        line = int(row.source_line)
        if not 0 < pct.iloc[position] <= 100:
            raise OwnershipRangeError(
                f"ownership_pct must lie in (0, 100], got {row.ownership_pct!r}", source=source, line=line
            )
        if revenue.iloc[position] < 0:
            raise ValidationError(f"revenue must be non-negative, got {row.revenue!r}", source=source, line=line)
        pair = (row.parent_firm, row.subsidiary_firm)
        if pair in seen_pairs:
            raise DuplicateLinkError(
                f"duplicate link {row.parent_firm!r} -> {row.subsidiary_firm!r}", source=source, line=line
            )
        seen_pairs.add(pair)
        if cities is not None:
            for city_id in (row.parent_city, row.subsidiary_city):
                if city_id not in cities:
                    raise UnknownCityError(f"unknown city id {city_id!r}", source=source, line=line)
        if scheme is not None:
            scheme.map_code(row.sector, source=source, line=line)

    links = df.drop(columns="source_line").copy()
    links["ownership_pct"] = pct
    links["revenue"] = revenue
    keep = links["ownership_pct"] >= min_control_pct
    dropped = int((~keep).sum())
    if dropped:
        logger.info(
            "Dropped %d of %d ownership links below %.1f%% control in %s",
            dropped,
            len(links.index),
            min_control_pct,
            source,
        )
    return OwnershipLinkTable(links[keep], min_control_pct=min_control_pct, dropped_count=dropped)


def load_sector_scheme(path, name: Optional[str] = None) -> SectorScheme:
    """Load a custom sector scheme; groups are ordered by first appearance."""
    df = read_table(path, SCHEME_COLUMNS)
    source = _source_name(path)
    mapping: Dict[str, str] = {}
    for row in df.itertuples(index=False):
        line = int(row.source_line)
        if not row.raw_code or not row.group:
            raise ValidationError("raw_code and group must be non-empty", source=source, line=line)
        if row.raw_code in mapping and mapping[row.raw_code] != row.group:
            raise ValidationError(f"raw code {row.raw_code!r} mapped twice", source=source, line=line)
        mapping[row.raw_code] = row.group
    groups = tuple(dict.fromkeys(mapping.values()))
    return _located(
        lambda: SectorScheme(name=name or _stem(path), mapping=mapping, groups=groups), source, None
    )


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in kilometres; accepts scalars or numpy arrays."""
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    c = 2 * np.arctan2(np.sqrt(a), np.sqrt(np.clip(1 - a, 0.0, None)))
    distance = EARTH_RADIUS_KM * c
    return float(distance) if np.ndim(distance) == 0 else distance


def capital_distances(countries: CountryTable, cities: CityTable) -> DistanceTable:
    """Compute haversine distances between the capitals of every unordered country pair."""
    codes = sorted(countries)
    capitals = {}
    for code in codes:
        capital_id = countries[code].capital_city_id
        if capital_id not in cities:
            raise UnresolvedCapitalError(f"capital {capital_id!r} of {code} is not in the city table")
        capitals[code] = cities[capital_id]

    distances = {}
    for i, first in enumerate(codes):
        for second in codes[i + 1:]:
            a, b = capitals[first], capitals[second]
            distances[(first, second)] = haversine_km(a.lat, a.lon, b.lat, b.lon)
    return DistanceTable(distances)


def _resolve_capital(code: str, cities: CityTable, capitals: Optional[Mapping[str, str]]) -> str:
    if capitals and code in capitals:
        capital = capitals[code]
        if capital not in cities:
            raise UnresolvedCapitalError(f"capital {capital!r} of {code} is not in the city table")
        return capital

    candidates = [city for city in cities.values() if city.country == code]
    if not candidates:
        raise UnresolvedCapitalError(f"no city of {code} in the city table to serve as capital")
    best = min(candidates, key=lambda city: (-city.population, city.id))
    return best.id


def _located(build, source: str, line: Optional[int]):
    """Call ``build`` and attach file/line context to a ValidationError it raises."""
    try:
        return build()
    except ValidationError as error:
        if error.source is not None:
            raise
        raise ValidationError(error.detail, source=source, line=line) from error


def _check_code(code: str, source: str, line: int) -> None:
    _located(lambda: validate_country_code(code), source, line)


def _pair_key(first: str, second: str) -> Tuple[str, str]:
    return (first, second) if first <= second else (second, first)


def _source_name(path) -> str:
    return Path(path).name


def _stem(path) -> str:
    return Path(path).stem
