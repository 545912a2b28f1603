"""Immutable domain records shared by the ingestion and analysis services."""

import math
import re
from dataclasses import dataclass
from enum import IntEnum
from types import MappingProxyType
from typing import Dict, Iterable, Iterator, Mapping, Optional, Sequence, Tuple


_ISO2_PATTERN = re.compile(r"^[A-Z]{2}$")

SMALL_CITY_LIMIT = 50_000
LARGE_CITY_LIMIT = 250_000


class ValidationError(ValueError):
    """Raised when input data violates a domain invariant.

    ``source`` and ``line`` locate the offending row when the data came from a file.
    """

    def __init__(self, message: str, source: Optional[str] = None, line: Optional[int] = None):
        self.source = source
        self.line = line
        self.detail = message
        super().__init__(self._format(message))

    def _format(self, message: str) -> str:
        if self.source and self.line is not None:
            return f"{self.source}, line {self.line}: {message}"
        if self.source:
            return f"{self.source}: {message}"
        return message


class UnmappedSectorError(ValidationError):
    """Raised when a raw sector code has no group in the active scheme."""

    def __init__(self, raw_code: str, scheme_name: str, source: Optional[str] = None, line: Optional[int] = None):
        self.raw_code = raw_code
        super().__init__(
            f"sector code {raw_code!r} is not mapped by scheme {scheme_name!r}",
            source=source,
            line=line,
        )


class SizeClass(IntEnum):
    """City size classes, ordered SMALL < MEDIUM < LARGE."""

    SMALL = 0
    MEDIUM = 1
    LARGE = 2


def classify_city_size(population: float) -> SizeClass:
    """Classify a city by population; 50 000 and 250 000 both fall in MEDIUM."""
    if population is None or math.isnan(population) or population < 0:
        raise ValidationError(f"population must be a non-negative number, got {population!r}")
    if population < SMALL_CITY_LIMIT:
        return SizeClass.SMALL
    if population <= LARGE_CITY_LIMIT:
        return SizeClass.MEDIUM
    return SizeClass.LARGE


def validate_country_code(code: str) -> str:
    """Return ``code`` when it is an upper-case ISO-2 identifier."""
    if not isinstance(code, str) or not _ISO2_PATTERN.match(code):
        raise ValidationError(f"country code must be two upper-case letters, got {code!r}")
    return code


@dataclass(frozen=True)
class CountryRecord:
    code: str
    gdp_by_year: Mapping[int, float]
    capital_city_id: str

    def __post_init__(self) -> None:
        validate_country_code(self.code)
        for year, value in self.gdp_by_year.items():
            if not value > 0:
                raise ValidationError(f"GDP of {self.code} in {year} must be positive, got {value!r}")
        if not str(self.capital_city_id).strip():
            raise ValidationError(f"country {self.code} has no capital city id")
        object.__setattr__(self, "gdp_by_year", MappingProxyType(dict(self.gdp_by_year)))


@dataclass(frozen=True)
class CityRecord:
    id: str
    name: str
    country: str
    lat: float
    lon: float
    population: float

    def __post_init__(self) -> None:
        validate_country_code(self.country)
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude of city {self.id} out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude of city {self.id} out of range: {self.lon}")
        if not self.population >= 0:
            raise ValidationError(f"population of city {self.id} must be non-negative: {self.population}")

    @property
    def size_class(self) -> SizeClass:
        return classify_city_size(self.population)


class CityTable(Mapping[str, CityRecord]):
    """Read-only collection of cities keyed by id."""

    def __init__(self, cities: Iterable[CityRecord]):
        records: Dict[str, CityRecord] = {}
        for city in cities:
            if city.id in records:
                raise ValidationError(f"duplicate city id {city.id!r}")
            records[city.id] = city
        self._records = MappingProxyType(records)

    def __getitem__(self, city_id: str) -> CityRecord:
        return self._records[city_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def country_of(self, city_id: str) -> str:
        return self._records[city_id].country


class CountryTable(Mapping[str, CountryRecord]):
    """Read-only collection of countries keyed by ISO-2 code."""

    def __init__(self, countries: Iterable[CountryRecord]):
        records: Dict[str, CountryRecord] = {}
        for country in countries:
            if country.code in records:
                raise ValidationError(f"duplicate country {country.code!r}")
            records[country.code] = country
        self._records = MappingProxyType(dict(sorted(records.items())))

    def __getitem__(self, code: str) -> CountryRecord:
        return self._records[code]

    def __iter__(self) -> Iterator[str]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def gdp(self, code: str, year: int) -> Optional[float]:
        record = self._records.get(code)
        if record is None:
            return None
        return record.gdp_by_year.get(year)


@dataclass(frozen=True)
class SectorScheme:
    """Maps raw sector codes onto an ordered list of group labels."""

    name: str
    mapping: Mapping[str, str]
    groups: Tuple[str, ...]

    def __post_init__(self) -> None:
        groups = tuple(self.groups)
        if not groups:
            raise ValidationError(f"sector scheme {self.name!r} has no groups")
        if len(set(groups)) != len(groups):
            raise ValidationError(f"sector scheme {self.name!r} has duplicate group labels")
        unknown = sorted(set(self.mapping.values()) - set(groups))
        if unknown:
            raise ValidationError(
                f"sector scheme {self.name!r} maps onto undeclared groups: {', '.join(unknown)}"
            )
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "mapping", MappingProxyType(dict(self.mapping)))

    def map_code(self, raw_code: str, source: Optional[str] = None, line: Optional[int] = None) -> str:
        """Return the group label for ``raw_code`` or raise UnmappedSectorError."""
        group = self.mapping.get(str(raw_code).strip())
        if group is None:
            raise UnmappedSectorError(str(raw_code), self.name, source=source, line=line)
        return group


@dataclass(frozen=True)
class TradeFlowRecord:
    year: int
    origin: str
    dest: str
    sector: str
    value: float

    def __post_init__(self) -> None:
        validate_country_code(self.origin)
        validate_country_code(self.dest)
        if self.origin == self.dest:
            raise ValidationError(f"trade flow from {self.origin} to itself")
        if not self.value >= 0:
            raise ValidationError(f"trade value must be non-negative, got {self.value!r}")


TRADE_GROUPS = (
    "AGRICULTURE",
    "CHEMISTRY",
    "CONSTRUCTION",
    "ENERGY",
    "FOOD",
    "MECHANICS",
    "MINING",
    "SIDERURGY",
    "TEXTILES",
    "WOOD",
)

FDI_GROUPS = (
    "CARS",
    "FINANCE",
    "IT",
    "INDUSTRY",
    "MEDIA",
    "REAL ESTATE",
    "SALES",
    "SERVICES",
    "ENERGY",
)

_TRADE_ALIASES = {
    "FOOD PRODUCTS": "FOOD",
    "STEEL": "SIDERURGY",
    "TEXTILE": "TEXTILES",
}

_FDI_ALIASES = {
    "CAR INDUSTRY": "CARS",
    "AUTOMOTIVE": "CARS",
    "FINANCE/INSURANCE/BANKING": "FINANCE",
    "IT SERVICES": "IT",
    "MEDIA/ADVERTISING/COMMUNICATION": "MEDIA",
    "REAL ESTATE/TOURISM": "REAL ESTATE",
    "SALES/TRADE": "SALES",
    "SERVICES/CONSTRUCTION": "SERVICES",
    "CONSTRUCTION": "SERVICES",
}


def _builtin_scheme(name: str, groups: Sequence[str], aliases: Mapping[str, str]) -> SectorScheme:
    mapping = {label: label for label in groups}
    mapping.update(aliases)
    return SectorScheme(name=name, mapping=mapping, groups=tuple(groups))


BUILTIN_SCHEMES = MappingProxyType(
    {
        "trade10": _builtin_scheme("trade10", TRADE_GROUPS, _TRADE_ALIASES),
        "fdi9": _builtin_scheme("fdi9", FDI_GROUPS, _FDI_ALIASES),
    }
)


def get_scheme(name: str) -> SectorScheme:
    """Return a built-in sector scheme by name."""
    try:
        return BUILTIN_SCHEMES[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_SCHEMES))
        raise ValidationError(f"unknown sector scheme {name!r}; built-in schemes are: {known}") from None
