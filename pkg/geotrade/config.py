"""Run configuration resolved from command-line flags, environment and config files."""

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values

from geotrade.services.domain import BUILTIN_SCHEMES, SectorScheme, ValidationError, get_scheme
from geotrade.services.glm import DEFAULT_MAX_ITER, DEFAULT_TOL
from geotrade.services.gravity import GravitySpec
from geotrade.services.ingest import DEFAULT_MIN_CONTROL_PCT, load_sector_scheme
from geotrade.services.network import WEIGHT_MODES
from geotrade.services.result_store import OUTPUT_FORMATS


ENV_PREFIX = "GEOTRADE_"
DEFAULT_OUTPUT_DIR = "output"
DEFAULT_ANALYSIS_YEARS = "1970-2010:5"
DEFAULT_GRAVITY_YEARS = "1967,1992,2002,2012"
TRADE_SCHEME = "trade10"
NETWORK_SCHEME = "fdi9"

_RANGE_PATTERN = re.compile(r"^(\d{4})-(\d{4})(?::(\d+))?$")

INPUT_NAMES = ("trade", "cities", "gdp", "capitals", "ownership")


@dataclass(frozen=True)
class RunConfig:
    trade: Optional[Path] = None
    cities: Optional[Path] = None
    gdp: Optional[Path] = None
    capitals: Optional[Path] = None
    ownership: Optional[Path] = None
    scheme: str = TRADE_SCHEME
    ownership_scheme: str = NETWORK_SCHEME
    years: Tuple[int, ...] = ()
    gravity: GravitySpec = field(default_factory=GravitySpec)
    axes: int = 3
    clusters: int = 4
    min_control_pct: float = DEFAULT_MIN_CONTROL_PCT
    weights: str = "revenue"
    min_share: float = 0.0
    out: Optional[Path] = None
    formats: Tuple[str, ...] = ("csv",)
    jobs: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.min_control_pct <= 100:
            raise ValidationError(f"--min-control-pct must lie in (0, 100], got {self.min_control_pct!r}")
        if self.jobs < 1:
            raise ValidationError(f"--jobs must be at least 1, got {self.jobs!r}")
        if self.axes < 1:
            raise ValidationError(f"--axes must be at least 1, got {self.axes!r}")
        if self.clusters < 1:
            raise ValidationError(f"--clusters must be at least 1, got {self.clusters!r}")
        if self.weights not in WEIGHT_MODES:
            raise ValidationError(f"--weights must be one of {', '.join(WEIGHT_MODES)}")
        if not 0.0 <= self.min_share < 1.0:
            raise ValidationError(f"--min-share must lie in [0, 1), got {self.min_share!r}")
        unknown = sorted(set(self.formats) - set(OUTPUT_FORMATS))
        if unknown or not self.formats:
            raise ValidationError(f"--format must list some of {', '.join(OUTPUT_FORMATS)}")

    def require(self, *names: str) -> None:
        """Raise ValidationError naming the first required input that was not given."""
        for name in names:
            if getattr(self, name) is None:
                raise ValidationError(f"missing required input --{name}")

    def require_years(self) -> Tuple[int, ...]:
        if not self.years:
            raise ValidationError("--years must list at least one year")
        return self.years

    @property
    def output_dir(self) -> Path:
        return self.out if self.out is not None else Path(DEFAULT_OUTPUT_DIR)

    @property
    def wants_svg(self) -> bool:
        return "svg" in self.formats

    @property
    def table_formats(self) -> Tuple[str, ...]:
        return tuple(fmt for fmt in self.formats if fmt != "svg")

    def resolve_scheme(self, which: str = "scheme") -> SectorScheme:
        """Return the built-in scheme of that name, or load a ``raw_code,group`` file."""
        value = getattr(self, which)
        if value in BUILTIN_SCHEMES:
            return get_scheme(value)
        path = Path(value)
        if path.suffix:
            return load_sector_scheme(path)
        return get_scheme(value)


def build_config(params: Mapping[str, object], default_scheme: str, default_years: str) -> RunConfig:
    """Build a RunConfig from resolved click parameters, filling command-specific defaults."""
    gravity = GravitySpec(
        a=float(params.get("a", 2.0)),
        mass_year=params.get("mass_year"),
        k_variant=str(params.get("k_variant", "paper")),
        assume_zero=bool(params.get("assume_zero", False)),
        tol=float(params.get("tol", DEFAULT_TOL)),
        max_iter=int(params.get("max_iter", DEFAULT_MAX_ITER)),
        strict=bool(params.get("strict", False)),
    )
    return RunConfig(
        trade=_path(params.get("trade")),
        cities=_path(params.get("cities")),
        gdp=_path(params.get("gdp")),
        capitals=_path(params.get("capitals")),
        ownership=_path(params.get("ownership")),
        scheme=str(params.get("scheme") or default_scheme),
        ownership_scheme=str(params.get("ownership_scheme") or NETWORK_SCHEME),
        years=parse_years(params.get("years") or default_years),
        gravity=gravity,
        axes=int(params.get("axes", 3)),
        clusters=int(params.get("clusters", 4)),
        min_control_pct=float(params.get("min_control_pct", DEFAULT_MIN_CONTROL_PCT)),
        weights=str(params.get("weights", "revenue")),
        min_share=float(params.get("min_share", 0.0)),
        out=_path(params.get("out")),
        formats=parse_formats(params.get("format") or "csv"),
        jobs=int(params.get("jobs", 1)),
    )


def parse_years(text: str) -> Tuple[int, ...]:
    """Parse ``1967,1992`` or ``1970-2010:5`` style year lists into sorted unique years."""
    years = set()
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        match = _RANGE_PATTERN.match(item)
        if match:
            start, stop = int(match.group(1)), int(match.group(2))
            step = int(match.group(3) or 1)
            if stop < start or step < 1:
                raise ValidationError(f"invalid year range {item!r}")
            years.update(range(start, stop + 1, step))
        elif item.isdigit():
            years.add(int(item))
        else:
            raise ValidationError(f"invalid year {item!r}")
    return tuple(sorted(years))


def parse_formats(text: str) -> Tuple[str, ...]:
    formats = [item.strip().lower() for item in str(text).split(",") if item.strip()]
    unknown = sorted(set(formats) - set(OUTPUT_FORMATS))
    if unknown:
        raise ValidationError(f"unknown output format(s): {', '.join(unknown)}")
    return tuple(fmt for fmt in OUTPUT_FORMATS if fmt in formats)


def load_config_file(path) -> Dict[str, str]:
    """Read a flat ``KEY=VALUE`` file into option names (lower case, ``-`` as ``_``)."""
    values = dotenv_values(path)
    settings = {}
    for key, value in values.items():
        if value is None:
            continue
        name = key.strip().lower().replace("-", "_")
        if name.startswith(ENV_PREFIX.lower()):
            name = name[len(ENV_PREFIX):]
        settings[name] = value
    return settings


def _path(value) -> Optional[Path]:
    if value is None:
        return None
    if not str(value).strip():
        raise ValidationError("input paths must not be empty")
    return Path(value)
