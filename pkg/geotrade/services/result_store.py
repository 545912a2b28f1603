"""Output helpers that write analysis tables as CSV and JSON files."""

from pathlib import Path
from typing import Iterable, List

import pandas as pd

from geotrade.services.domain import ValidationError


TABLE_FORMATS = ("csv", "json")
OUTPUT_FORMATS = TABLE_FORMATS + ("svg",)
FLOAT_FORMAT = "%.12g"
JSON_PRECISION = 12


class UnsupportedFormatError(ValidationError):
    """Raised when an output format name is not recognised."""


def prepare_output_dir(out_dir) -> Path:
    """Create the output directory if needed and return it as a Path."""
    output_path = Path(out_dir)
    output_path.mkdir(parents=True, exist_ok=True)
    return output_path


def write_table(frame: pd.DataFrame, out_dir, name: str, formats: Iterable[str] = ("csv",)) -> List[Path]:
    """Write ``frame`` as ``<name>.csv`` and/or ``<name>.json`` and return the written paths.

    File bytes depend only on the frame: fixed float format, ``\\n`` line endings, NaN as empty/null.
    """
    requested = _check_formats(formats)
    output_path = prepare_output_dir(out_dir)
    written = []

    if "csv" in requested:
        csv_path = output_path / f"{name}.csv"
        frame.to_csv(
            csv_path,
            index=False,
            float_format=FLOAT_FORMAT,
            na_rep="",
            encoding="utf-8",
            lineterminator="\n",
        )
        written.append(csv_path)

    if "json" in requested:
        json_path = output_path / f"{name}.json"
        payload = frame.to_json(orient="records", double_precision=JSON_PRECISION)
        json_path.write_text(payload + "\n", encoding="utf-8")
        written.append(json_path)

    return written


def _check_formats(formats: Iterable[str]) -> List[str]:
    """Validate format names and return them in canonical order."""
    requested = set(formats)
    unknown = sorted(requested - set(OUTPUT_FORMATS))
    if unknown:
        raise UnsupportedFormatError(f"Unsupported output format(s): {', '.join(unknown)}")
    return [fmt for fmt in OUTPUT_FORMATS if fmt in requested]
