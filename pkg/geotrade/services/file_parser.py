"""Utilities for reading and normalizing tabular input files."""

from pathlib import Path
from typing import List, Sequence

import pandas as pd

from geotrade.services.domain import ValidationError


ALLOWED_EXTENSIONS = {".csv", ".xlsx", ".xls"}

# Line number of the first data row; the header occupies line 1.
FIRST_DATA_LINE = 2


class FileParsingError(ValidationError):
    """Raised when an input file cannot be parsed safely."""


class MissingColumnError(ValidationError):
    """Raised when a file header lacks a required column."""


class NonNumericValueError(ValidationError):
    """Raised when a numeric column holds a value that does not parse."""


def read_table(path, required_columns: Sequence[str]) -> pd.DataFrame:
    """Read a CSV/Excel file as text cells with a ``source_line`` column of file line numbers.

    Every cell stays a string so loaders can report the exact line of a bad value.
    """
    file_path = Path(path)
    source = file_path.name
    extension = file_path.suffix.lower()
    if extension not in ALLOWED_EXTENSIONS:
        raise FileParsingError("Unsupported file type. Use .csv, .xlsx, or .xls.", source=source)

    try:
        if extension == ".csv":
            df = pd.read_csv(
                file_path,
                dtype=str,
                keep_default_na=False,
                encoding="utf-8",
                sep=",",
                skipinitialspace=True,
            )
        else:
            df = pd.read_excel(file_path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise
    except pd.errors.EmptyDataError as error:
        raise FileParsingError("File is empty; a header row is required.", source=source) from error
    except (UnicodeDecodeError, pd.errors.ParserError, ValueError) as error:
        raise FileParsingError(
            "Could not read the file. Verify the file format and try again.", source=source
        ) from error

    df.columns = _normalize_columns(df.columns)
    missing_columns = [name for name in required_columns if name not in df.columns]
    if missing_columns:
        raise MissingColumnError(
            f"missing required column(s): {', '.join(missing_columns)}", source=source, line=1
        )

    df = df[list(required_columns)].reset_index(drop=True)
    for name in required_columns:
        df[name] = df[name].astype(str).str.strip()
    df.insert(0, "source_line", range(FIRST_DATA_LINE, FIRST_DATA_LINE + len(df.index)))
    return df


def parse_numeric(df: pd.DataFrame, column: str, source: str) -> pd.Series:
    """Convert a text column to floats, raising on the first unparseable cell."""
    values = pd.to_numeric(df[column], errors="coerce")
    invalid = values.isna()
    if invalid.any():
        position = int(invalid.to_numpy().argmax())
        raise NonNumericValueError(
            f"column {column!r} holds non-numeric value {df[column].iloc[position]!r}",
            source=source,
            line=int(df["source_line"].iloc[position]),
        )
    return values.astype(float)


def parse_integer(df: pd.DataFrame, column: str, source: str) -> pd.Series:
    """Convert a text column to integers, raising on the first non-integral cell."""
    values = parse_numeric(df, column, source)
    fractional = values != values.round()
    if fractional.any():
        position = int(fractional.to_numpy().argmax())
        raise NonNumericValueError(
            f"column {column!r} holds non-integer value {df[column].iloc[position]!r}",
            source=source,
            line=int(df["source_line"].iloc[position]),
        )
    return values.astype("int64")


def _normalize_columns(columns) -> List[str]:
    """Normalize column names and make duplicates deterministic and unique."""
    cleaned = []
    seen = {}

    for idx, column in enumerate(columns):
        name = str(column).strip().lower() if column is not None else ""
        if not name:
            name = f"column_{idx + 1}"
        count = seen.get(name, 0)
        seen[name] = count + 1
        if count > 0:
            name = f"{name}_{count + 1}"
        cleaned.append(name)

    return cleaned
