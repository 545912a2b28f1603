"""Correspondence analysis of contingency tables and the reports built on its factor maps."""

import logging
import re
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from geotrade.services.domain import SectorScheme, ValidationError
from geotrade.services.ingest import TradeFlowTable


logger = logging.getLogger(__name__)

# Singular values below this are numerical zeros of the standardized residual matrix.
RANK_TOL = 1e-10
ANALYSIS_YEARS = (1970, 1975, 1980, 1985, 1990, 1995, 2000, 2005, 2010)

_ROW_ID_PATTERN = re.compile(r"^([A-Z]{2}):(\d{4})$")


class CAError(ValueError):
    """Raised when a correspondence analysis request is inconsistent with the fit."""


@dataclass(frozen=True)
class ContingencyTable:
    row_ids: Tuple[str, ...]
    col_ids: Tuple[str, ...]
    counts: np.ndarray
    dropped_rows: Tuple[str, ...] = ()
    dropped_cols: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=float)
        row_ids = tuple(str(label) for label in self.row_ids)
        col_ids = tuple(str(label) for label in self.col_ids)
        if counts.shape != (len(row_ids), len(col_ids)):
            raise ValidationError(
                f"counts have shape {counts.shape} but there are {len(row_ids)} rows and {len(col_ids)} columns"
            )
        if len(set(row_ids)) != len(row_ids) or len(set(col_ids)) != len(col_ids):
            raise ValidationError("row and column labels must be unique")
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise ValidationError("contingency counts must be finite and non-negative")
        if counts.size == 0 or not counts.sum() > 0:
            raise ValidationError("contingency table has a zero grand total")
        if np.any(counts.sum(axis=1) == 0) or np.any(counts.sum(axis=0) == 0):
            raise ValidationError("contingency table has an all-zero row or column")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "col_ids", col_ids)

    @classmethod
    def from_counts(cls, row_ids: Sequence[str], col_ids: Sequence[str], counts) -> "ContingencyTable":
        """Build a table, dropping all-zero rows and columns with a logged report."""
        matrix = np.asarray(counts, dtype=float)
        row_ids = [str(label) for label in row_ids]
        col_ids = [str(label) for label in col_ids]
        if matrix.shape != (len(row_ids), len(col_ids)):
            raise ValidationError(
                f"counts have shape {matrix.shape} but there are {len(row_ids)} rows and {len(col_ids)} columns"
            )
        keep_cols = matrix.sum(axis=0) > 0 if matrix.size else np.zeros(len(col_ids), dtype=bool)
        keep_rows = matrix.sum(axis=1) > 0 if matrix.size else np.zeros(len(row_ids), dtype=bool)
        dropped_rows = tuple(label for label, keep in zip(row_ids, keep_rows) if not keep)
        dropped_cols = tuple(label for label, keep in zip(col_ids, keep_cols) if not keep)
        if dropped_rows:
            logger.warning("Dropped %d all-zero rows: %s", len(dropped_rows), ", ".join(dropped_rows))
        if dropped_cols:
            logger.warning("Dropped %d all-zero columns: %s", len(dropped_cols), ", ".join(dropped_cols))
        return cls(
            row_ids=tuple(label for label, keep in zip(row_ids, keep_rows) if keep),
            col_ids=tuple(label for label, keep in zip(col_ids, keep_cols) if keep),
            counts=matrix[np.ix_(keep_rows, keep_cols)],
            dropped_rows=dropped_rows,
            dropped_cols=dropped_cols,
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "ContingencyTable":
        return cls.from_counts(list(frame.index), list(frame.columns), frame.to_numpy(dtype=float))

    @property
    def grand_total(self) -> float:
        return float(self.counts.sum())

    @property
    def row_masses(self) -> np.ndarray:
        return self.counts.sum(axis=1) / self.grand_total

    @property
    def col_masses(self) -> np.ndarray:
        return self.counts.sum(axis=0) / self.grand_total

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.counts, index=list(self.row_ids), columns=list(self.col_ids))


@dataclass(frozen=True)
class CAResult:
    row_ids: Tuple[str, ...]
    col_ids: Tuple[str, ...]
    singular_values: np.ndarray
    inertia_shares: np.ndarray
    total_inertia: float
    row_coords: np.ndarray
    col_coords: np.ndarray
    col_standard: np.ndarray
    row_masses: np.ndarray
    col_masses: np.ndarray
    row_dist2: np.ndarray
    col_dist2: np.ndarray
    n_axes: int

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.singular_values ** 2

    def axis_labels(self) -> Tuple[str, ...]:
        return tuple(f"axis{k + 1}" for k in range(self.n_axes))

    def row_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.row_coords, columns=list(self.axis_labels()))
        frame.insert(0, "row_id", list(self.row_ids))
        return frame

    def col_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.col_coords, columns=list(self.axis_labels()))
        frame.insert(0, "col_id", list(self.col_ids))
        return frame

    def inertia_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "axis": np.arange(1, self.singular_values.size + 1, dtype=int),
                "singular_value": self.singular_values,
                "inertia_share_pct": self.inertia_shares,
            }
        )


@dataclass(frozen=True)
class TrajectoryPoint:
    year: int
    axis1: float
    axis2: float


@dataclass(frozen=True)
class TrajectorySet:
    trajectories: Mapping[str, Tuple[TrajectoryPoint, ...]]

    def __post_init__(self) -> None:
        for country, points in self.trajectories.items():
            years = [point.year for point in points]
            if any(later <= earlier for earlier, later in zip(years, years[1:])):
                raise CAError(f"trajectory of {country} is not strictly increasing in years")
        object.__setattr__(self, "trajectories", MappingProxyType(dict(self.trajectories)))

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"country": country, "year": point.year, "axis1": point.axis1, "axis2": point.axis2}
            for country, points in self.trajectories.items()
            for point in points
        ]
        return pd.DataFrame(rows, columns=["country", "year", "axis1", "axis2"])


@dataclass(frozen=True)
class AxisReport:
    axis: int
    positive: Tuple[Tuple[str, float], ...]
    negative: Tuple[Tuple[str, float], ...]

    def to_frame(self) -> pd.DataFrame:
        rows = [(row_id, value, "positive") for row_id, value in self.positive]
        rows += [(row_id, value, "negative") for row_id, value in self.negative]
        return pd.DataFrame(rows, columns=["row_id", "coordinate", "side"])


def ca_fit(table: ContingencyTable, n_axes: Optional[int] = None) -> CAResult:
    """Decompose the standardized residuals of ``table`` by SVD.

    The sign of each axis is fixed so that the column with the largest absolute
    coordinate on it is positive.
    """
    n_rows, n_cols = table.counts.shape
    max_axes = min(n_rows, n_cols) - 1
    if n_axes is not None and not 1 <= n_axes <= max(max_axes, 0):
        raise CAError(f"n_axes must lie between 1 and {max_axes}, got {n_axes}")

    P = table.counts / table.grand_total
    r = P.sum(axis=1)
    c = P.sum(axis=0)
    S = (P - np.outer(r, c)) / np.sqrt(np.outer(r, c))
    U, s, Vt = np.linalg.svd(S, full_matrices=False)
    rank = int(np.sum(s > RANK_TOL))
    U, s, V = U[:, :rank], s[:rank], Vt[:rank].T

    row_principal = (U / np.sqrt(r)[:, None]) * s
    col_principal = (V / np.sqrt(c)[:, None]) * s
    for k in range(rank):
        anchor = int(np.argmax(np.abs(col_principal[:, k])))
        if col_principal[anchor, k] < 0:
            U[:, k] *= -1
            V[:, k] *= -1
            row_principal[:, k] *= -1
            col_principal[:, k] *= -1

    total_inertia = float(np.sum(s ** 2))
    shares = 100.0 * s ** 2 / total_inertia if rank else np.zeros(0)
    if rank == 0:
        logger.warning("Contingency table has no association; correspondence analysis yields zero axes")

    kept = rank if n_axes is None else min(n_axes, rank)
    if n_axes is not None and n_axes > rank:
        logger.warning("Requested %d axes but the table has rank %d; keeping %d", n_axes, rank, rank)

    return CAResult(
        row_ids=table.row_ids,
        col_ids=table.col_ids,
        singular_values=s,
        inertia_shares=shares,
        total_inertia=total_inertia,
        row_coords=row_principal[:, :kept],
        col_coords=col_principal[:, :kept],
        col_standard=(V / np.sqrt(c)[:, None])[:, :kept],
        row_masses=r,
        col_masses=c,
        row_dist2=np.sum(row_principal ** 2, axis=1),
        col_dist2=np.sum(col_principal ** 2, axis=1),
        n_axes=kept,
    )


def project_supplementary(result: CAResult, rows) -> np.ndarray:
    """Project supplementary row profiles onto the fitted axes via the transition formula."""
    if isinstance(rows, pd.DataFrame):
        extra = [label for label in rows.columns if str(label) not in result.col_ids]
        if extra and np.any(rows[extra].to_numpy(dtype=float) != 0):
            raise CAError(f"profiles carry columns absent from the fit: {', '.join(map(str, extra))}")
        renamed = rows.rename(columns=str)
        matrix = renamed.reindex(columns=list(result.col_ids), fill_value=0.0).to_numpy(dtype=float)
    else:
        matrix = np.atleast_2d(np.asarray(rows, dtype=float))
    if matrix.shape[1] != len(result.col_ids):
        raise CAError(f"profiles have {matrix.shape[1]} columns, the fit has {len(result.col_ids)}")
    totals = matrix.sum(axis=1)
    if np.any(~(totals > 0)):
        raise CAError("every supplementary profile must have a positive total")
    return (matrix / totals[:, None]) @ result.col_standard


def build_trajectories(result: CAResult, analysis_years: Optional[Iterable[int]] = None) -> TrajectorySet:
    """Group ``COUNTRY:YEAR`` row points into per-country year-ordered paths on axes 1-2."""
    parsed = []
    for index, row_id in enumerate(result.row_ids):
        match = _ROW_ID_PATTERN.match(row_id)
        if match is None:
            raise CAError(f"row id {row_id!r} is not shaped COUNTRY:YEAR")
        parsed.append((match.group(1), int(match.group(2)), index))

    declared = None if analysis_years is None else set(int(year) for year in analysis_years)
    if declared is not None:
        outside = sorted({year for _, year, _ in parsed} - declared)
        if outside:
            raise CAError(f"row years outside the analysis years: {', '.join(map(str, outside))}")
    expected_years = declared if declared is not None else {year for _, year, _ in parsed}

    trajectories = {}
    for country in sorted({country for country, _, _ in parsed}):
        entries = sorted((year, index) for code, year, index in parsed if code == country)
        missing = sorted(expected_years - {year for year, _ in entries})
        if missing:
            logger.warning(
                "Trajectory of %s lacks years %s", country, ", ".join(str(year) for year in missing)
            )
        trajectories[country] = tuple(
            TrajectoryPoint(year=year, axis1=_coord(result, index, 0), axis2=_coord(result, index, 1))
            for year, index in entries
        )
    return TrajectorySet(trajectories=trajectories)


def axis_report(result: CAResult, axis: int) -> AxisReport:
    """List rows by their coordinate on ``axis`` (0-based), split by sign."""
    if not 0 <= axis < result.n_axes:
        raise CAError(f"axis {axis} is out of range for a fit with {result.n_axes} axes")
    values = result.row_coords[:, axis]
    order = sorted(range(values.size), key=lambda index: (-values[index], result.row_ids[index]))
    ranked = [(result.row_ids[index], float(values[index])) for index in order]
    return AxisReport(
        axis=axis,
        positive=tuple(item for item in ranked if item[1] >= 0),
        negative=tuple(item for item in ranked if item[1] < 0),
    )


def contributions(result: CAResult) -> pd.DataFrame:
    """Absolute contributions (% of axis inertia) and squared cosines of rows and columns."""
    frames = []
    eigenvalues = result.eigenvalues[: result.n_axes]
    for kind, ids, coords, masses, dist2 in (
        ("row", result.row_ids, result.row_coords, result.row_masses, result.row_dist2),
        ("column", result.col_ids, result.col_coords, result.col_masses, result.col_dist2),
    ):
        frame = pd.DataFrame({"kind": kind, "id": list(ids), "mass": masses})
        with np.errstate(divide="ignore", invalid="ignore"):
            for k in range(result.n_axes):
                frame[f"ctr{k + 1}"] = 100.0 * masses * coords[:, k] ** 2 / eigenvalues[k]
                frame[f"cos2_{k + 1}"] = np.where(dist2 > 0, coords[:, k] ** 2 / dist2, 0.0)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def export_table(
    flows: TradeFlowTable,
    scheme: Optional[SectorScheme] = None,
    years: Optional[Iterable[int]] = None,
) -> ContingencyTable:
    """Build the country-year x sector table of exports summed over destinations.

    Columns follow the scheme's group order; without a scheme the groups present are sorted.
    """
    frame = flows.frame
    if years is not None:
        frame = frame[frame["year"].isin(list(years))]
    if frame.empty:
        raise CAError("no trade flows in the requested years")
    pivot = frame.pivot_table(index=["origin", "year"], columns="sector", values="value", aggfunc="sum", fill_value=0.0)
    columns = list(scheme.groups) if scheme is not None else sorted(frame["sector"].unique())
    pivot = pivot.reindex(columns=columns, fill_value=0.0).sort_index()
    row_ids = [f"{origin}:{year}" for origin, year in pivot.index]
    return ContingencyTable.from_counts(row_ids, columns, pivot.to_numpy(dtype=float))


def _coord(result: CAResult, index: int, axis: int) -> float:
    if axis < result.n_axes:
        return float(result.row_coords[index, axis])
    return 0.0
