"""Self-contained SVG scatter plots of factor planes."""

import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence, Tuple

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure


logger = logging.getLogger(__name__)

SVG_RC = {
    "svg.hashsalt": "geotrade",
    "svg.fonttype": "none",
    "font.size": 8.0,
}
ROW_COLOR = "#1f4e79"
COLUMN_COLOR = "#b22222"


def scatter_svg(
    path,
    x: Sequence[float],
    y: Sequence[float],
    labels: Sequence[str],
    title: str = "",
    axis_labels: Tuple[str, str] = ("axis 1", "axis 2"),
    polylines: Optional[Mapping[str, Tuple[Sequence[float], Sequence[float]]]] = None,
    columns: Optional[Tuple[Sequence[float], Sequence[float], Sequence[str]]] = None,
) -> Path:
    """Write a labelled scatter plot to ``path``; each row point is an SVG group ``point-<n>``.

    ``polylines`` maps a name to the (x, y) path drawn through its points, and ``columns``
    adds column points as ``column-<n>`` groups.
    """
    if not len(x) == len(y) == len(labels):
        raise ValueError("x, y and labels must have the same length")

    with matplotlib.rc_context(SVG_RC):
        figure = _draw(x, y, labels, title, axis_labels, polylines, columns)
        output_path = Path(path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        figure.savefig(output_path, format="svg", metadata={"Date": None})
    logger.debug("Wrote %d points to %s", len(x), output_path)
    return output_path


def _draw(x, y, labels, title, axis_labels, polylines, columns) -> Figure:
    figure = Figure(figsize=(7.0, 6.0))
    FigureCanvasSVG(figure)
    ax = figure.add_subplot(1, 1, 1)
    ax.axhline(0.0, color="#999999", linewidth=0.5)
    ax.axvline(0.0, color="#999999", linewidth=0.5)

    for name, (xs, ys) in sorted((polylines or {}).items()):
        (line,) = ax.plot(xs, ys, color="#888888", linewidth=0.8)
        line.set_gid(f"trajectory-{name}")

    for index, (px, py, label) in enumerate(zip(x, y, labels)):
        (marker,) = ax.plot([px], [py], marker="o", markersize=3.5, linestyle="none", color=ROW_COLOR)
        marker.set_gid(f"point-{index}")
        ax.annotate(str(label), (px, py), xytext=(3, 3), textcoords="offset points", color=ROW_COLOR)

    if columns is not None:
        for index, (cx, cy, label) in enumerate(zip(*columns)):
            (marker,) = ax.plot([cx], [cy], marker="^", markersize=4.5, linestyle="none", color=COLUMN_COLOR)
            marker.set_gid(f"column-{index}")
            ax.annotate(str(label), (cx, cy), xytext=(3, -8), textcoords="offset points", color=COLUMN_COLOR)

    ax.set_xlabel(axis_labels[0])
    ax.set_ylabel(axis_labels[1])
    if title:
        ax.set_title(title)

    return figure
