import json
import xml.etree.ElementTree as ET

import numpy as np
import pandas as pd
import pytest

from geotrade.services.plotting import scatter_svg
from geotrade.services.result_store import UnsupportedFormatError, write_table


def _gids(path, prefix):
    root = ET.parse(path).getroot()
    return sorted(element.get("id") for element in root.iter() if (element.get("id") or "").startswith(prefix))


def test_write_table_csv_and_json(tmp_path):
    frame = pd.DataFrame({"id": ["a", "b"], "value": [1.0 / 3.0, np.nan], "count": [1, 2]})

    written = write_table(frame, tmp_path / "out", "table", ["json", "csv"])

    assert [path.name for path in written] == ["table.csv", "table.json"]
    csv_text = (tmp_path / "out" / "table.csv").read_text(encoding="utf-8")
    assert csv_text == "id,value,count\na,0.333333333333,1\nb,,2\n"
    records = json.loads((tmp_path / "out" / "table.json").read_text(encoding="utf-8"))
    assert records[1] == {"id": "b", "value": None, "count": 2}
    assert len(records) == len(frame)


def test_write_table_is_byte_stable(tmp_path):
    frame = pd.DataFrame({"x": np.linspace(0.0, 1.0, 7)})

    first = write_table(frame, tmp_path / "one", "t", ["csv", "json"])
    second = write_table(frame, tmp_path / "two", "t", ["csv", "json"])

    for left, right in zip(first, second):
        assert left.read_bytes() == right.read_bytes()


def test_headers_only_for_empty_frames(tmp_path):
    (path,) = write_table(pd.DataFrame(columns=["a", "b"]), tmp_path, "empty", ["csv"])

    assert path.read_text(encoding="utf-8") == "a,b\n"


def test_unknown_format(tmp_path):
    with pytest.raises(UnsupportedFormatError):
        write_table(pd.DataFrame({"a": [1]}), tmp_path, "t", ["parquet"])


def test_scatter_svg_groups(tmp_path):
    path = scatter_svg(
        tmp_path / "plane.svg",
        [0.1, -0.2, 0.3],
        [0.0, 0.5, -0.4],
        ["CZ:1970", "CZ:1975", "PL:1970"],
        title="plane",
        polylines={"CZ": ([0.1, -0.2], [0.0, 0.5])},
        columns=([0.2, -0.1], [0.1, 0.1], ["FOOD", "WOOD"]),
    )

    assert _gids(path, "point-") == ["point-0", "point-1", "point-2"]
    assert _gids(path, "column-") == ["column-0", "column-1"]
    assert _gids(path, "trajectory-") == ["trajectory-CZ"]
    assert "CZ:1975" in path.read_text(encoding="utf-8")


def test_scatter_svg_is_reproducible(tmp_path):
    args = ([0.1, 0.2], [0.3, -0.1], ["a", "b"])

    first = scatter_svg(tmp_path / "one.svg", *args)
    second = scatter_svg(tmp_path / "two.svg", *args)

    assert first.read_bytes() == second.read_bytes()


def test_scatter_svg_rejects_ragged_input(tmp_path):
    with pytest.raises(ValueError):
        scatter_svg(tmp_path / "bad.svg", [0.0], [0.0, 1.0], ["a"])
