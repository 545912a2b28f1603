import textwrap

import numpy as np
import pandas as pd
import pytest

from geotrade.services.domain import CityRecord, CityTable
from geotrade.services.ingest import OWNERSHIP_COLUMNS, OwnershipLinkTable
from geotrade.services.synth import (
    generate_pipeline_fixtures,
    write_table2_fixture,
    write_table34_fixture,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def write_file(tmp_path):
    """Write dedented text to ``tmp_path / name`` and return the path."""

    def _write(name, text):
        path = tmp_path / name
        path.write_text(textwrap.dedent(text).lstrip(), encoding="utf-8")
        return path

    return _write


@pytest.fixture(scope="session")
def pipeline_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline")
    generate_pipeline_fixtures(out, seed=7)
    return out


@pytest.fixture(scope="session")
def table2_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("table2")
    write_table2_fixture(out)
    return out


@pytest.fixture(scope="session")
def table34_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("table34")
    write_table34_fixture(out)
    return out


def make_cities(*rows):
    """Build a CityTable from (id, country, population) tuples."""
    return CityTable(
        CityRecord(id=city_id, name=city_id, country=country, lat=45.0, lon=15.0, population=population)
        for city_id, country, population in rows
    )


def make_links(rows, min_control_pct=50.0):
    """Build an OwnershipLinkTable from (parent_city, subsidiary_city, sector, revenue) tuples."""
    records = [
        (f"P{index}", parent, f"S{index}", subsidiary, 100.0, sector, revenue)
        for index, (parent, subsidiary, sector, revenue) in enumerate(rows)
    ]
    frame = pd.DataFrame(records, columns=list(OWNERSHIP_COLUMNS))
    return OwnershipLinkTable(frame, min_control_pct=min_control_pct)


def newton_poisson(X, y, iterations=200):
    """Reference maximiser: full Newton steps on the Poisson log-likelihood with backtracking."""

    def loglik(beta):
        eta = X @ beta
        return float(np.sum(y * eta - np.exp(eta)))

    beta = np.zeros(X.shape[1])
    beta[0] = np.log(y.mean())
    for _ in range(iterations):
        mu = np.exp(X @ beta)
        gradient = X.T @ (y - mu)
        hessian = X.T @ (X * mu[:, None])
        step = np.linalg.solve(hessian, gradient)
        scale = 1.0
        while loglik(beta + scale * step) < loglik(beta) and scale > 1e-8:
            scale /= 2.0
        beta = beta + scale * step
        if np.max(np.abs(step)) < 1e-14:
            break
    return beta
