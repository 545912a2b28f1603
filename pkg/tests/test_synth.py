import pandas as pd
import pytest

from geotrade.services.domain import SizeClass, classify_city_size
from geotrade.services.synth import (
    ANALYSIS_YEARS,
    COUNTRY_CODES,
    GRAVITY_ANCHORS,
    generate_fixtures,
    generate_pipeline_fixtures,
    gravity_coefficients,
)


def test_same_seed_writes_same_bytes(tmp_path):
    first = generate_pipeline_fixtures(tmp_path / "a", seed=11)
    second = generate_pipeline_fixtures(tmp_path / "b", seed=11)
    other = generate_pipeline_fixtures(tmp_path / "c", seed=12)

    assert sorted(first) == ["capitals", "cities", "gdp", "ownership", "trade_flows"]
    for name in first:
        assert first[name].read_bytes() == second[name].read_bytes()
    assert first["trade_flows"].read_bytes() != other["trade_flows"].read_bytes()


def test_pipeline_panel_shape(pipeline_dir):
    trade = pd.read_csv(pipeline_dir / "trade_flows.csv")
    cities = pd.read_csv(pipeline_dir / "cities.csv")
    ownership = pd.read_csv(pipeline_dir / "ownership.csv")

    assert set(ANALYSIS_YEARS) | set(GRAVITY_ANCHORS) == set(trade["year"])
    assert set(trade["origin"]) == set(COUNTRY_CODES)
    assert (trade["origin"] != trade["dest"]).all()
    # a capital plus one large, one medium and two small cities per country
    assert len(cities) == 5 * len(COUNTRY_CODES) == 40
    assert set(cities["population"].map(classify_city_size)) == set(SizeClass)
    assert len(ownership) == 400
    assert ownership["subsidiary_city"].isin(cities["city_id"]).all()


def test_gravity_coefficients_interpolate_between_anchors():
    assert gravity_coefficients(2012) == GRAVITY_ANCHORS[2012]
    beta, _, _ = gravity_coefficients(1997)
    assert beta == pytest.approx(0.65)


def test_unknown_fixture_kind(tmp_path):
    with pytest.raises(ValueError, match="unknown fixture kind"):
        generate_fixtures("census", tmp_path)
