import math

import numpy as np
import pandas as pd
import pytest

from conftest import newton_poisson
from geotrade.services.domain import CountryRecord, CountryTable, ValidationError, get_scheme
from geotrade.services.glm import GlmFit
from geotrade.services.gravity import (
    GravityDomainError,
    GravityInputError,
    GravitySpec,
    calibrate_k,
    fit_gravity,
    gravity_flows,
    gravity_observations,
    _r2_deviance,
    theoretical_flow,
)
from geotrade.services.ingest import (
    DistanceTable,
    TradeFlowTable,
    capital_distances,
    load_capitals,
    load_cities,
    load_gdp,
    load_trade_flows,
)
from geotrade.services.synth import gravity_coefficients


CODES = ("CZ", "HR", "HU", "PL", "SI", "SK")
YEAR = 2000


def _world(rng):
    masses = dict(zip(CODES, rng.uniform(1e3, 1e5, size=len(CODES))))
    countries = CountryTable(
        CountryRecord(code=code, gdp_by_year={YEAR: float(mass)}, capital_city_id=f"{code}-CAP")
        for code, mass in masses.items()
    )
    distances = {}
    for i, first in enumerate(CODES):
        for second in CODES[i + 1:]:
            distances[(first, second)] = float(rng.uniform(200.0, 2000.0))
    return masses, countries, DistanceTable(distances)


def _flows(values):
    frame = pd.DataFrame(
        [(YEAR, origin, dest, "FOOD", value) for (origin, dest), value in values.items()],
        columns=["year", "origin", "dest", "sector", "value"],
    )
    return TradeFlowTable(frame)


def _model_flows(masses, dist, k=0.01, a=2.0):
    return {
        (origin, dest): theoretical_flow(masses[origin], masses[dest], dist[(origin, dest)], k, a)
        for origin in CODES
        for dest in CODES
        if origin != dest
    }


def test_theoretical_flow():
    assert theoretical_flow(10.0, 20.0, 2.0, 0.5, 2.0) == pytest.approx(25.0)
    values = theoretical_flow(np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array([1.0, 2.0]), 1.0, 1.0)
    np.testing.assert_allclose(values, [3.0, 4.0])


@pytest.mark.parametrize("args", [(0.0, 1.0, 1.0, 1.0, 2.0), (1.0, 1.0, -5.0, 1.0, 2.0), (1.0, 1.0, 1.0, 1.0, 0.0)])
def test_theoretical_flow_domain(args):
    with pytest.raises(GravityDomainError):
        theoretical_flow(*args)


def test_calibrate_k_variants():
    flows = [10.0, 30.0]
    masses = [100.0, 300.0]
    distances = [1.0, 2.0]

    assert calibrate_k(flows, masses) == pytest.approx(0.1)
    assert calibrate_k(flows, masses, distances, a=2.0, variant="total-preserving") == pytest.approx(40.0 / 175.0)
    with pytest.raises(GravityDomainError):
        calibrate_k(flows, masses, variant="total-preserving")
    with pytest.raises(GravityDomainError):
        calibrate_k([], [])


def test_total_preserving_k_matches_observed_total(rng):
    masses, countries, dist = _world(rng)
    values = {pair: float(value) for pair, value in _model_flows(masses, dist).items()}
    spec = GravitySpec(k_variant="total-preserving")

    fit = fit_gravity(_flows(values), YEAR, countries, dist, spec)
    comparison = gravity_flows(_flows(values), YEAR, countries, dist, spec, fit=fit)

    assert fit.k == pytest.approx(0.01, rel=1e-12)
    assert comparison["theoretical"].sum() == pytest.approx(comparison["observed"].sum(), rel=1e-12)
    np.testing.assert_allclose(comparison["ratio"], 1.0, rtol=1e-9)


def test_model_consistent_flows_are_fitted_exactly(rng):
    masses, countries, dist = _world(rng)
    flows = _flows(_model_flows(masses, dist, k=0.01, a=2.0))

    fit = fit_gravity(flows, YEAR, countries, dist, GravitySpec(tol=1e-12))

    assert fit.converged
    assert fit.n_obs == len(CODES) * (len(CODES) - 1)
    assert fit.beta == pytest.approx(1.0, abs=1e-6)
    assert fit.gamma == pytest.approx(1.0, abs=1e-6)
    assert fit.delta == pytest.approx(-2.0, abs=1e-6)
    assert fit.intercept == pytest.approx(math.log(0.01), abs=1e-5)
    assert fit.r2_deviance == pytest.approx(1.0, abs=1e-9)
    assert fit.r2_corr == pytest.approx(1.0, abs=1e-9)


def test_distance_units_only_shift_the_intercept(rng):
    masses, countries, dist = _world(rng)
    means = _model_flows(masses, dist, k=0.5, a=1.5)
    flows = _flows({pair: float(rng.poisson(mean)) for pair, mean in means.items()})
    scaled = DistanceTable({pair: 10.0 * km for pair, km in dist.items()})
    spec = GravitySpec(tol=1e-12)

    base = fit_gravity(flows, YEAR, countries, dist, spec)
    rescaled = fit_gravity(flows, YEAR, countries, scaled, spec)

    assert rescaled.beta == pytest.approx(base.beta, abs=1e-6)
    assert rescaled.gamma == pytest.approx(base.gamma, abs=1e-6)
    assert rescaled.delta == pytest.approx(base.delta, abs=1e-6)
    assert rescaled.intercept == pytest.approx(base.intercept - base.delta * math.log(10.0), abs=1e-5)
    assert rescaled.r2_deviance == pytest.approx(base.r2_deviance, abs=1e-9)


def test_reordered_flows_give_the_same_fit(rng):
    masses, countries, dist = _world(rng)
    means = _model_flows(masses, dist, k=0.5, a=1.5)
    values = {pair: float(rng.poisson(mean)) for pair, mean in means.items()}
    pairs = list(values)
    shuffled = {pairs[i]: values[pairs[i]] for i in rng.permutation(len(pairs))}
    spec = GravitySpec(tol=1e-12)

    base = fit_gravity(_flows(values), YEAR, countries, dist, spec)
    other = fit_gravity(_flows(shuffled), YEAR, countries, dist, spec)

    for name in ("intercept", "beta", "gamma", "delta"):
        assert getattr(other, name) == pytest.approx(getattr(base, name), abs=1e-8)


def test_equal_flows_have_no_mass_or_distance_effect(rng):
    masses, countries, dist = _world(rng)
    flows = _flows({pair: 50.0 for pair in _model_flows(masses, dist)})

    fit = fit_gravity(flows, YEAR, countries, dist)
    observations = gravity_observations(flows, YEAR, countries, dist, GravitySpec())
    problem = observations.problem()
    reference = newton_poisson(problem.design, problem.response)

    np.testing.assert_allclose([fit.beta, fit.gamma, fit.delta], 0.0, atol=1e-8)
    np.testing.assert_allclose([fit.intercept, fit.beta, fit.gamma, fit.delta], reference, atol=1e-8)
    assert fit.intercept == pytest.approx(math.log(50.0), abs=1e-8)
    # Null and residual deviance are both zero: a perfect fit of a constant.
    assert fit.r2_deviance == 1.0
    assert math.isnan(fit.r2_corr)


def test_r2_deviance_is_undefined_when_only_the_null_model_is_perfect():
    perfect = GlmFit(np.zeros(1), 0.0, 0.0, np.ones(3), 1, True)
    undefined = GlmFit(np.zeros(1), 0.5, 0.0, np.ones(3), 1, True)
    partial = GlmFit(np.zeros(1), 1.0, 4.0, np.ones(3), 1, True)

    assert _r2_deviance(perfect) == 1.0
    assert math.isnan(_r2_deviance(undefined))
    assert _r2_deviance(partial) == pytest.approx(0.75)


def test_observed_only_and_assume_zero(rng):
    masses, countries, dist = _world(rng)
    values = _model_flows(masses, dist)
    del values[("CZ", "HR")]
    flows = _flows(values)

    observed = gravity_observations(flows, YEAR, countries, dist, GravitySpec())
    padded = gravity_observations(flows, YEAR, countries, dist, GravitySpec(assume_zero=True))

    assert len(observed.observed) == 29
    assert len(padded.observed) == 30
    assert padded.observed[padded.origins.index("CZ")] == 0.0


def test_too_few_pairs():
    countries = CountryTable(
        CountryRecord(code=code, gdp_by_year={YEAR: 100.0 + i}, capital_city_id=f"{code}-CAP")
        for i, code in enumerate(("CZ", "PL"))
    )
    dist = DistanceTable({("CZ", "PL"): 500.0})
    flows = _flows({("CZ", "PL"): 10.0, ("PL", "CZ"): 12.0})

    with pytest.raises(GravityInputError, match="cannot identify"):
        fit_gravity(flows, YEAR, countries, dist)


def test_missing_year_and_missing_gdp(rng):
    masses, countries, dist = _world(rng)
    flows = _flows(_model_flows(masses, dist))

    with pytest.raises(GravityInputError, match="no trade flows"):
        fit_gravity(flows, 1999, countries, dist)
    with pytest.raises(GravityInputError, match="no GDP"):
        fit_gravity(flows, YEAR, countries, dist, GravitySpec(mass_year=1990))


def test_spec_validation():
    with pytest.raises(ValidationError):
        GravitySpec(a=0.0)
    with pytest.raises(ValidationError):
        GravitySpec(k_variant="median")


def test_synthetic_panel_recovers_generator_coefficients(pipeline_dir):
    cities = load_cities(pipeline_dir / "cities.csv")
    countries = load_gdp(pipeline_dir / "gdp.csv", cities, load_capitals(pipeline_dir / "capitals.csv"))
    flows = load_trade_flows(pipeline_dir / "trade_flows.csv", get_scheme("trade10"))
    dist = capital_distances(countries, cities)

    fit = fit_gravity(flows, 2012, countries, dist)
    beta, gamma, delta = gravity_coefficients(2012)

    assert fit.n_obs == 56
    assert fit.beta == pytest.approx(beta, abs=0.1)
    assert fit.gamma == pytest.approx(gamma, abs=0.1)
    assert fit.delta == pytest.approx(delta, abs=0.1)
    assert fit.r2_deviance >= 0.8
