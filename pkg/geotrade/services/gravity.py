"""Gravity model of bilateral flows: theoretical flows, k calibration and Poisson estimation."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from geotrade.services.domain import CountryTable, ValidationError
from geotrade.services.glm import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    GlmFit,
    GlmProblem,
    fit_poisson_glm,
)
from geotrade.services.ingest import DistanceTable, TradeFlowTable


logger = logging.getLogger(__name__)

K_VARIANTS = ("paper", "total-preserving")
COEFFICIENT_NAMES = ("intercept", "beta", "gamma", "delta")
PERFECT_FIT_DEVIANCE = 1e-9


class GravityDomainError(ValueError):
    """Raised when gravity inputs are outside the model's domain."""


class GravityInputError(ValidationError):
    """Raised when a year's observations cannot support a gravity fit."""


@dataclass(frozen=True)
class GravitySpec:
    a: float = 2.0
    mass_year: Optional[int] = None
    k_variant: str = "paper"
    assume_zero: bool = False
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    strict: bool = False

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ValidationError(f"distance exponent a must be positive, got {self.a!r}")
        if self.k_variant not in K_VARIANTS:
            raise ValidationError(f"k variant must be one of {', '.join(K_VARIANTS)}, got {self.k_variant!r}")

    def masses_for(self, year: int) -> int:
        return self.mass_year if self.mass_year is not None else year


@dataclass(frozen=True)
class GravityFit:
    year: int
    intercept: float
    beta: float
    gamma: float
    delta: float
    r2_deviance: float
    r2_corr: float
    n_obs: int
    iterations: int
    converged: bool
    deviance: float
    null_deviance: float
    k: float

    def as_row(self) -> dict:
        return {
            "year": self.year,
            "beta": self.beta,
            "gamma": self.gamma,
            "delta": self.delta,
            "r2_deviance": self.r2_deviance,
            "r2_corr": self.r2_corr,
            "n_obs": self.n_obs,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class GravityObservations:
    """The ordered country pairs entering one year's regression."""

    origins: Tuple[str, ...]
    dests: Tuple[str, ...]
    observed: np.ndarray
    mass_origin: np.ndarray
    mass_dest: np.ndarray
    distance: np.ndarray

    def problem(self) -> GlmProblem:
        design = np.column_stack(
            [
                np.ones_like(self.observed),
                np.log(self.mass_origin),
                np.log(self.mass_dest),
                np.log(self.distance),
            ]
        )
        return GlmProblem(design=design, response=self.observed)


def theoretical_flow(m_i, m_j, d_ij, k, a):
    """Return k * m_i * m_j / d_ij ** a; accepts scalars or numpy arrays."""
    values = [np.asarray(value, dtype=float) for value in (m_i, m_j, d_ij, k)]
    if any(np.any(~(value > 0)) for value in values):
        raise GravityDomainError("masses, distance and k must all be positive")
    if not a > 0:
        raise GravityDomainError(f"distance exponent a must be positive, got {a!r}")
    m_i, m_j, d_ij, k = values
    flow = k * m_i * m_j / d_ij ** a
    return float(flow) if np.ndim(flow) == 0 else flow


def calibrate_k(
    flows: Sequence[float],
    masses: Sequence[float],
    distances: Optional[Sequence[float]] = None,
    a: float = 2.0,
    variant: str = "paper",
) -> float:
    """Return the mobility constant k.

    ``paper``: sum(flows) / sum(m_i * m_j).
    ``total-preserving``: sum(flows) / sum(m_i * m_j / d_ij ** a), so theoretical totals match observed.
    """
    flow_values = np.asarray(flows, dtype=float)
    mass_values = np.asarray(masses, dtype=float)
    if flow_values.size == 0:
        raise GravityDomainError("k calibration needs at least one flow")
    if flow_values.shape != mass_values.shape:
        raise GravityDomainError("flows and mass products must have the same length")
    if variant not in K_VARIANTS:
        raise GravityDomainError(f"unknown k variant {variant!r}")

    if variant == "total-preserving":
        if distances is None:
            raise GravityDomainError("the total-preserving variant needs distances")
        distance_values = np.asarray(distances, dtype=float)
        if distance_values.shape != mass_values.shape or np.any(distance_values <= 0):
            raise GravityDomainError("distances must be positive and match the mass products")
        denominator = np.sum(mass_values / distance_values ** a)
    else:
        denominator = np.sum(mass_values)

    if not denominator > 0:
        raise GravityDomainError("sum of mass products must be positive")
    return float(np.sum(flow_values) / denominator)


def gravity_observations(
    flows: TradeFlowTable,
    year: int,
    countries: CountryTable,
    dist: DistanceTable,
    spec: GravitySpec,
) -> GravityObservations:
    """Assemble the ordered pairs, summed over sectors, for one year."""
    if year not in flows.years:
        raise GravityInputError(f"no trade flows recorded for {year}")
    mass_year = spec.masses_for(year)
    totals = flows.pair_totals(year)

    if spec.assume_zero:
        eligible = [
            code for code in countries if countries.gdp(code, mass_year) is not None
        ]
        pairs = [
            (origin, dest)
            for origin in eligible
            for dest in eligible
            if origin != dest and dist.distance(origin, dest) is not None
        ]
        covered = set(pairs)
        for origin, dest in totals.index:
            if (origin, dest) not in covered:
                _require_pair_inputs(origin, dest, countries, dist, mass_year)
    else:
        pairs = list(totals.index)

    origins: List[str] = []
    dests: List[str] = []
    observed, mass_i, mass_j, distance = [], [], [], []
    for origin, dest in sorted(pairs):
        m_i, m_j, d_ij = _require_pair_inputs(origin, dest, countries, dist, mass_year)
        origins.append(origin)
        dests.append(dest)
        observed.append(float(totals.get((origin, dest), 0.0)))
        mass_i.append(m_i)
        mass_j.append(m_j)
        distance.append(d_ij)

    if len(observed) < len(COEFFICIENT_NAMES):
        raise GravityInputError(
            f"{year}: {len(observed)} country pairs cannot identify {len(COEFFICIENT_NAMES)} coefficients"
        )
    return GravityObservations(
        origins=tuple(origins),
        dests=tuple(dests),
        observed=np.asarray(observed),
        mass_origin=np.asarray(mass_i),
        mass_dest=np.asarray(mass_j),
        distance=np.asarray(distance),
    )


def fit_gravity(
    flows: TradeFlowTable,
    year: int,
    countries: CountryTable,
    dist: DistanceTable,
    spec: GravitySpec = GravitySpec(),
) -> GravityFit:
    """Estimate log F = c + beta log M_i + gamma log M_j + delta log D by Poisson regression.

    ``delta`` is the raw coefficient on log D; the exponent ``a`` only enters theoretical flows.
    """
    observations = gravity_observations(flows, year, countries, dist, spec)
    glm_fit = fit_poisson_glm(observations.problem(), tol=spec.tol, max_iter=spec.max_iter, strict=spec.strict)
    if not glm_fit.converged:
        logger.warning("Gravity fit for %d did not converge after %d iterations", year, glm_fit.iterations)
    intercept, beta, gamma, delta = (float(value) for value in glm_fit.coefficients)
    return GravityFit(
        year=year,
        intercept=intercept,
        beta=beta,
        gamma=gamma,
        delta=delta,
        r2_deviance=_r2_deviance(glm_fit),
        r2_corr=_r2_corr(observations.observed, glm_fit.fitted),
        n_obs=len(observations.observed),
        iterations=glm_fit.iterations,
        converged=glm_fit.converged,
        deviance=glm_fit.deviance,
        null_deviance=glm_fit.null_deviance,
        k=_calibrated_k(observations, spec),
    )


def gravity_flows(
    flows: TradeFlowTable,
    year: int,
    countries: CountryTable,
    dist: DistanceTable,
    spec: GravitySpec = GravitySpec(),
    fit: Optional[GravityFit] = None,
) -> pd.DataFrame:
    """Compare observed flows with the fitted regression and the theoretical gravity flows."""
    observations = gravity_observations(flows, year, countries, dist, spec)
    if fit is None:
        fit = fit_gravity(flows, year, countries, dist, spec)

    log_fitted = (
        fit.intercept
        + fit.beta * np.log(observations.mass_origin)
        + fit.gamma * np.log(observations.mass_dest)
        + fit.delta * np.log(observations.distance)
    )
    if fit.k > 0:
        theoretical = theoretical_flow(
            observations.mass_origin, observations.mass_dest, observations.distance, fit.k, spec.a
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = observations.observed / theoretical
    else:
        theoretical = np.zeros_like(observations.observed)
        ratio = np.full_like(observations.observed, np.nan)

    return pd.DataFrame(
        {
            "origin": observations.origins,
            "dest": observations.dests,
            "observed": observations.observed,
            "fitted": np.exp(log_fitted),
            "theoretical": theoretical,
            "ratio": ratio,
        }
    )


def _require_pair_inputs(
    origin: str, dest: str, countries: CountryTable, dist: DistanceTable, mass_year: int
) -> Tuple[float, float, float]:
    m_i = countries.gdp(origin, mass_year)
    m_j = countries.gdp(dest, mass_year)
    if m_i is None or m_j is None:
        missing = origin if m_i is None else dest
        raise GravityInputError(f"no GDP for {missing} in {mass_year} (pair {origin}->{dest})")
    d_ij = dist.distance(origin, dest)
    if d_ij is None:
        raise GravityInputError(f"no distance between {origin} and {dest}")
    return m_i, m_j, d_ij


def _calibrated_k(observations: GravityObservations, spec: GravitySpec) -> float:
    return calibrate_k(
        observations.observed,
        observations.mass_origin * observations.mass_dest,
        distances=observations.distance,
        a=spec.a,
        variant=spec.k_variant,
    )


def _r2_deviance(glm_fit: GlmFit) -> float:
    """1 - D/D0; with a zero null deviance it is 1 for a perfect fit and undefined otherwise."""
    if glm_fit.null_deviance <= 0:
        return 1.0 if glm_fit.deviance <= PERFECT_FIT_DEVIANCE else float("nan")
    return float(np.clip(1.0 - glm_fit.deviance / glm_fit.null_deviance, 0.0, 1.0))


def _r2_corr(observed: np.ndarray, fitted: np.ndarray) -> float:
    if np.std(observed) == 0 or np.std(fitted) == 0:
        return float("nan")
    return float(np.corrcoef(observed, fitted)[0, 1] ** 2)
