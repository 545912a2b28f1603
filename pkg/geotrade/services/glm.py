"""Poisson generalized linear model with log link, fitted by IRLS.

Step-halving is applied whenever a full IRLS step would raise the deviance, so the
deviance sequence is non-increasing (the glm2 fitting strategy).
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 50
START_EPSILON = 1e-8
MAX_STEP_HALVINGS = 30
# exp() overflows just above 709
_ETA_LIMIT = 700.0


class RankDeficientError(ValueError):
    """Raised when a design matrix does not have full column rank."""


class ConvergenceError(RuntimeError):
    """Raised when strict fitting is requested and IRLS does not converge."""


@dataclass(frozen=True)
class GlmProblem:
    design: np.ndarray
    response: np.ndarray
    offset: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        design = np.asarray(self.design, dtype=float)
        response = np.asarray(self.response, dtype=float)
        if design.ndim != 2:
            raise ValueError("design must be a two-dimensional matrix")
        if response.shape != (design.shape[0],):
            raise ValueError(
                f"response has {response.size} values but the design has {design.shape[0]} rows"
            )
        if not np.all(np.isfinite(design)) or not np.all(np.isfinite(response)):
            raise ValueError("design and response must be finite")
        if np.any(response < 0):
            raise ValueError("Poisson responses must be non-negative")
        offset = None
        if self.offset is not None:
            offset = np.asarray(self.offset, dtype=float)
            if offset.shape != response.shape:
                raise ValueError("offset must have one value per observation")
        n_obs, n_coef = design.shape
        if n_obs < n_coef:
            raise RankDeficientError(f"{n_obs} observations cannot identify {n_coef} coefficients")
        if np.linalg.matrix_rank(design) < n_coef:
            raise RankDeficientError("design matrix does not have full column rank")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "offset", offset)

    @property
    def n_obs(self) -> int:
        return self.design.shape[0]

    @property
    def n_coef(self) -> int:
        return self.design.shape[1]

    def intercept_column(self) -> Optional[int]:
        """Return the index of the first all-ones column, if any."""
        for index in range(self.n_coef):
            if np.all(self.design[:, index] == 1.0):
                return index
        return None


@dataclass(frozen=True)
class GlmFit:
    coefficients: np.ndarray
    deviance: float
    null_deviance: float
    fitted: np.ndarray
    iterations: int
    converged: bool
    deviance_history: Tuple[float, ...] = field(default=())


def poisson_deviance(response: np.ndarray, mean: np.ndarray) -> float:
    """Return 2 * sum(y log(y/mu) - (y - mu)), taking y log(y/mu) as 0 where y == 0."""
    y = np.asarray(response, dtype=float)
    mu = np.asarray(mean, dtype=float)
    positive = y > 0
    log_term = np.zeros_like(y)
    log_term[positive] = y[positive] * np.log(y[positive] / mu[positive])
    return float(2.0 * np.sum(log_term - (y - mu)))


def null_deviance(problem: GlmProblem) -> float:
    """Deviance of the intercept-only model (or the offset-only model without an intercept)."""
    y = problem.response
    if problem.offset is None:
        return poisson_deviance(y, np.full_like(y, y.mean()))
    if problem.intercept_column() is None:
        return poisson_deviance(y, np.exp(problem.offset))
    base = np.exp(problem.offset)
    scale = y.sum() / base.sum() if base.sum() > 0 else 0.0
    return poisson_deviance(y, np.maximum(scale * base, np.finfo(float).tiny))


def fit_poisson_glm(
    problem: GlmProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    strict: bool = False,
) -> GlmFit:
    """Maximise the Poisson log-likelihood with log link by iteratively reweighted least squares.

    Convergence is declared when ``|dev_old - dev| / (|dev| + 0.1) < tol``.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter!r}")

    X = problem.design
    y = problem.response
    offset = problem.offset if problem.offset is not None else np.zeros_like(y)

    beta = np.zeros(problem.n_coef)
    intercept = problem.intercept_column()
    if intercept is not None:
        beta[intercept] = np.log(y.mean() + START_EPSILON)

    deviance = poisson_deviance(y, _mean(X, beta, offset))
    history = [deviance]
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        mu = _mean(X, beta, offset)
        eta = X @ beta
        working = eta + (y - mu) / mu
        sqrt_w = np.sqrt(mu)
        proposal, *_ = np.linalg.lstsq(X * sqrt_w[:, None], working * sqrt_w, rcond=None)

        new_deviance = poisson_deviance(y, _mean(X, proposal, offset))
        halvings = 0
        while not new_deviance <= deviance and halvings < MAX_STEP_HALVINGS:
            proposal = (proposal + beta) / 2.0
            new_deviance = poisson_deviance(y, _mean(X, proposal, offset))
            halvings += 1
        if not new_deviance <= deviance:
            # No descent direction left at working precision.
            new_deviance = deviance
            proposal = beta
        if halvings:
            logger.debug("IRLS iteration %d used %d step halvings", iterations, halvings)

        change = abs(deviance - new_deviance) / (abs(new_deviance) + 0.1)
        beta = proposal
        deviance = new_deviance
        history.append(deviance)
        if change < tol:
            converged = True
            break

    if not converged:
        message = f"IRLS did not converge in {max_iter} iterations (deviance {deviance:.6g})"
        if strict:
            raise ConvergenceError(message)
        logger.warning(message)

    fitted = _mean(X, beta, offset)
    return GlmFit(
        coefficients=beta,
        deviance=deviance,
        null_deviance=null_deviance(problem),
        fitted=fitted,
        iterations=iterations,
        converged=converged,
        deviance_history=tuple(history),
    )


def _mean(X: np.ndarray, beta: np.ndarray, offset: np.ndarray) -> np.ndarray:
    eta = np.clip(X @ beta + offset, -_ETA_LIMIT, _ETA_LIMIT)
    return np.exp(eta)
