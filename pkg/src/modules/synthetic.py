"""Synthetic validation samples from a one-parameter logistic risk model.

The linear predictor is intercept + slope * X with X ~ N(0, 1); the risk is its
logistic transform and the outcome is Bernoulli(risk). The intercept is solved
so that the expected risk equals the requested prevalence. A slope of 0 gives
an uninformative model whose every risk equals the prevalence.
"""
import logging

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.optimize import brentq
from scipy.special import expit, logit

from modules.errors import DomainError
from modules.random_streams import sample_uniform, substream
from modules.validation_data import ValidationSample


DEFAULT_N = 23034
DEFAULT_PREVALENCE = 0.0679
DEFAULT_SLOPE = 1.1

# Quadrature nodes for E[expit(a + b X)].
QUADRATURE_DEGREE = 64

_NODES, _WEIGHTS = hermegauss(QUADRATURE_DEGREE)
_WEIGHTS = _WEIGHTS / _WEIGHTS.sum()

LATENT_STREAM = 0
OUTCOME_STREAM = 1


def expected_risk(intercept: float, slope: float) -> float:
    """Mean risk of the logistic model over a standard normal predictor."""
    return float(_WEIGHTS @ expit(intercept + slope * _NODES))


def solve_intercept(prevalence: float, slope: float) -> float:
    """Intercept giving an expected risk equal to `prevalence`."""
    if not 0.0 < prevalence < 1.0:
        raise DomainError(f'prevalence must be in (0, 1) ({prevalence})')
    if slope == 0.0:
        return float(logit(prevalence))

    # The mean risk is increasing in the intercept; bracket around the no-slope solution.
    centre = float(logit(prevalence))
    span = 10.0 + 10.0 * abs(slope)
    return brentq(lambda a: expected_risk(a, slope) - prevalence, centre - span, centre + span, xtol=1e-12)


def synthesize_sample(n: int = DEFAULT_N, prevalence: float = DEFAULT_PREVALENCE,
                      slope: float = DEFAULT_SLOPE, seed: int = 0) -> ValidationSample:
    """Draw a seed-deterministic synthetic ValidationSample.

    Args:
        n (int): number of records.
        prevalence (float): target expected event fraction.
        slope (float): standard deviation of the linear predictor, controls discrimination.
        seed (int): master seed.

    Returns:
        ValidationSample:
    """
    if n < 1:
        raise DomainError(f'n must be >= 1 ({n})')
    if slope < 0.0:
        raise DomainError(f'slope must be >= 0 ({slope})')

    intercept = solve_intercept(prevalence, slope)
    stream = substream(seed, 0)
    if slope == 0.0:
        risk = np.full(n, prevalence, dtype=float)
    else:
        latent = stream.child(LATENT_STREAM).generator.standard_normal(n)
        risk = expit(intercept + slope * latent)
    outcome = (sample_uniform(stream.child(OUTCOME_STREAM), n) < risk).astype(np.int8)

    sample = ValidationSample(risk, outcome)
    logging.info('Synthesized %r (intercept=%.6g, slope=%g, target prevalence=%g)',
                 sample, intercept, slope, prevalence)
    return sample
