"""Net benefit of the three decision strategies and strategy selection.

NB is expressed in net true positives per decision. A false positive is
exchanged against a true positive at the rate z/(1-z), z being the risk threshold.
"""
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from modules.errors import DomainError


class Strategy(IntEnum):
    """Decision strategies, in the fixed order used by every NB vector."""

    TREAT_NONE = 0
    USE_MODEL = 1
    TREAT_ALL = 2


N_STRATEGIES = len(Strategy)


@dataclass(frozen=True)
class ThetaTriplet:
    """Population prevalence, sensitivity and specificity at one threshold.

    Components are floats, or numpy arrays of equal shape when a whole batch of
    Monte Carlo draws is carried at once.
    """

    prevalence: float
    sensitivity: float
    specificity: float

    def __post_init__(self):
        for name in ('prevalence', 'sensitivity', 'specificity'):
            value = np.asarray(getattr(self, name), dtype=float)
            if not np.all((value >= 0.0) & (value <= 1.0)):
                raise DomainError(f'{name} must be in [0, 1] ({getattr(self, name)!r})')

    def as_tuple(self):
        return (self.prevalence, self.sensitivity, self.specificity)


def check_threshold(z):
    """Return z as float (or array) after checking 0 < z < 1 strictly."""
    arr = np.asarray(z, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f'Threshold must be strictly inside (0, 1) ({z!r})')
    return float(arr) if arr.ndim == 0 else arr


def exchange_rate(z):
    """Odds of the threshold, the weight of one false positive."""
    z = check_threshold(z)
    return z / (1.0 - z)


def net_benefit(strategy, theta: ThetaTriplet, z):
    """NB of one strategy.

    Args:
        strategy (Strategy|int): 0 treat none, 1 use model, 2 treat all.
        theta (ThetaTriplet): population parameters (scalar or batched).
        z (float): risk threshold.

    Returns:
        float or numpy.ndarray: NB in net true positive units.
    """
    strategy = Strategy(strategy)
    z = check_threshold(z)
    p = np.asarray(theta.prevalence, dtype=float)

    if strategy is Strategy.TREAT_NONE:
        value = np.zeros_like(p)
    elif strategy is Strategy.USE_MODEL:
        se = np.asarray(theta.sensitivity, dtype=float)
        sp = np.asarray(theta.specificity, dtype=float)
        value = p * se - (1.0 - p) * (1.0 - sp) * exchange_rate(z)
    else:
        # Same as p - (1-p)z/(1-z), written so that p == z gives 0 exactly.
        value = (p - z) / (1.0 - z)

    return float(value) if value.ndim == 0 else value


def net_benefits(theta: ThetaTriplet, z):
    """NB of every strategy; shape (..., 3) in Strategy order."""
    values = np.broadcast_arrays(*[net_benefit(s, theta, z) for s in Strategy])
    return np.stack(values, axis=-1)


def best_strategy(enb_per_strategy):
    """Strategy with the highest expected NB; ties go to the lowest index."""
    enb = np.asarray(enb_per_strategy, dtype=float)
    if enb.shape != (N_STRATEGIES,):
        raise DomainError(f'Expected {N_STRATEGIES} ENB values, got shape {enb.shape}')
    if not np.all(np.isfinite(enb)):
        raise DomainError(f'ENB values must be finite ({enb_per_strategy!r})')

    # argmax returns the first maximal entry
    return Strategy(int(np.argmax(enb)))


def incremental_nb(theta: ThetaTriplet, z):
    """NB of the model minus the best default strategy (treat none / treat all)."""
    nb_model = net_benefit(Strategy.USE_MODEL, theta, z)
    nb_default = np.maximum(
        net_benefit(Strategy.TREAT_NONE, theta, z),
        net_benefit(Strategy.TREAT_ALL, theta, z))
    value = nb_model - nb_default
    return float(value) if np.ndim(value) == 0 else value
