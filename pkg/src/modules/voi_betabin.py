"""EVPI and EVSI through beta-binomial conjugacy.

Current information is three independent Beta distributions on prevalence,
sensitivity and specificity. A simulated future sample only moves the Beta
parameters, so the updated expected NB has a closed form per iteration.
"""
from dataclasses import dataclass
import logging

import numpy as np

from modules.errors import DomainError
from modules.estimate import summarize
from modules.net_benefit import ThetaTriplet, check_threshold, net_benefits
from modules.random_streams import run_blocks, sample_beta, sample_binomial


ENGINE = 'betabin'

COMPONENTS = ('prevalence', 'sensitivity', 'specificity')

# Pseudo-count standing in for the improper Beta(0, 0).
EPSILON_PRIOR = 1e-6


@dataclass(frozen=True)
class BetaPriorSet:
    """Independent Beta(alpha, beta) distributions of the three theta components."""

    alpha_p: float
    beta_p: float
    alpha_se: float
    beta_se: float
    alpha_sp: float
    beta_sp: float

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0.0:
                raise DomainError(f'Beta parameter {name} must be > 0 ({value!r})')

    @classmethod
    def flat(cls):
        """Beta(1,1) on every component."""
        return cls(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)

    @classmethod
    def vague(cls, epsilon=EPSILON_PRIOR):
        return cls(*([epsilon] * 6))

    @classmethod
    def from_mean_and_sample_size(cls, means, sample_sizes):
        """Elicited priors: a best guess per component weighted like `sample_size` individuals.

        Example:
            A prevalence guess of 30% carrying the weight of 10 individuals is Beta(3, 7).
        """
        if np.ndim(sample_sizes) == 0:
            sample_sizes = [sample_sizes] * 3
        params = []
        for mean, size in zip(means, sample_sizes):
            if not 0.0 < mean < 1.0 or not size > 0:
                raise DomainError(f'Elicited mean must be in (0, 1) and sample size > 0 ({mean}, {size})')
            params.extend([mean * size, (1.0 - mean) * size])
        return cls(*params)

    @classmethod
    def from_dict(cls, data: dict):
        """Build from JSON-like data.

        Each of 'prevalence', 'sensitivity', 'specificity' is either an
        [alpha, beta] pair, {"alpha": a, "beta": b}, or {"mean": m, "sample_size": s}.
        """
        params = []
        for name in COMPONENTS:
            if name not in data:
                raise DomainError(f'Prior for {name} is missing')
            spec = data[name]
            try:
                if isinstance(spec, dict) and 'mean' in spec:
                    if spec.get('sample_size') is None:
                        raise DomainError(f'Prior for {name} needs "sample_size" next to "mean"')
                    mean, size = float(spec['mean']), float(spec['sample_size'])
                    params.extend([mean * size, (1.0 - mean) * size])
                elif isinstance(spec, dict):
                    params.extend([float(spec.get('alpha')), float(spec.get('beta'))])
                elif isinstance(spec, (list, tuple)) and len(spec) == 2:
                    params.extend(float(v) for v in spec)
                else:
                    raise DomainError(f'Prior for {name} must be a pair, alpha/beta or mean/sample_size ({spec!r})')
            except DomainError:
                raise
            except (TypeError, ValueError):
                raise DomainError(f'Invalid prior for {name} ({spec!r})')
        return cls(*params)

    def to_dict(self) -> dict:
        return {
            'prevalence': [self.alpha_p, self.beta_p],
            'sensitivity': [self.alpha_se, self.beta_se],
            'specificity': [self.alpha_sp, self.beta_sp],
        }

    def means(self) -> ThetaTriplet:
        return ThetaTriplet(
            prevalence=self.alpha_p / (self.alpha_p + self.beta_p),
            sensitivity=self.alpha_se / (self.alpha_se + self.beta_se),
            specificity=self.alpha_sp / (self.alpha_sp + self.beta_sp))

    def sample(self, stream, size=None) -> ThetaTriplet:
        """Draw theta from the three Beta distributions."""
        return ThetaTriplet(
            prevalence=sample_beta(self.alpha_p, self.beta_p, stream, size),
            sensitivity=sample_beta(self.alpha_se, self.beta_se, stream, size),
            specificity=sample_beta(self.alpha_sp, self.beta_sp, stream, size))


@dataclass(frozen=True)
class FutureCounts:
    """Sufficient statistics of a simulated future sample of size n_star."""

    n_pos: int
    n_tp: int
    n_fn: int
    n_tn: int
    n_fp: int
    n_star: int

    def __post_init__(self):
        ok = (np.all(np.asarray(self.n_tp) + self.n_fn == self.n_pos)
              and np.all(np.asarray(self.n_tn) + self.n_fp == np.asarray(self.n_star) - self.n_pos))
        if not ok:
            raise DomainError(f'Inconsistent future counts ({self!r})')


def priors_from_sample(counts, base: BetaPriorSet = None) -> BetaPriorSet:
    """Conjugate update of `base` (flat by default) with observed confusion counts."""
    base = base or BetaPriorSet.flat()
    return BetaPriorSet(
        alpha_p=base.alpha_p + counts.n_tp + counts.n_fn,
        beta_p=base.beta_p + counts.n_tn + counts.n_fp,
        alpha_se=base.alpha_se + counts.n_tp,
        beta_se=base.beta_se + counts.n_fn,
        alpha_sp=base.alpha_sp + counts.n_tn,
        beta_sp=base.beta_sp + counts.n_fp)


def enb_current(priors: BetaPriorSet, z):
    """ENB of each strategy under current information (NB at the prior means).

    Exact because the components are independent and NB is linear in each of them.
    """
    return net_benefits(priors.means(), z)


def simulate_future_counts(theta: ThetaTriplet, n_star, stream) -> FutureCounts:
    """Draw the counts of a future sample of n_star individuals given theta (scalar or batched)."""
    if n_star < 0:
        raise DomainError(f'n_star must be >= 0 ({n_star})')
    n_pos = sample_binomial(n_star, theta.prevalence, stream)
    n_tp = sample_binomial(n_pos, theta.sensitivity, stream)
    n_tn = sample_binomial(n_star - n_pos, theta.specificity, stream)
    return FutureCounts(
        n_pos=n_pos, n_tp=n_tp, n_fn=n_pos - n_tp,
        n_tn=n_tn, n_fp=n_star - n_pos - n_tn, n_star=n_star)


def posterior_mean_update(priors: BetaPriorSet, fc: FutureCounts) -> ThetaTriplet:
    """Posterior means of theta after observing fc."""
    return ThetaTriplet(
        prevalence=(priors.alpha_p + fc.n_tp + fc.n_fn) / (priors.alpha_p + priors.beta_p + fc.n_star),
        sensitivity=(priors.alpha_se + fc.n_tp) / (priors.alpha_se + priors.beta_se + fc.n_tp + fc.n_fn),
        specificity=(priors.alpha_sp + fc.n_tn) / (priors.alpha_sp + priors.beta_sp + fc.n_tn + fc.n_fp))


def _check_run_args(n_stars, n_sims):
    if n_sims < 2:
        raise DomainError(f'n_sims must be >= 2 ({n_sims})')
    if any(n < 0 for n in n_stars):
        raise DomainError(f'n_star must be >= 0 ({list(n_stars)})')


def run_grid(priors: BetaPriorSet, z, n_stars, n_sims: int, seed: int, workers: int = 1):
    """EVPI/EVSI over several future sample sizes sharing the same theta draws.

    Future counts for size n* come from the child stream n* of each block, so
    every element equals what run() returns for that n* alone.

    Returns:
        list[VoiEstimate]: one per n_star, in input order.
    """
    z = check_threshold(z)
    n_stars = [int(n) for n in n_stars]
    _check_run_args(n_stars, n_sims)
    logging.debug('betabin run: priors=%r z=%s n*=%s n_sims=%d seed=%d', priors, z, n_stars, n_sims, seed)

    def _task(stream, start, stop):
        theta = priors.sample(stream, size=stop - start)
        max_true = net_benefits(theta, z).max(axis=-1)
        max_sample = []
        for n_star in n_stars:
            fc = simulate_future_counts(theta, n_star, stream.child(n_star))
            max_sample.append(net_benefits(posterior_mean_update(priors, fc), z).max(axis=-1))
        return max_true, max_sample

    blocks = run_blocks(_task, n_sims, seed, workers=workers)
    max_true = np.concatenate([b[0] for b in blocks])
    enb = enb_current(priors, z)

    results = []
    for k, n_star in enumerate(n_stars):
        max_sample = np.concatenate([b[1][k] for b in blocks])
        results.append(summarize(ENGINE, z, n_star, seed, enb, max_true, max_sample,
                                 {'priors': priors.to_dict()}))
    return results


def run(priors: BetaPriorSet, z, n_star: int, n_sims: int, seed: int, workers: int = 1):
    """EVPI and EVSI for one future sample size."""
    return run_grid(priors, z, [n_star], n_sims, seed, workers=workers)[0]
