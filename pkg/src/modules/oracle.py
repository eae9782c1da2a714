"""Exact EVPI/EVSI by enumeration, the reference for the Monte Carlo engines.

Future data enter only through (n_pos, n_tp, n_tn), so EVSI is a finite sum
over that lattice. For a discrete prior the posterior is exact Bayes over the
atoms; for independent Beta priors the marginal of each count is beta-binomial
and the posterior means are closed form.

Both sums are written as sum over outcomes of
    P(outcome) * (max_i ENB_i(outcome) - ENB_i*(outcome)),
i* being the best strategy under current information. Every term is >= 0.
"""
from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy
from scipy.stats import betabinom

from modules.errors import DomainError, GuardError
from modules.net_benefit import ThetaTriplet, best_strategy, check_threshold, net_benefits
from modules.voi_betabin import FutureCounts, posterior_mean_update
from modules.voi_generic import PosteriorDraws


MAX_OUTCOMES = 10 ** 6

PROBABILITY_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class DiscretePrior:
    """Finite set of theta atoms with their probabilities."""

    theta: ThetaTriplet
    probabilities: np.ndarray

    def __post_init__(self):
        probs = np.atleast_1d(np.asarray(self.probabilities, dtype=float))
        theta = ThetaTriplet(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in self.theta.as_tuple()))
        if probs.ndim != 1 or probs.size < 1 or any(np.shape(v) != probs.shape for v in theta.as_tuple()):
            raise DomainError('A discrete prior needs at least one atom and one probability per atom')
        if np.any(probs <= 0.0):
            raise DomainError(f'Atom probabilities must be positive ({probs})')
        if abs(math.fsum(probs) - 1.0) > PROBABILITY_TOLERANCE:
            raise DomainError(f'Atom probabilities must sum to 1 ({math.fsum(probs)!r})')
        object.__setattr__(self, 'theta', theta)
        object.__setattr__(self, 'probabilities', probs)

    @classmethod
    def from_atoms(cls, atoms):
        """Build from a sequence of (ThetaTriplet or (p, se, sp), probability)."""
        thetas, probs = [], []
        for theta, prob in atoms:
            thetas.append(theta.as_tuple() if isinstance(theta, ThetaTriplet) else tuple(theta))
            probs.append(prob)
        if not thetas:
            raise DomainError('A discrete prior needs at least one atom')
        p, se, sp = (np.array(col, dtype=float) for col in zip(*thetas))
        return cls(ThetaTriplet(p, se, sp), np.array(probs, dtype=float))

    @classmethod
    def from_dict(cls, data: dict):
        """JSON form: {"atoms": [{"prevalence": .., "sensitivity": .., "specificity": .., "probability": ..}, ...]}."""
        try:
            atoms = [((a['prevalence'], a['sensitivity'], a['specificity']), a['probability'])
                     for a in data['atoms']]
            return cls.from_atoms(atoms)
        except DomainError:
            raise
        except (KeyError, TypeError, ValueError):
            raise DomainError(f'Invalid discrete prior ({data!r})')

    @property
    def size(self) -> int:
        return int(self.probabilities.size)

    def atom_counts(self, M: int) -> np.ndarray:
        """Largest-remainder allocation of M draws to the atoms (each atom gets at least one)."""
        if M < self.size:
            raise DomainError(f'Need at least one draw per atom (M={M}, atoms={self.size})')
        raw = self.probabilities * M
        counts = np.maximum(np.floor(raw).astype(int), 1)
        order = np.argsort(-(raw - np.floor(raw)), kind='stable')
        k = 0
        while counts.sum() < M:
            counts[order[k % self.size]] += 1
            k += 1
        while counts.sum() > M:
            i = int(np.argmax(counts))
            counts[i] -= 1
        return counts

    def to_draws(self, M: int):
        """Expand the atoms into M equally weighted draws.

        Returns:
            tuple: (PosteriorDraws, DiscretePrior whose probabilities are the realized draw fractions)
        """
        counts = self.atom_counts(M)
        draws = PosteriorDraws(*(np.repeat(v, counts) for v in self.theta.as_tuple()))
        return draws, DiscretePrior(self.theta, counts / counts.sum())


def outcome_count(n_star: int) -> int:
    """Number of (n_pos, n_tp, n_tn) lattice points for a future sample of n_star."""
    return (n_star + 1) * (n_star + 2) * (n_star + 3) // 6


def _check_guard(n_star, max_outcomes):
    if n_star < 0:
        raise DomainError(f'n_star must be >= 0 ({n_star})')
    outcomes = outcome_count(n_star)
    if outcomes > max_outcomes:
        raise GuardError(f'Enumeration of n*={n_star} needs {outcomes} outcomes (limit {max_outcomes})')
    return outcomes


def _log_binom(k, m, q):
    return gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1) + xlogy(k, q) + xlog1py(m - k, -q)


def evpi_exact(prior: DiscretePrior, z) -> float:
    """Exact EVPI of a discrete prior."""
    z = check_threshold(z)
    nb = net_benefits(prior.theta, z)
    best = best_strategy(prior.probabilities @ nb)
    return math.fsum(prior.probabilities * (nb.max(axis=-1) - nb[:, best]))


def evsi_exact(prior: DiscretePrior, z, n_star: int, max_outcomes: int = MAX_OUTCOMES) -> float:
    """Exact EVSI of a discrete prior for a future sample of n_star."""
    z = check_threshold(z)
    outcomes = _check_guard(n_star, max_outcomes)
    if n_star == 0:
        return 0.0

    p, se, sp = prior.theta.as_tuple()
    nb = net_benefits(prior.theta, z)
    best = best_strategy(prior.probabilities @ nb)
    logging.debug('Enumerate %d outcomes over %d atoms (n*=%d, z=%s)', outcomes, prior.size, n_star, z)

    terms = []
    for n_pos in range(n_star + 1):
        n_neg = n_star - n_pos
        k_tp = np.arange(n_pos + 1)[:, None]
        k_tn = np.arange(n_neg + 1)[:, None]
        lik_pos = np.exp(_log_binom(n_pos, n_star, p))
        lik_tp = np.exp(_log_binom(k_tp, n_pos, se[None, :]))
        lik_tn = np.exp(_log_binom(k_tn, n_neg, sp[None, :]))

        # joint[t, n, k] = P(atom k) P(outcome | atom k)
        joint = (prior.probabilities * lik_pos)[None, None, :] * lik_tp[:, None, :] * lik_tn[None, :, :]
        enb = joint @ nb
        terms.append(float(np.sum(enb.max(axis=-1) - enb[..., best])))
    return math.fsum(terms)


def evsi_exact_beta(priors, z, n_star: int, max_outcomes: int = MAX_OUTCOMES) -> float:
    """Exact EVSI under independent Beta priors (BetaPriorSet)."""
    z = check_threshold(z)
    _check_guard(n_star, max_outcomes)
    if n_star == 0:
        return 0.0

    best = best_strategy(net_benefits(priors.means(), z))
    terms = []
    for n_pos in range(n_star + 1):
        n_neg = n_star - n_pos
        k_tp = np.arange(n_pos + 1)[:, None]
        k_tn = np.arange(n_neg + 1)[None, :]
        marginal = (betabinom.pmf(n_pos, n_star, priors.alpha_p, priors.beta_p)
                    * betabinom.pmf(k_tp, n_pos, priors.alpha_se, priors.beta_se)
                    * betabinom.pmf(k_tn, n_neg, priors.alpha_sp, priors.beta_sp))
        fc = FutureCounts(n_pos=n_pos, n_tp=k_tp, n_fn=n_pos - k_tp, n_tn=k_tn, n_fp=n_neg - k_tn, n_star=n_star)
        enb = net_benefits(posterior_mean_update(priors, fc), z)
        terms.append(float(np.sum(marginal * (enb.max(axis=-1) - enb[..., best]))))
    return math.fsum(terms)
