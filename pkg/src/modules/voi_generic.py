"""EVSI for any current-information distribution given as posterior draws.

The draws form an empirical distribution of theta. A simulated future sample
reweights each draw by its binomial likelihood; the updated ENBs are the
weighted averages of the per-draw NBs.
"""
from dataclasses import dataclass
import logging
import traceback

import numpy as np
import pandas as pd
from scipy.special import gammaln, xlog1py, xlogy

from modules.errors import DataError, DomainError, GuardError
from modules.estimate import summarize
from modules.net_benefit import ThetaTriplet, check_threshold, net_benefits
from modules.random_streams import MASK64, RandomStream, run_blocks
from modules.voi_betabin import simulate_future_counts


ENGINE = 'generic'

DRAW_COLUMNS = ('theta_p', 'theta_se', 'theta_sp')

# Effective sample size below this fraction of M flags weight degeneracy.
UNDERFLOW_ESS_FRACTION = 0.01

# Stream reserved for shuffling the truth order.
SHUFFLE_STREAM_ID = MASK64


@dataclass(frozen=True, eq=False)
class PosteriorDraws:
    """M draws of theta from the current-information distribution."""

    prevalence: np.ndarray
    sensitivity: np.ndarray
    specificity: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(v, dtype=float)) for v in
                  (self.prevalence, self.sensitivity, self.specificity)]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
            raise DomainError('Draw columns must be 1-d and of equal length')
        if arrays[0].size < 2:
            raise DomainError(f'At least 2 draws are needed ({arrays[0].size})')
        # validates the [0, 1] ranges
        ThetaTriplet(*arrays)
        for name, arr in zip(('prevalence', 'sensitivity', 'specificity'), arrays):
            object.__setattr__(self, name, arr)

    @property
    def M(self) -> int:
        return int(self.prevalence.size)

    @property
    def theta(self) -> ThetaTriplet:
        return ThetaTriplet(self.prevalence, self.sensitivity, self.specificity)

    def take(self, idx) -> ThetaTriplet:
        return ThetaTriplet(self.prevalence[idx], self.sensitivity[idx], self.specificity[idx])

    @classmethod
    def from_beta_priors(cls, priors, M: int, stream):
        """M independent draws from a BetaPriorSet."""
        theta = priors.sample(stream, size=M)
        return cls(theta.prevalence, theta.sensitivity, theta.specificity)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame):
        return cls(*(frame[c].to_numpy(dtype=float) for c in DRAW_COLUMNS))

    def __repr__(self) -> str:
        return f'PosteriorDraws(M={self.M})'


@dataclass(frozen=True)
class WeightDiagnostics:
    effective_sample_size: float
    min_log_weight: float
    max_log_weight: float
    underflow_flag: bool


def read_draws_csv(path):
    """Read a draws file with columns theta_p, theta_se, theta_sp and an optional z.

    Returns:
        dict: {z: PosteriorDraws}, with the single key None when there is no z column.
    """
    try:
        frame = pd.read_csv(path)
    except OSError:
        logging.error('Fails to read draws file (%s)', traceback.format_exc())
        raise DataError(f'can not read draws file ({path})')
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError(f'malformed draws file {path} ({e})')

    missing = [c for c in DRAW_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f'missing column(s): {", ".join(missing)}', line=1)
    try:
        frame = frame.astype({c: float for c in DRAW_COLUMNS})
        if 'z' not in frame.columns:
            return {None: PosteriorDraws.from_frame(frame)}
        return {float(z): PosteriorDraws.from_frame(group) for z, group in frame.groupby('z', sort=True)}
    except (ValueError, DomainError) as e:
        raise DataError(f'invalid draws in {path} ({e})')


def draws_to_frame(draws: PosteriorDraws) -> pd.DataFrame:
    return pd.DataFrame(dict(zip(DRAW_COLUMNS, (draws.prevalence, draws.sensitivity, draws.specificity))))


def _weighted_enb(nb: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # Centred on the first draw: identical draws give their NB exactly.
    ref = nb[0]
    return ref + (weights @ (nb - ref)) / weights.sum()


def enb_from_draws(draws: PosteriorDraws, weights, z) -> np.ndarray:
    """Weighted mean NB of each strategy over the draws."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (draws.M,):
        raise DomainError(f'Expected {draws.M} weights, got shape {weights.shape}')
    if np.any(weights < 0.0) or not np.isfinite(weights).all():
        raise DomainError('Weights must be finite and non-negative')
    if not weights.sum() > 0.0:
        raise DomainError('All weights are zero')
    return _weighted_enb(net_benefits(draws.theta, z), weights)


def _binomial_logpmf(k, m, q):
    return gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1) + xlogy(k, q) + xlog1py(m - k, -q)


def reweight(draws: PosteriorDraws, fc):
    """Normalized likelihood weights of the draws given future counts fc.

    Returns:
        tuple: (numpy.ndarray of weights summing to 1, WeightDiagnostics)
    """
    n_neg = fc.n_star - fc.n_pos
    log_w = (_binomial_logpmf(fc.n_pos, fc.n_star, draws.prevalence)
             + _binomial_logpmf(fc.n_tp, fc.n_pos, draws.sensitivity)
             + _binomial_logpmf(fc.n_tn, n_neg, draws.specificity))

    top = float(np.max(log_w))
    if not np.isfinite(top):
        raise GuardError(f'Every draw has zero likelihood under the future sample ({fc!r})')

    w = np.exp(log_w - top)
    w /= w.sum()
    ess = float(1.0 / np.dot(w, w))
    diag = WeightDiagnostics(
        effective_sample_size=ess,
        min_log_weight=float(np.min(log_w)),
        max_log_weight=top,
        underflow_flag=ess < UNDERFLOW_ESS_FRACTION * draws.M)
    return w, diag


class _FutureCountsView:
    """Scalar view of the j-th iteration of batched FutureCounts."""

    __slots__ = ('n_pos', 'n_tp', 'n_tn', 'n_star')

    def __init__(self, fc, j) -> None:
        self.n_pos = int(np.asarray(fc.n_pos)[j])
        self.n_tp = int(np.asarray(fc.n_tp)[j])
        self.n_tn = int(np.asarray(fc.n_tn)[j])
        self.n_star = int(fc.n_star)

    def __repr__(self) -> str:
        return f'FutureCounts(n_pos={self.n_pos}, n_tp={self.n_tp}, n_tn={self.n_tn}, n_star={self.n_star})'


def truth_indices(M: int, n_sims: int, seed: int) -> np.ndarray:
    """Which draw plays the true theta in each iteration.

    Cycles over the draws when n_sims >= M, otherwise takes the first n_sims
    entries of a seeded permutation.
    """
    if n_sims >= M:
        return np.arange(n_sims) % M
    return RandomStream(seed, SHUFFLE_STREAM_ID).generator.permutation(M)[:n_sims]


def run_grid(draws: PosteriorDraws, z, n_stars, n_sims: int, seed: int, workers: int = 1):
    """Generic EVPI/EVSI for several future sample sizes.

    Returns:
        list[VoiEstimate]: one per n_star, in input order.
    """
    z = check_threshold(z)
    n_stars = [int(n) for n in n_stars]
    if n_sims < 2:
        raise DomainError(f'n_sims must be >= 2 ({n_sims})')
    if any(n < 0 for n in n_stars):
        raise DomainError(f'n_star must be >= 0 ({n_stars})')
    logging.debug('generic run: %r z=%s n*=%s n_sims=%d seed=%d', draws, z, n_stars, n_sims, seed)

    nb = net_benefits(draws.theta, z)
    enb = _weighted_enb(nb, np.full(draws.M, 1.0 / draws.M))
    truth = truth_indices(draws.M, n_sims, seed)

    def _task(stream, start, stop):
        idx = truth[start:stop]
        max_true = nb[idx].max(axis=-1)
        theta = draws.take(idx)
        max_sample = []
        underflow = []
        for n_star in n_stars:
            fc = simulate_future_counts(theta, n_star, stream.child(n_star))
            values = np.empty(idx.size)
            flags = 0
            for j in range(idx.size):
                w, diag = reweight(draws, _FutureCountsView(fc, j))
                values[j] = _weighted_enb(nb, w).max()
                flags += diag.underflow_flag
            max_sample.append(values)
            underflow.append(flags)
        return max_true, max_sample, underflow

    blocks = run_blocks(_task, n_sims, seed, workers=workers)
    max_true = np.concatenate([b[0] for b in blocks])

    results = []
    for k, n_star in enumerate(n_stars):
        max_sample = np.concatenate([b[1][k] for b in blocks])
        underflow_fraction = sum(b[2][k] for b in blocks) / n_sims
        if underflow_fraction > 0.0:
            logging.warning('Importance weights degenerate in %.1f%% of iterations (z=%s, n*=%d, M=%d)',
                            100.0 * underflow_fraction, z, n_star, draws.M)
        results.append(summarize(ENGINE, z, n_star, seed, enb, max_true, max_sample,
                                 {'M': draws.M, 'underflow_fraction': underflow_fraction}))
    return results


def run(draws: PosteriorDraws, z, n_star: int, n_sims: int, seed: int, workers: int = 1):
    """Generic EVPI/EVSI for one future sample size."""
    return run_grid(draws, z, [n_star], n_sims, seed, workers=workers)[0]

