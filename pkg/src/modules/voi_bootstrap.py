"""EVPI and EVSI by two-level resampling of individual-level data.

Outer level: a bootstrap draw F of the validation sample stands for the
population that generated it. Inner level: a future sample of n* records is
drawn from F, pooled with the original data, and the decision is re-taken.
"""
from enum import Enum
import logging

import numpy as np

from modules.errors import DataError, DomainError
from modules.estimate import summarize
from modules.net_benefit import ThetaTriplet, check_threshold, net_benefits
from modules.random_streams import dirichlet_weights, multinomial_weights, run_blocks, sample_multinomial
from modules.validation_data import confusion_at_threshold, plugin_net_benefits


ENGINE = 'bootstrap'

# Upper bound of (iterations x records) weights held in memory per block.
WEIGHT_CELLS_PER_BLOCK = 4_000_000


class BootstrapKind(Enum):
    BAYESIAN = 'bayesian'
    ORDINARY = 'ordinary'


class EnbCurrentMode(Enum):
    """How ENB under current information is evaluated."""

    # Mean of the bootstrap NBs (consistent with the other terms; avoids negative VoI)
    BOOTSTRAP = 'bootstrap'
    # Plug-in NBs of the original sample
    SAMPLE = 'sample'


def _category_indicators(sample, z):
    """n x 4 one-hot matrix of (tp, fn, tn, fp) membership at threshold z."""
    positive = sample.risk >= z
    event = sample.outcome == 1
    return np.column_stack([positive & event, ~positive & event, ~positive & ~event, positive & ~event]).astype(float)


def weighted_theta(mass):
    """Theta from category masses (..., 4) ordered tp, fn, tn, fp.

    A mass without events (or non-events) gets sensitivity (specificity) 0;
    the corresponding NB term is 0 whatever the value.

    Returns:
        tuple: (ThetaTriplet, boolean array flagging degenerate rows)
    """
    tp, fn, tn, fp = (mass[..., k] for k in range(4))
    ev = tp + fn
    non_ev = tn + fp
    degenerate = (ev <= 0.0) | (non_ev <= 0.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        se = np.where(ev > 0.0, tp / ev, 0.0)
        sp = np.where(non_ev > 0.0, tn / non_ev, 0.0)
    prevalence = np.clip(ev / (ev + non_ev), 0.0, 1.0)
    return ThetaTriplet(prevalence, se, sp), degenerate


def run_grid(sample, z, n_stars, n_sims: int, seed: int, kind=BootstrapKind.BAYESIAN,
             enb_current=EnbCurrentMode.BOOTSTRAP, workers: int = 1):
    """Bootstrap EVPI/EVSI for several future sample sizes sharing the outer draws.

    Args:
        sample (ValidationSample): current validation data.
        z (float): threshold.
        n_stars (Sequence[int]): future sample sizes.
        n_sims (int): number of outer bootstrap draws.
        seed (int): master seed.
        kind (BootstrapKind, optional): Bayesian (Dirichlet weights) or ordinary (multinomial weights).
        enb_current (EnbCurrentMode, optional): how ENB under current information is evaluated.
        workers (int, optional): worker threads.

    Returns:
        list[VoiEstimate]: one per n_star, in input order.
    """
    z = check_threshold(z)
    kind = BootstrapKind(kind)
    enb_current = EnbCurrentMode(enb_current)
    n_stars = [int(n) for n in n_stars]
    if n_sims < 2:
        raise DomainError(f'n_sims must be >= 2 ({n_sims})')
    if any(n < 0 for n in n_stars):
        raise DomainError(f'n_star must be >= 0 ({n_stars})')

    counts = confusion_at_threshold(sample, z)
    if counts.events == 0:
        raise DataError('no events: sensitivity is undefined under every resample')
    if counts.non_events == 0:
        raise DataError('no non-events: specificity is undefined under every resample')

    draw_weights = dirichlet_weights if kind is BootstrapKind.BAYESIAN else multinomial_weights
    indicators = _category_indicators(sample, z)
    observed = np.array([counts.n_tp, counts.n_fn, counts.n_tn, counts.n_fp], dtype=float)
    logging.debug('bootstrap run: %r z=%s n*=%s n_sims=%d kind=%s seed=%d',
                  sample, z, n_stars, n_sims, kind.value, seed)

    def _task(stream, start, stop):
        mass = draw_weights(sample.n, stream, size=stop - start) @ indicators
        theta, degenerate = weighted_theta(mass)
        nb_true = net_benefits(theta, z)

        # Drawing n* records with probabilities given by F only matters through
        # the categories of the drawn records, so the categories are drawn directly.
        probs = mass / mass.sum(axis=-1, keepdims=True)
        max_pooled = []
        for n_star in n_stars:
            future = sample_multinomial(n_star, probs, stream.child(n_star))
            pooled, _ = weighted_theta(observed + future)
            max_pooled.append(net_benefits(pooled, z).max(axis=-1))
        return nb_true, max_pooled, int(np.count_nonzero(degenerate))

    block_size = max(1, WEIGHT_CELLS_PER_BLOCK // sample.n)
    blocks = run_blocks(_task, n_sims, seed, workers=workers, block_size=block_size)
    nb_true = np.vstack([b[0] for b in blocks])
    degenerate = sum(b[2] for b in blocks)
    if degenerate:
        logging.warning('%d of %d bootstrap draws had no weighted events or non-events', degenerate, n_sims)

    if enb_current is EnbCurrentMode.BOOTSTRAP:
        enb = nb_true.mean(axis=0)
    else:
        enb = plugin_net_benefits(counts, z)

    diagnostics = {
        'kind': kind.value,
        'enb_current_mode': enb_current.value,
        'degenerate_replicates': degenerate,
        'enb_current_sample': [float(v) for v in plugin_net_benefits(counts, z)],
    }
    max_true = nb_true.max(axis=-1)
    results = []
    for k, n_star in enumerate(n_stars):
        max_pooled = np.concatenate([b[1][k] for b in blocks])
        results.append(summarize(ENGINE, z, n_star, seed, enb, max_true, max_pooled, diagnostics))
    return results


def run(sample, z, n_star: int, n_sims: int, seed: int, kind=BootstrapKind.BAYESIAN,
        enb_current=EnbCurrentMode.BOOTSTRAP, workers: int = 1):
    """Bootstrap EVPI/EVSI for one future sample size."""
    return run_grid(sample, z, [n_star], n_sims, seed, kind=kind, enb_current=enb_current, workers=workers)[0]
