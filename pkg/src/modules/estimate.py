"""VoiEstimate, the result record shared by all EVPI/EVSI engines."""
from dataclasses import dataclass, field
import logging
import math

import numpy as np

from modules.net_benefit import best_strategy


@dataclass
class VoiEstimate:
    """Per-decision EVPI/EVSI at one (z, n_star) with Monte Carlo standard errors.

    `evpi` and `evsi` are clamped at 0; the raw values are kept in diagnostics.
    """

    engine: str
    z: float
    n_star: int
    evpi: float
    evsi: float
    mc_se_evpi: float
    mc_se_evsi: float
    n_sims: int
    seed: int
    enb_current: tuple
    diagnostics: dict = field(default_factory=dict)

    @property
    def combined_se(self) -> float:
        return self.mc_se_evpi + self.mc_se_evsi

    def to_dict(self) -> dict:
        return {
            'engine': self.engine,
            'z': self.z,
            'n_star': self.n_star,
            'evpi': self.evpi,
            'evsi': self.evsi,
            'mc_se_evpi': self.mc_se_evpi,
            'mc_se_evsi': self.mc_se_evsi,
            'n_sims': self.n_sims,
            'seed': self.seed,
            'enb_current': list(self.enb_current),
            'diagnostics': dict(self.diagnostics),
        }


def _mc_se(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(values.size))


def summarize(engine, z, n_star, seed, enb_current, max_true, max_sample, diagnostics=None) -> VoiEstimate:
    """Turn per-iteration maxima into a VoiEstimate.

    Args:
        engine (str): engine name, reported as is.
        z (float): threshold.
        n_star (int): future sample size.
        seed (int): master seed of the run.
        enb_current (Sequence[float]): ENB of each strategy under current information.
        max_true (numpy.ndarray): per-iteration max NB at the true theta.
        max_sample (numpy.ndarray): per-iteration max ENB after the simulated future sample.
        diagnostics (dict, optional): engine specific entries, merged into the result.

    Returns:
        VoiEstimate:
    """
    enb_current = tuple(float(v) for v in enb_current)
    enb_max = enb_current[best_strategy(enb_current)]

    # Averaging differences (not differences of averages) keeps EVSI exactly 0
    # when every iteration reproduces the current decision.
    evpi_raw = float(np.mean(max_true - enb_max))
    evsi_raw = float(np.mean(max_sample - enb_max))
    se_evpi = _mc_se(max_true)
    se_evsi = _mc_se(max_sample)

    info = dict(diagnostics or {})
    info.update({
        'evpi_raw': evpi_raw,
        'evsi_raw': evsi_raw,
        'enb_perfect': float(np.mean(max_true)),
        'enb_sample': float(np.mean(max_sample)),
        'best_current': int(best_strategy(enb_current)),
        'clamped': evpi_raw < 0.0 or evsi_raw < 0.0,
    })
    if info['clamped']:
        logging.info('Negative raw VoI clamped to 0 (z=%s, n*=%s, evpi=%g, evsi=%g)',
                     z, n_star, evpi_raw, evsi_raw)
    if evsi_raw > evpi_raw + 3.0 * (se_evpi + se_evsi):
        info['evsi_exceeds_evpi'] = True
        logging.warning('EVSI exceeds EVPI beyond 3 standard errors (z=%s, n*=%s)', z, n_star)

    return VoiEstimate(
        engine=engine, z=float(z), n_star=int(n_star),
        evpi=max(evpi_raw, 0.0), evsi=max(evsi_raw, 0.0),
        mc_se_evpi=se_evpi, mc_se_evsi=se_evsi,
        n_sims=int(max_true.size), seed=int(seed),
        enb_current=enb_current, diagnostics=info)
