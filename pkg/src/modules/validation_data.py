"""Individual-level validation data, confusion counts and decision curves."""
from dataclasses import dataclass, field
import io
import logging
import traceback

import numpy as np
import pandas as pd

from modules.errors import DataError, DomainError
from modules.net_benefit import Strategy, ThetaTriplet, check_threshold, incremental_nb, net_benefits
from modules.random_streams import multinomial_counts, run_blocks


RISK_COLUMN = 'risk'
OUTCOME_COLUMN = 'outcome'

# Upper bound of (replicates x records) cells held in memory per bootstrap block.
BOOTSTRAP_CELLS_PER_BLOCK = 4_000_000


@dataclass(frozen=True, eq=False)
class ValidationSample:
    """Predicted risks and observed binary outcomes, in input order."""

    risk: np.ndarray
    outcome: np.ndarray

    def __post_init__(self):
        risk = np.asarray(self.risk, dtype=float)
        outcome = np.asarray(self.outcome)
        if risk.ndim != 1 or risk.shape != outcome.shape:
            raise DataError('risk and outcome must be 1-d sequences of equal length')
        if risk.size == 0:
            raise DataError('empty sample')
        if not np.all((risk >= 0.0) & (risk <= 1.0)):
            raise DataError('every risk must be in [0, 1]')
        if not np.all((outcome == 0) | (outcome == 1)):
            raise DataError('every outcome must be 0 or 1')

        object.__setattr__(self, 'risk', risk)
        object.__setattr__(self, 'outcome', outcome.astype(np.int8))

    @classmethod
    def from_records(cls, records):
        """Build from an iterable of (risk, outcome) pairs."""
        records = list(records)
        if not records:
            raise DataError('empty sample')
        risk, outcome = zip(*records)
        return cls(np.array(risk, dtype=float), np.array(outcome))

    @property
    def n(self) -> int:
        return int(self.risk.size)

    @property
    def events(self) -> int:
        return int(self.outcome.sum())

    def subsample(self, size: int, stream, replace: bool = False):
        """Random subset of `size` records (with or without replacement)."""
        if size < 1 or (not replace and size > self.n):
            raise DataError(f'Can not draw {size} records from a sample of {self.n}')
        idx = stream.generator.choice(self.n, size=size, replace=replace)
        return ValidationSample(self.risk[idx], self.outcome[idx])

    def __repr__(self) -> str:
        return f'ValidationSample(n={self.n}, events={self.events})'


@dataclass(frozen=True)
class ConfusionCounts:
    """Classification counts at threshold z (positive iff risk >= z).

    The counts may also be equally shaped arrays, one element per bootstrap replicate and threshold.
    """

    n_tp: int
    n_fn: int
    n_tn: int
    n_fp: int
    z: float = None

    def __post_init__(self):
        if min(np.min(c) for c in (self.n_tp, self.n_fn, self.n_tn, self.n_fp)) < 0:
            raise DataError(f'Counts must be non-negative ({self!r})')

    @property
    def n(self) -> int:
        return self.n_tp + self.n_fn + self.n_tn + self.n_fp

    @property
    def events(self) -> int:
        return self.n_tp + self.n_fn

    @property
    def non_events(self) -> int:
        return self.n_tn + self.n_fp


def parse_validation_csv(stream, risk_column=RISK_COLUMN, outcome_column=OUTCOME_COLUMN, delimiter=','):
    """Parse delimiter separated text with a header into a ValidationSample.

    Args:
        stream: binary or text file object.
        risk_column (str, optional): header of the predicted risk column.
        outcome_column (str, optional): header of the 0/1 outcome column.
        delimiter (str, optional): field separator. Defaults to comma.

    Returns:
        ValidationSample: rows in file order.

    Raises:
        DataError: missing columns, empty sample, or the first invalid row (with its line number).
    """
    try:
        frame = pd.read_csv(stream, sep=delimiter, dtype=str, keep_default_na=False,
                            skipinitialspace=True, skip_blank_lines=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise DataError('empty sample')
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f'malformed CSV ({e})')

    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in (risk_column, outcome_column) if c not in frame.columns]
    if missing:
        raise DataError(f'missing column(s): {", ".join(missing)}', line=1)

    # Header is line 1; blank lines stay in the frame until here so that row i is line i + 2.
    lines = np.arange(len(frame)) + 2
    blank = frame.fillna('').replace(r'^\s*$', '', regex=True).eq('').all(axis=1).to_numpy()
    frame, lines = frame[~blank], lines[~blank]
    if frame.empty:
        raise DataError('empty sample')

    risk = pd.to_numeric(frame[risk_column].str.strip(), errors='coerce')
    outcome = pd.to_numeric(frame[outcome_column].str.strip(), errors='coerce')

    bad_risk = np.flatnonzero((risk.isna() | (risk < 0.0) | (risk > 1.0)).to_numpy())
    if bad_risk.size:
        i = int(bad_risk[0])
        raise DataError(f'risk must be a number in [0, 1] ({frame[risk_column].iloc[i]!r})', line=int(lines[i]))

    bad_outcome = np.flatnonzero((outcome.isna() | ~outcome.isin([0, 1])).to_numpy())
    if bad_outcome.size:
        i = int(bad_outcome[0])
        raise DataError(f'outcome must be 0 or 1 ({frame[outcome_column].iloc[i]!r})', line=int(lines[i]))

    sample = ValidationSample(risk.to_numpy(dtype=float), outcome.to_numpy().astype(np.int8))
    logging.debug('Parsed %r', sample)
    return sample


def read_validation_csv(path, **kwargs):
    """Open `path` and parse it with parse_validation_csv."""
    try:
        with open(path, 'rb') as fp:
            return parse_validation_csv(fp, **kwargs)
    except OSError:
        logging.error('Fails to read validation data (%s)', traceback.format_exc())
        raise DataError(f'can not read validation data ({path})')


def sample_to_csv(sample: ValidationSample) -> bytes:
    frame = pd.DataFrame({RISK_COLUMN: sample.risk, OUTCOME_COLUMN: sample.outcome.astype(int)})
    buff = io.StringIO()
    frame.to_csv(buff, index=False, float_format='%.12g', lineterminator='\n')
    return buff.getvalue().encode('utf-8')


def confusion_at_threshold(sample: ValidationSample, z) -> ConfusionCounts:
    """Count TP/FN/TN/FP; a record is positive iff risk >= z."""
    z = check_threshold(z)
    positive = sample.risk >= z
    event = sample.outcome == 1
    return ConfusionCounts(
        n_tp=int(np.count_nonzero(positive & event)),
        n_fn=int(np.count_nonzero(~positive & event)),
        n_tn=int(np.count_nonzero(~positive & ~event)),
        n_fp=int(np.count_nonzero(positive & ~event)),
        z=z)


def theta_hat(counts: ConfusionCounts) -> ThetaTriplet:
    """Sample estimates of prevalence, sensitivity and specificity."""
    if counts.events == 0:
        raise DataError('no events')
    if counts.non_events == 0:
        raise DataError('no non-events')
    return ThetaTriplet(
        prevalence=counts.events / counts.n,
        sensitivity=counts.n_tp / counts.events,
        specificity=counts.n_tn / counts.non_events)


def smoothed_theta(counts: ConfusionCounts) -> ThetaTriplet:
    """Posterior means under flat Beta(1,1) priors; defined for any counts."""
    return ThetaTriplet(
        prevalence=(counts.events + 1) / (counts.n + 2),
        sensitivity=(counts.n_tp + 1) / (counts.events + 2),
        specificity=(counts.n_tn + 1) / (counts.non_events + 2))


def plugin_net_benefits(counts: ConfusionCounts, z):
    """Empirical NB of each strategy, i.e. NB at theta_hat.

    Undefined sensitivity/specificity are taken as 0; their NB terms vanish anyway.
    """
    n = counts.n
    theta = ThetaTriplet(
        prevalence=counts.events / n,
        sensitivity=counts.n_tp / counts.events if counts.events else 0.0,
        specificity=counts.n_tn / counts.non_events if counts.non_events else 0.0)
    return net_benefits(theta, z)


@dataclass
class DecisionCurve:
    """NB of each strategy per threshold with percentile bootstrap CI of the incremental NB."""

    thresholds: np.ndarray
    nb: np.ndarray
    delta_nb: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n_boot: int
    seed: int
    ci_level: float = 0.95
    diagnostics: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'threshold': self.thresholds,
            'nb_none': self.nb[:, Strategy.TREAT_NONE],
            'nb_model': self.nb[:, Strategy.USE_MODEL],
            'nb_all': self.nb[:, Strategy.TREAT_ALL],
            'delta_nb': self.delta_nb,
            'ci_lo': self.ci_lo,
            'ci_hi': self.ci_hi,
        })


def decision_curve(sample: ValidationSample, thresholds, n_boot: int, seed: int,
                   ci_level: float = 0.95, workers: int = 1) -> DecisionCurve:
    """Decision curve with ordinary-bootstrap percentile CIs of the incremental NB.

    Point estimates are the plug-in NBs. Replicates without events (or without
    non-events) use Beta(1,1)-smoothed estimates; their number is reported in
    `diagnostics['smoothed_replicates']`.
    """
    thresholds = np.atleast_1d(check_threshold(np.asarray(thresholds, dtype=float)))
    if n_boot < 2:
        raise DomainError(f'n_boot must be >= 2 ({n_boot})')
    if not 0.0 < ci_level < 1.0:
        raise DomainError(f'ci_level must be in (0, 1) ({ci_level})')

    nb = np.vstack([plugin_net_benefits(confusion_at_threshold(sample, z), z) for z in thresholds])
    delta = nb[:, Strategy.USE_MODEL] - np.maximum(nb[:, Strategy.TREAT_NONE], nb[:, Strategy.TREAT_ALL])

    n = sample.n
    event = (sample.outcome == 1).astype(float)
    positive = sample.risk[:, None] >= thresholds[None, :]
    tp_ind = (positive & (event[:, None] == 1)).astype(float)
    fp_ind = (positive & (event[:, None] == 0)).astype(float)

    def _replicates(stream, start, stop):
        weights = multinomial_counts(n, stream, size=stop - start).astype(float)
        ev = (weights @ event)[:, None]
        tp = weights @ tp_ind
        fp = weights @ fp_ind
        counts = ConfusionCounts(n_tp=tp, n_fn=ev - tp, n_tn=n - ev - fp, n_fp=fp)

        valid = (counts.events > 0) & (counts.non_events > 0)
        smoothed = smoothed_theta(counts)
        with np.errstate(divide='ignore', invalid='ignore'):
            plugin = (counts.events / counts.n, counts.n_tp / counts.events, counts.n_tn / counts.non_events)
        theta = ThetaTriplet(*(np.where(valid, raw, smooth) for raw, smooth in zip(plugin, smoothed.as_tuple())))
        return incremental_nb(theta, thresholds[None, :]), int(np.count_nonzero(~valid[:, 0]))

    block_size = max(1, BOOTSTRAP_CELLS_PER_BLOCK // n)
    results = run_blocks(_replicates, n_boot, seed, workers=workers, block_size=block_size)
    boot_delta = np.vstack([r[0] for r in results])
    smoothed = sum(r[1] for r in results)
    if smoothed:
        logging.warning('%d of %d bootstrap replicates had no events or no non-events; '
                        'Beta(1,1)-smoothed estimates used', smoothed, n_boot)

    tail = (1.0 - ci_level) / 2.0 * 100.0
    ci_lo, ci_hi = np.percentile(boot_delta, [tail, 100.0 - tail], axis=0)

    return DecisionCurve(
        thresholds=thresholds, nb=nb, delta_nb=delta, ci_lo=ci_lo, ci_hi=ci_hi,
        n_boot=n_boot, seed=seed, ci_level=ci_level,
        diagnostics={'smoothed_replicates': smoothed})
