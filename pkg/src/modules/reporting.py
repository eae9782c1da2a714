"""Population scaling of per-decision VoI and serialization of results."""
from dataclasses import dataclass, field
import io
import json
import logging
import os
import sys
import tempfile
import traceback

import pandas as pd

from modules.errors import DataError, DomainError
from modules.net_benefit import check_threshold


RESULT_COLUMNS = ('z', 'n_star', 'evpi', 'evsi', 'mc_se_evpi', 'mc_se_evsi',
                  'tp_units', 'fp_units', 'engine', 'seed', 'n_sims')

# Appended after RESULT_COLUMNS.
EVPI_SCALE_COLUMNS = ('evpi_tp_units', 'evpi_fp_units')

CURVE_COLUMNS = ('threshold', 'nb_none', 'nb_model', 'nb_all', 'delta_nb', 'ci_lo', 'ci_hi')

FORMATS = ('csv', 'json')

# Decimals of the headline EVPI/EVSI values in CSV output.
HEADLINE_DECIMALS = 5


@dataclass(frozen=True)
class PopulationContext:
    """How many times per year the decision is made, and over how many years."""

    decisions_per_year: float
    horizon_years: float = 1.0

    def __post_init__(self):
        if not self.decisions_per_year >= 1:
            raise DomainError(f'decisions_per_year must be >= 1 ({self.decisions_per_year})')
        if not self.horizon_years > 0:
            raise DomainError(f'horizon_years must be > 0 ({self.horizon_years})')

    @property
    def decisions(self) -> float:
        return self.decisions_per_year * self.horizon_years


@dataclass(frozen=True)
class ScaledVoi:
    nb_units_total: float
    true_positive_units: float
    false_positive_units: float


def scale(voi_per_decision, ctx: PopulationContext, z) -> ScaledVoi:
    """Express a per-decision VoI as net true positives (or false positives averted) in the population."""
    z = check_threshold(z)
    if not voi_per_decision >= 0.0:
        raise DomainError(f'VoI to scale must be >= 0 ({voi_per_decision!r})')
    tp = voi_per_decision * ctx.decisions
    return ScaledVoi(nb_units_total=tp, true_positive_units=tp, false_positive_units=tp * (1.0 - z) / z)


@dataclass
class ReportRow:
    """One output line: an estimate, its scaled EVSI/EVPI and extra trailing columns."""

    estimate: object
    scaled_evsi: ScaledVoi = None
    scaled_evpi: ScaledVoi = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        est = self.estimate
        row = {
            'z': est.z,
            'n_star': est.n_star,
            'evpi': est.evpi,
            'evsi': est.evsi,
            'mc_se_evpi': est.mc_se_evpi,
            'mc_se_evsi': est.mc_se_evsi,
            'tp_units': self.scaled_evsi.true_positive_units if self.scaled_evsi else None,
            'fp_units': self.scaled_evsi.false_positive_units if self.scaled_evsi else None,
            'engine': est.engine,
            'seed': est.seed,
            'n_sims': est.n_sims,
            'evpi_tp_units': self.scaled_evpi.true_positive_units if self.scaled_evpi else None,
            'evpi_fp_units': self.scaled_evpi.false_positive_units if self.scaled_evpi else None,
        }
        row.update(self.extra)
        return row


def make_row(estimate, ctx: PopulationContext = None, **extra) -> ReportRow:
    """ReportRow with population scaling when a context is given."""
    if ctx is None:
        return ReportRow(estimate, extra=extra)
    return ReportRow(estimate,
                     scaled_evsi=scale(estimate.evsi, ctx, estimate.z),
                     scaled_evpi=scale(estimate.evpi, ctx, estimate.z),
                     extra=extra)


def _check_format(fmt):
    if fmt not in FORMATS:
        raise DomainError(f'Unknown output format {fmt!r} (expected one of {FORMATS})')


def _columns(rows):
    extra = []
    for row in rows:
        extra.extend(k for k in row.extra if k not in extra)
    return list(RESULT_COLUMNS) + list(EVPI_SCALE_COLUMNS) + extra


def emit(rows, fmt: str = 'csv') -> bytes:
    """Serialize ReportRows.

    CSV rounds EVPI/EVSI to 5 decimals and population units to integers;
    JSON keeps full precision.
    """
    _check_format(fmt)
    rows = list(rows)
    columns = _columns(rows)
    records = [row.to_dict() for row in rows]

    if fmt == 'json':
        return (json.dumps(records, indent=2) + '\n').encode('utf-8')

    frame = pd.DataFrame.from_records(records, columns=columns)
    if records:
        frame = frame.round({'evpi': HEADLINE_DECIMALS, 'evsi': HEADLINE_DECIMALS})
        for col in ('tp_units', 'fp_units') + EVPI_SCALE_COLUMNS:
            frame[col] = pd.to_numeric(frame[col]).round().astype('Int64')
    buff = io.StringIO()
    frame.to_csv(buff, index=False, lineterminator='\n')
    return buff.getvalue().encode('utf-8')


def parse_results(data: bytes, fmt: str = 'csv') -> list:
    """Read back what emit() wrote, as a list of dicts."""
    _check_format(fmt)
    if fmt == 'json':
        return json.loads(data.decode('utf-8'))
    try:
        frame = pd.read_csv(io.BytesIO(data))
    except pd.errors.EmptyDataError:
        raise DataError('empty result file')
    frame = frame.astype(object).where(frame.notna(), None)
    return frame.to_dict(orient='records')


def emit_decision_curve(curve, fmt: str = 'csv') -> bytes:
    """Serialize a DecisionCurve (full precision)."""
    _check_format(fmt)
    frame = curve.to_frame()
    if fmt == 'json':
        doc = {
            'n_boot': curve.n_boot,
            'seed': curve.seed,
            'ci_level': curve.ci_level,
            'diagnostics': curve.diagnostics,
            'rows': frame.to_dict(orient='records'),
        }
        return (json.dumps(doc, indent=2) + '\n').encode('utf-8')
    buff = io.StringIO()
    frame.to_csv(buff, index=False, lineterminator='\n')
    return buff.getvalue().encode('utf-8')


def emit_report(lines) -> bytes:
    """Plain text report, one line per entry."""
    return ''.join(f'{line}\n' for line in lines).encode('utf-8')


def write_atomic(path, data: bytes):
    """Write data to path through a temporary file and a rename; '-' or None means stdout."""
    if path in (None, '-'):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        return

    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'wb') as fp:
            fp.write(data)
        os.replace(tmp_path, path)
    except:
        logging.error('Fails to write output file %s (%s)', path, traceback.format_exc())
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logging.info('Wrote %s (%d bytes)', path, len(data))
