"""Sub-commands of the nbvoi script.

Each command takes a RunConfig, writes its output atomically and returns the
process exit code. Errors are raised as VoiError subclasses; the script maps
them to exit codes.
"""
from contextlib import contextmanager
from dataclasses import dataclass
import json
import logging
import math
import os
import traceback

import numpy as np
import pandas as pd

from modules import voi_betabin, voi_bootstrap, voi_generic
from modules.errors import ConfigError, DataError, GuardError, VoiError
from modules.estimate import VoiEstimate
from modules.oracle import DiscretePrior, evpi_exact, evsi_exact, evsi_exact_beta
from modules.random_streams import MASK64, RandomStream
from modules.reporting import emit, emit_decision_curve, emit_report, make_row, write_atomic
from modules.synthetic import synthesize_sample
from modules.validation_data import (confusion_at_threshold, decision_curve, read_validation_csv,
                                     sample_to_csv)
from modules.voi_betabin import BetaPriorSet, priors_from_sample
from modules.voi_generic import PosteriorDraws, draws_to_frame, read_draws_csv


# Stream ids kept apart from the Monte Carlo block ids.
DRAWS_STREAM_ID = MASK64 - 1
SWEEP_STREAM_ID = MASK64 - 2

# Deviation, in Monte Carlo standard errors, above which an oracle check fails.
ORACLE_TOLERANCE_SE = 3.0

# Absolute tolerance of an oracle check whose standard error is 0.
ORACLE_EXACT_TOLERANCE = 1e-12


@contextmanager
def _grid_point(**coords):
    """Prefix the message of errors raised inside the block with the grid coordinates.

    The exception object itself is re-raised, so its type and attributes (such as
    DataError.line) are kept.
    """
    try:
        yield
    except VoiError as e:
        where = ', '.join(f'{k}={v}' for k, v in coords.items())
        e.args = (f'{where}: {e}',)
        raise


def _read_json(path):
    try:
        with open(path, 'r') as fp:
            return json.load(fp)
    except OSError:
        logging.error('Fails to read %s (%s)', path, traceback.format_exc())
        raise DataError(f'can not read {path}')
    except json.JSONDecodeError as e:
        raise DataError(f'malformed JSON in {path} ({e.msg})', line=e.lineno)


def _load_sample(config, path=None):
    path = path or config.input
    if not path:
        raise ConfigError(f'{config.command} needs --input')
    return read_validation_csv(path, risk_column=config.risk_column, outcome_column=config.outcome_column)


def _base_prior(config) -> BetaPriorSet:
    return BetaPriorSet.flat() if config.base_prior == 'flat' else BetaPriorSet.vague()


def _sample_priors(sample, base):
    """Callable z -> BetaPriorSet updating `base` with the sample counts at z."""
    def _at(z):
        return priors_from_sample(confusion_at_threshold(sample, z), base)
    return _at


def _priors_from_json(config, data: dict, source: str):
    """Priors file contents to a callable z -> BetaPriorSet."""
    if 'atoms' in data:
        raise ConfigError(f'{source} holds a discrete prior; only oracle-check accepts it')
    if 'dataset' in data:
        path = data['dataset']
        if not os.path.isabs(path):
            path = os.path.join(os.path.dirname(os.path.abspath(source)), path)
        sample = _load_sample(config, path)
        base = BetaPriorSet.from_dict(data['base']) if 'base' in data else _base_prior(config)
        return _sample_priors(sample, base)

    priors = BetaPriorSet.from_dict(data)
    return lambda z: priors


def _priors_source(config, sample=None):
    """Callable z -> BetaPriorSet from --priors, or from the validation sample."""
    if config.priors:
        return _priors_from_json(config, _read_json(config.priors), config.priors)
    if sample is not None:
        return _sample_priors(sample, _base_prior(config))
    raise ConfigError('the betabin engine needs --priors or --input')


def _draws_source(config, priors_at):
    """Callable (k, z) -> PosteriorDraws, from --draws or sampled from the Beta priors."""
    if config.draws:
        by_z = read_draws_csv(config.draws)
        if None in by_z:
            if len(config.thresholds) > 1:
                logging.warning('Draws file %s has no z column; the same draws serve every threshold', config.draws)
            return lambda k, z: by_z[None]

        def _lookup(k, z):
            for key, draws in by_z.items():
                if math.isclose(key, z, rel_tol=0.0, abs_tol=1e-9):
                    return draws
            raise DataError(f'no draws for z={z} in {config.draws}')
        return _lookup

    if priors_at is None:
        raise ConfigError('the generic engine needs --draws, --priors or --input')
    stream = RandomStream(config.seed, DRAWS_STREAM_ID)
    return lambda k, z: PosteriorDraws.from_beta_priors(priors_at(z), config.generic_draws, stream.child(k))


def _run_engine(config, engine, z, n_sims, seed, sample=None, priors=None, draws=None):
    if engine == 'betabin':
        return voi_betabin.run_grid(priors, z, config.n_stars, n_sims, seed, workers=config.workers)
    if engine == 'bootstrap':
        return voi_bootstrap.run_grid(sample, z, config.n_stars, n_sims, seed,
                                      kind=config.bootstrap_kind, enb_current=config.enb_current,
                                      workers=config.workers)
    return voi_generic.run_grid(draws, z, config.n_stars, n_sims, seed, workers=config.workers)


def cmd_dca(config) -> int:
    """Decision curve with bootstrap CIs over the threshold grid."""
    sample = _load_sample(config)
    curve = decision_curve(sample, config.thresholds, config.n_boot, config.seed,
                           ci_level=config.ci_level, workers=config.workers)
    write_atomic(config.out, emit_decision_curve(curve, config.fmt))
    return 0


def cmd_voi(config) -> int:
    """EVPI and EVSI of the selected engine over the (z, n_star) grid."""
    engine = config.engine
    sample = _load_sample(config) if config.input else None
    if engine == 'bootstrap' and sample is None:
        raise ConfigError('the bootstrap engine needs --input')

    priors_at = None
    if engine == 'betabin' or config.export_draws or (engine == 'generic' and not config.draws):
        priors_at = _priors_source(config, sample)
    draws_at = _draws_source(config, priors_at) if engine == 'generic' or config.export_draws else None

    rows = []
    exported = []
    for k, z in enumerate(config.thresholds):
        logging.info('voi: engine=%s z=%s n*=%s n_sims=%d', engine, z, config.n_stars, config.n_sims)
        with _grid_point(z=z):
            priors = priors_at(z) if priors_at else None
            draws = draws_at(k, z) if draws_at else None
            estimates = _run_engine(config, engine, z, config.n_sims, config.seed,
                                    sample=sample, priors=priors, draws=draws)
            rows.extend(make_row(est, config.population) for est in estimates)
            if config.export_draws:
                exported.append(draws_to_frame(draws).assign(z=z))

    if config.export_draws:
        buff = pd.concat(exported, ignore_index=True).to_csv(index=False, float_format='%.17g', lineterminator='\n')
        write_atomic(config.export_draws, buff.encode('utf-8'))
    write_atomic(config.out, emit(rows, config.fmt))
    return 0


def _average(estimates, n_current, seed) -> VoiEstimate:
    """Mean over repetitions; the SE is the between-repetition spread (run SE for a single repetition)."""
    first = estimates[0]
    R = len(estimates)
    evpi = np.array([e.evpi for e in estimates])
    evsi = np.array([e.evsi for e in estimates])
    if R > 1:
        se_evpi = float(np.std(evpi, ddof=1) / math.sqrt(R))
        se_evsi = float(np.std(evsi, ddof=1) / math.sqrt(R))
    else:
        se_evpi, se_evsi = first.mc_se_evpi, first.mc_se_evsi
    return VoiEstimate(
        engine=first.engine, z=first.z, n_star=first.n_star,
        evpi=float(evpi.mean()), evsi=float(evsi.mean()),
        mc_se_evpi=se_evpi, mc_se_evsi=se_evsi,
        n_sims=first.n_sims, seed=seed,
        enb_current=tuple(np.mean([e.enb_current for e in estimates], axis=0).tolist()),
        diagnostics={'n_current': n_current, 'repetitions': R})


def cmd_sweep(config) -> int:
    """EVSI curves for several current sample sizes, averaged over repeated subsamples."""
    engine = config.engine
    if engine == 'generic':
        raise ConfigError('sweep supports the betabin and bootstrap engines')
    if config.input:
        master = _load_sample(config)
    else:
        master = synthesize_sample(config.n, config.prevalence, config.slope, config.seed)

    if not config.replace:
        too_big = [n for n in config.sizes if n > master.n]
        if too_big:
            raise DataError(f'subsample size(s) {too_big} exceed the master sample of {master.n} records')

    base = _base_prior(config)
    # A single current size gives the same columns as the voi command.
    extra_columns = len(config.sizes) > 1
    rows = []
    for n_current in config.sizes:
        per_rep = []
        for r in range(config.repetitions):
            stream = RandomStream(config.seed, SWEEP_STREAM_ID, (n_current, r))
            sub = master.subsample(n_current, stream, replace=config.replace)
            rep_seed = stream.derive_seed()
            grid = []
            for z in config.thresholds:
                with _grid_point(n_current=n_current, repetition=r, z=z):
                    priors = priors_from_sample(confusion_at_threshold(sub, z), base) if engine == 'betabin' else None
                    grid.append(_run_engine(config, engine, z, config.n_sims, rep_seed, sample=sub, priors=priors))
            per_rep.append(grid)
        logging.info('sweep: n=%d done (%d repetitions)', n_current, config.repetitions)

        for i in range(len(config.thresholds)):
            for j in range(len(config.n_stars)):
                est = _average([rep[i][j] for rep in per_rep], n_current, config.seed)
                extra = {'n_current': n_current, 'repetitions': config.repetitions} if extra_columns else {}
                rows.append(make_row(est, config.population, **extra))

    write_atomic(config.out, emit(rows, config.fmt))
    return 0


def cmd_synth(config) -> int:
    """Synthetic validation sample as CSV."""
    sample = synthesize_sample(config.n, config.prevalence, config.slope, config.seed)
    write_atomic(config.out, sample_to_csv(sample))
    return 0


@dataclass(frozen=True)
class OracleCheck:
    """One Monte Carlo value against its exact counterpart."""

    engine: str
    quantity: str
    z: float
    n_star: int
    estimate: float
    exact: float
    se: float

    @property
    def deviation(self) -> float:
        """|estimate - exact| in standard errors."""
        diff = abs(self.estimate - self.exact)
        if self.se > 0.0:
            return diff / self.se
        return 0.0 if diff <= ORACLE_EXACT_TOLERANCE else math.inf

    @property
    def passed(self) -> bool:
        return self.deviation <= ORACLE_TOLERANCE_SE

    def __str__(self) -> str:
        return (f'{self.engine:<9} {self.quantity} z={self.z:g} n*={self.n_star:<4d} '
                f'mc={self.estimate:.6g} exact={self.exact:.6g} se={self.se:.3g} '
                f'dev={self.deviation:.2f} {"ok" if self.passed else "FAIL"}')


def _checks(engine, estimates, exact_evpi, exact_evsi):
    checks = []
    for est in estimates:
        if exact_evpi is not None:
            checks.append(OracleCheck(engine, 'EVPI', est.z, est.n_star,
                                      est.diagnostics.get('evpi_raw', est.evpi), exact_evpi, est.mc_se_evpi))
        # The bootstrap ENB under current information is itself a Monte Carlo average.
        se = est.combined_se if engine == 'bootstrap' else est.mc_se_evsi
        checks.append(OracleCheck(engine, 'EVSI', est.z, est.n_star,
                                  est.diagnostics.get('evsi_raw', est.evsi), exact_evsi[est.n_star], se))
    return checks


def _requested(config, applicable):
    if not config.engine_explicit:
        return applicable
    if config.engine not in applicable:
        raise ConfigError(f'engine {config.engine!r} can not be checked on this input (use one of {applicable})')
    return (config.engine,)


def cmd_oracle_check(config) -> int:
    """Compare Monte Carlo engines with exact enumeration.

    Inputs:
        --priors with "atoms": discrete prior, checked with the generic engine (EVPI and EVSI).
        --priors with Beta parameters: checked with the betabin engine (EVSI).
        --input: epsilon priors from the sample, checked with the bootstrap and betabin engines (EVSI).

    Returns 3 when any deviation exceeds 3 standard errors.
    """
    checks = []
    data = _read_json(config.priors) if config.priors else None
    if data is not None and 'atoms' in data:
        prior = DiscretePrior.from_dict(data)
        engines = _requested(config, ('generic',))
        draws, realized = prior.to_draws(config.generic_draws)
        for z in config.thresholds:
            with _grid_point(z=z):
                exact_evsi = {n: evsi_exact(realized, z, n) for n in config.n_stars}
                exact_evpi = evpi_exact(realized, z)
                for engine in engines:
                    estimates = _run_engine(config, engine, z, config.n_sims, config.seed, draws=draws)
                    checks.extend(_checks(engine, estimates, exact_evpi, exact_evsi))
    else:
        sample = None
        if data is not None:
            priors_at = _priors_from_json(config, data, config.priors)
            engines = _requested(config, ('betabin',))
        else:
            sample = _load_sample(config)
            priors_at = _sample_priors(sample, BetaPriorSet.vague())
            engines = _requested(config, ('bootstrap', 'betabin'))
        for z in config.thresholds:
            with _grid_point(z=z):
                priors = priors_at(z)
                exact_evsi = {n: evsi_exact_beta(priors, z, n) for n in config.n_stars}
                for engine in engines:
                    estimates = _run_engine(config, engine, z, config.n_sims, config.seed,
                                            sample=sample, priors=priors)
                    checks.extend(_checks(engine, estimates, None, exact_evsi))

    failed = [c for c in checks if not c.passed]
    summary = f'{len(checks) - len(failed)} of {len(checks)} checks within {ORACLE_TOLERANCE_SE:g} SE'
    write_atomic(config.out, emit_report([str(c) for c in checks] + [('FAIL: ' if failed else 'PASS: ') + summary]))
    if failed:
        logging.error('Oracle check failed: %s', '; '.join(str(c) for c in failed))
        return GuardError.EXIT_CODE
    return 0


COMMANDS = {
    'dca': cmd_dca,
    'voi': cmd_voi,
    'sweep': cmd_sweep,
    'synth': cmd_synth,
    'oracle-check': cmd_oracle_check,
}
