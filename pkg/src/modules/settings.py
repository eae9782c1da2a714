"""Settings file, built-in defaults and the resolved RunConfig of one command.

Precedence, highest first: command line flag, NBVOI_SEED (seed only),
settings file, built-in defaults.
"""
from configparser import ConfigParser, Error as ConfigParserError, ExtendedInterpolation
from dataclasses import dataclass
import logging
import math
import os
import traceback

from modules.errors import ConfigError, VoiError
from modules.random_streams import DEFAULT_SEED
from modules.reporting import FORMATS, PopulationContext
from modules.voi_bootstrap import BootstrapKind, EnbCurrentMode


CONF_FILE = 'settings.cfg'

ENV_SEED = 'NBVOI_SEED'

ENGINES = ('betabin', 'bootstrap', 'generic')

BASE_PRIORS = ('flat', 'vague')

BOOTSTRAP_KINDS = tuple(k.value for k in BootstrapKind)

ENB_CURRENT_MODES = tuple(m.value for m in EnbCurrentMode)

DEFAULTS = {
    'Logging': {
        'format': '%(asctime)s %(levelname)s %(message)s',
        'datefmt': '%Y-%m-%d %H:%M:%S',
        'loglevel': 'WARNING',
    },
    'Voi': {
        'engine': 'betabin',
        'thresholds': '0.01:0.10:0.01',
        'n_star': '0,125,250,500,1000,2000,4000,8000',
        'n_sims_betabin': '1000000',
        'n_sims_bootstrap': '10000',
        'n_sims_generic': '10000',
        'seed': str(DEFAULT_SEED),
        'workers': '1',
        'format': 'csv',
        'base_prior': 'vague',
        'bootstrap_kind': 'bayesian',
        'enb_current': 'bootstrap',
        'generic_draws': '50000',
        'risk_column': 'risk',
        'outcome_column': 'outcome',
    },
    'Dca': {
        'thresholds': '${Voi:thresholds}',
        'n_boot': '10000',
        'ci_level': '0.95',
    },
    'Population': {
        'decisions_per_year': '',
        'horizon_years': '1',
    },
    'Sweep': {
        'sizes': '500,1000,2000,4000,8000',
        'repetitions': '100',
        'thresholds': '0.02',
        'n_star': '${Voi:n_star}',
        'n_sims': '10000',
        'replace': 'no',
    },
    'Synth': {
        'n': '23034',
        'prevalence': '0.0679',
        'slope': '1.1',
    },
    'Oracle': {
        'thresholds': '0.01,0.02,0.5',
        'n_star': '0,2,4,6',
        'n_sims': '100000',
        'draws': '1000',
    },
}


def load_config(path=None) -> ConfigParser:
    """Defaults overlaid with the settings file (a missing file leaves the defaults)."""
    conf = ConfigParser(interpolation=ExtendedInterpolation())
    conf.read_dict(DEFAULTS)
    path = path or CONF_FILE
    try:
        read = conf.read(path)
    except (ConfigParserError, UnicodeDecodeError):
        logging.error('Fails to read settings (%s)', traceback.format_exc())
        raise ConfigError(f'malformed settings file ({path})')
    if not read:
        logging.info('No settings file at %s, built-in defaults apply', path)
    return conf


def init_logger(log_conf):
    logging.basicConfig(
        format=log_conf['format'],
        datefmt=log_conf['datefmt'],
        level=log_conf['loglevel']
    )


def parse_grid(text, cast=float) -> tuple:
    """Parse "a,b,c" or an inclusive range "start:stop:step"."""
    text = str(text).strip()
    if not text:
        raise ConfigError('empty grid')
    try:
        if ':' in text:
            start, stop, step = (cast(v) for v in text.split(':'))
            if not step > 0 or stop < start:
                raise ConfigError(f'invalid range {text!r}')
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            if cast is int:
                return tuple(start + i * step for i in range(count))
            return tuple(round(start + i * step, 12) for i in range(count))
        return tuple(cast(v) for v in text.split(',') if v.strip())
    except ValueError:
        raise ConfigError(f'invalid grid {text!r}')


def parse_population(text):
    """ "N" or "N:YEARS" to a PopulationContext; empty gives None."""
    text = (text or '').strip()
    if not text:
        return None
    try:
        parts = [float(v) for v in text.split(':')]
        return PopulationContext(*parts[:2])
    except (TypeError, ValueError) as e:
        raise ConfigError(f'invalid population {text!r} ({e})')


@dataclass(frozen=True)
class RunConfig:
    """Everything one command needs, resolved from flags, environment and settings."""

    command: str
    thresholds: tuple
    n_stars: tuple
    n_sims: int
    seed: int
    engine: str = 'betabin'
    engine_explicit: bool = False
    input: str = None
    priors: str = None
    draws: str = None
    export_draws: str = None
    population: PopulationContext = None
    out: str = None
    fmt: str = 'csv'
    workers: int = 1
    n_boot: int = 10000
    ci_level: float = 0.95
    risk_column: str = 'risk'
    outcome_column: str = 'outcome'
    base_prior: str = 'vague'
    bootstrap_kind: str = 'bayesian'
    enb_current: str = 'bootstrap'
    generic_draws: int = 50000
    sizes: tuple = ()
    repetitions: int = 1
    replace: bool = False
    n: int = 23034
    prevalence: float = 0.0679
    slope: float = 1.1

    def __post_init__(self):
        if not self.thresholds:
            raise ConfigError('threshold grid is empty')
        if not all(0.0 < z < 1.0 for z in self.thresholds):
            raise ConfigError(f'thresholds must be inside (0, 1) ({self.thresholds})')
        if not self.n_stars:
            raise ConfigError('n_star grid is empty')
        if any(n < 0 for n in self.n_stars):
            raise ConfigError(f'n_star values must be >= 0 ({self.n_stars})')
        if self.n_sims < 2:
            raise ConfigError(f'n_sims must be >= 2 ({self.n_sims})')
        if self.seed < 0:
            raise ConfigError(f'seed must be >= 0 ({self.seed})')
        if self.workers < 1:
            raise ConfigError(f'workers must be >= 1 ({self.workers})')
        if self.engine not in ENGINES:
            raise ConfigError(f'unknown engine {self.engine!r}')
        if self.fmt not in FORMATS:
            raise ConfigError(f'unknown format {self.fmt!r}')
        if self.base_prior not in BASE_PRIORS:
            raise ConfigError(f'unknown base prior {self.base_prior!r}')
        if self.bootstrap_kind not in BOOTSTRAP_KINDS:
            raise ConfigError(f'unknown bootstrap kind {self.bootstrap_kind!r}')
        if self.enb_current not in ENB_CURRENT_MODES:
            raise ConfigError(f'unknown enb_current mode {self.enb_current!r}')
        if self.repetitions < 1:
            raise ConfigError(f'repetitions must be >= 1 ({self.repetitions})')


def _pick(value, fallback):
    return fallback if value is None else value


def _resolve_seed(args, conf, environ):
    if getattr(args, 'seed', None) is not None:
        return args.seed
    if environ.get(ENV_SEED):
        try:
            return int(environ[ENV_SEED])
        except ValueError:
            raise ConfigError(f'{ENV_SEED} must be an integer ({environ[ENV_SEED]!r})')
    return conf.getint('Voi', 'seed')


def build_run_config(args, conf: ConfigParser, environ=None) -> RunConfig:
    """Merge parsed command line arguments over the settings.

    Args:
        args (argparse.Namespace): flags left unset are None.
        conf (ConfigParser): from load_config().
        environ (Mapping, optional): environment, os.environ by default.

    Returns:
        RunConfig:
    """
    environ = os.environ if environ is None else environ
    command = args.command

    def arg(name):
        return getattr(args, name, None)

    section = {'dca': 'Dca', 'sweep': 'Sweep', 'oracle-check': 'Oracle'}.get(command, 'Voi')
    engine = _pick(arg('engine'), conf.get('Voi', 'engine'))

    try:
        thresholds = arg('thresholds') or conf.get(section, 'thresholds', fallback=conf.get('Voi', 'thresholds'))
        n_star = arg('n_star') or conf.get(section, 'n_star', fallback=conf.get('Voi', 'n_star'))
        if command in ('sweep', 'oracle-check'):
            n_sims = conf.getint(section, 'n_sims')
        else:
            n_sims = conf.getint('Voi', f'n_sims_{engine}', fallback=2)

        population = arg('population')
        if population is None:
            population = conf.get('Population', 'decisions_per_year')
            if population:
                population = f"{population}:{conf.get('Population', 'horizon_years')}"

        return RunConfig(
            command=command,
            thresholds=parse_grid(thresholds, float),
            n_stars=parse_grid(n_star, int),
            n_sims=_pick(arg('n_sims'), n_sims),
            seed=_resolve_seed(args, conf, environ),
            engine=engine,
            engine_explicit=arg('engine') is not None,
            input=arg('input'),
            priors=arg('priors'),
            draws=arg('draws'),
            export_draws=arg('export_draws'),
            population=parse_population(population),
            out=arg('out'),
            fmt=_pick(arg('format'), conf.get('Voi', 'format')),
            workers=_pick(arg('workers'), conf.getint('Voi', 'workers')),
            n_boot=_pick(arg('n_boot'), conf.getint('Dca', 'n_boot')),
            ci_level=_pick(arg('ci_level'), conf.getfloat('Dca', 'ci_level')),
            risk_column=_pick(arg('risk_column'), conf.get('Voi', 'risk_column')),
            outcome_column=_pick(arg('outcome_column'), conf.get('Voi', 'outcome_column')),
            base_prior=conf.get('Voi', 'base_prior'),
            bootstrap_kind=_pick(arg('bootstrap_kind'), conf.get('Voi', 'bootstrap_kind')),
            enb_current=_pick(arg('enb_current'), conf.get('Voi', 'enb_current')),
            generic_draws=conf.getint('Oracle' if command == 'oracle-check' else 'Voi',
                                      'draws' if command == 'oracle-check' else 'generic_draws'),
            sizes=parse_grid(arg('sizes') or conf.get('Sweep', 'sizes'), int),
            repetitions=_pick(arg('repetitions'), conf.getint('Sweep', 'repetitions')),
            replace=bool(arg('replace')) or conf.getboolean('Sweep', 'replace'),
            n=_pick(arg('n'), conf.getint('Synth', 'n')),
            prevalence=_pick(arg('prevalence'), conf.getfloat('Synth', 'prevalence')),
            slope=_pick(arg('slope'), conf.getfloat('Synth', 'slope')),
        )
    except ConfigError:
        raise
    except (ValueError, ConfigParserError, VoiError) as e:
        raise ConfigError(f'invalid setting ({e})')
