"""Value of information of a validation study for a binary risk model.

Sub-commands:
    dca           decision curve with bootstrap CIs of the incremental NB
    voi           EVPI/EVSI over a (threshold, future sample size) grid
    sweep         EVSI curves for several current sample sizes
    synth         synthetic validation sample
    oracle-check  Monte Carlo engines against exact enumeration

Usage:
    1. Copy 'settings.cfg.sample' to 'settings.cfg' (optional, defaults apply without it).
    2. Move to the 'src' directory.
    3. Run '{your python interpreter} ./bin/nbvoi.py voi --input sample.csv --out voi.csv'

Exit codes: 0 success, 1 usage or settings error, 2 invalid data, 3 numerical guard.
"""
import argparse
import logging
import os
import sys
import traceback

sys.path.insert(0, os.path.abspath('.'))

from modules.commands import COMMANDS
from modules.errors import ConfigError, VoiError
from modules.settings import CONF_FILE, ENGINES, build_run_config, init_logger, load_config


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.EXIT_CODE, f'{self.prog}: error: {message}\n')


def make_parser():
    common = _Parser(add_help=False)
    common.add_argument('--config', default=CONF_FILE, help='settings file (default: %(default)s)')
    common.add_argument('--out', help='output file (default: stdout)')
    common.add_argument('--format', choices=('csv', 'json'))
    common.add_argument('--seed', type=int)
    common.add_argument('--workers', type=int, help='worker threads of the Monte Carlo engines')
    common.add_argument('--input', help='validation sample CSV (risk, outcome)')
    common.add_argument('--risk-column', dest='risk_column')
    common.add_argument('--outcome-column', dest='outcome_column')
    common.add_argument('--thresholds', help='"0.01,0.02" or "0.01:0.10:0.01"')

    engine = _Parser(add_help=False)
    engine.add_argument('--engine', choices=ENGINES)
    engine.add_argument('--n-star', dest='n_star', help='future sample sizes, "0,125,250" or "0:1000:250"')
    engine.add_argument('--n-sims', dest='n_sims', type=int)
    engine.add_argument('--priors', help='priors JSON')
    engine.add_argument('--draws', help='posterior draws CSV (theta_p, theta_se, theta_sp[, z])')
    engine.add_argument('--population', help='decisions per year, optionally ":years"')
    engine.add_argument('--bootstrap-kind', dest='bootstrap_kind', choices=('bayesian', 'ordinary'))
    engine.add_argument('--enb-current', dest='enb_current', choices=('bootstrap', 'sample'))

    synth = _Parser(add_help=False)
    synth.add_argument('--n', type=int, help='number of records')
    synth.add_argument('--prevalence', type=float)
    synth.add_argument('--slope', type=float, help='SD of the linear predictor, 0 for an uninformative model')

    parser = _Parser(prog='nbvoi', description=__doc__.split('\n')[0])
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    dca = sub.add_parser('dca', parents=[common], help='decision curve')
    dca.add_argument('--n-boot', dest='n_boot', type=int)
    dca.add_argument('--ci-level', dest='ci_level', type=float)

    voi = sub.add_parser('voi', parents=[common, engine], help='EVPI and EVSI')
    voi.add_argument('--export-draws', dest='export_draws', help='also write the draws of the Beta priors to this CSV')

    sweep = sub.add_parser('sweep', parents=[common, engine, synth], help='EVSI by current sample size')
    sweep.add_argument('--sizes', help='current sample sizes')
    sweep.add_argument('--repetitions', type=int)
    sweep.add_argument('--replace', action='store_true', help='subsample with replacement')

    sub.add_parser('synth', parents=[common, synth], help='synthetic validation sample')
    sub.add_parser('oracle-check', parents=[common, engine], help='compare engines with exact enumeration')
    return parser


def main(argv=None, environ=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        conf = load_config(args.config)
        init_logger(conf['Logging'])
        config = build_run_config(args, conf, environ)
        logging.debug('Run %r', config)
        return COMMANDS[config.command](config)
    except VoiError as e:
        logging.debug('Fails to run %s (%s)', args.command, traceback.format_exc())
        print(f'nbvoi {args.command}: {e}', file=sys.stderr)
        return e.EXIT_CODE


if __name__ == '__main__':
    sys.exit(main())
