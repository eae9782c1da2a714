import argparse
import os
import tempfile
import unittest

from tests.context import *
from modules.errors import ConfigError
from modules.settings import ENV_SEED, build_run_config, load_config, parse_grid, parse_population


def _args(command='voi', **kwargs):
    return argparse.Namespace(command=command, **kwargs)


class TestParseGrid(unittest.TestCase):

    @classmethod
    def setUpClass(cls) -> None:
        init_test_logger()
        return super().setUpClass()

    def test_range(self):
        grid = parse_grid('0.01:0.10:0.01')
        self.assertEqual(10, len(grid))
        self.assertEqual(0.01, grid[0])
        self.assertEqual(0.1, grid[-1])
        self.assertEqual((0, 250, 500, 750, 1000), parse_grid('0:1000:250', int))

    def test_list(self):
        self.assertEqual((0.02,), parse_grid('0.02'))
        self.assertEqual((0, 125, 250), parse_grid('0, 125, 250', int))

    def test_invalid(self):
        for text in ('', 'a,b', '0.1:0.01:0.01', '0:10:0', '1:2'):
            with self.subTest(text=text):
                with self.assertRaises(ConfigError):
                    parse_grid(text)

    def test_population(self):
        self.assertIsNone(parse_population(''))
        ctx = parse_population('800000:5')
        self.assertEqual(4000000, ctx.decisions)
        with self.assertRaises(ConfigError):
            parse_population('many')
        with self.assertRaises(ConfigError):
            parse_population('0')


class TestBuildRunConfig(unittest.TestCase):

    @classmethod
    def setUpClass(cls) -> None:
        init_test_logger()
        return super().setUpClass()

    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.missing = os.path.join(self.tmp.name, 'missing.cfg')
        return super().setUp()

    def tearDown(self) -> None:
        self.tmp.cleanup()
        return super().tearDown()

    def test_defaults(self):
        config = build_run_config(_args(), load_config(self.missing), environ={})
        self.assertEqual(20230401, config.seed)
        self.assertEqual('betabin', config.engine)
        self.assertFalse(config.engine_explicit)
        self.assertEqual(1000000, config.n_sims)
        self.assertEqual(10, len(config.thresholds))
        self.assertEqual((0, 125, 250, 500, 1000, 2000, 4000, 8000), config.n_stars)
        self.assertIsNone(config.population)
        self.assertEqual('csv', config.fmt)

    def test_n_sims_per_engine(self):
        conf = load_config(self.missing)
        self.assertEqual(10000, build_run_config(_args(engine='bootstrap'), conf, environ={}).n_sims)
        self.assertEqual(10000, build_run_config(_args(engine='generic'), conf, environ={}).n_sims)
        self.assertEqual(123, build_run_config(_args(engine='generic', n_sims=123), conf, environ={}).n_sims)

    def test_command_sections(self):
        conf = load_config(self.missing)
        sweep = build_run_config(_args('sweep'), conf, environ={})
        self.assertEqual((0.02,), sweep.thresholds)
        self.assertEqual(10000, sweep.n_sims)
        self.assertEqual((500, 1000, 2000, 4000, 8000), sweep.sizes)
        self.assertEqual(100, sweep.repetitions)
        oracle = build_run_config(_args('oracle-check'), conf, environ={})
        self.assertEqual((0, 2, 4, 6), oracle.n_stars)
        self.assertEqual(1000, oracle.generic_draws)
        dca = build_run_config(_args('dca'), conf, environ={})
        self.assertEqual(10000, dca.n_boot)
        self.assertEqual(10, len(dca.thresholds))

    def test_seed_precedence(self):
        path = write_file(self.tmp.name, 'settings.cfg', '[Voi]\nseed = 11\n')
        conf = load_config(path)
        self.assertEqual(11, build_run_config(_args(), conf, environ={}).seed)
        self.assertEqual(7, build_run_config(_args(), conf, environ={ENV_SEED: '7'}).seed)
        self.assertEqual(3, build_run_config(_args(seed=3), conf, environ={ENV_SEED: '7'}).seed)
        with self.assertRaises(ConfigError):
            build_run_config(_args(), conf, environ={ENV_SEED: 'seven'})

    def test_file_overrides_defaults(self):
        path = write_file(self.tmp.name, 'settings.cfg',
                          '[Voi]\nengine = bootstrap\nthresholds = 0.05\n\n'
                          '[Population]\ndecisions_per_year = 1000\nhorizon_years = 2\n')
        config = build_run_config(_args(), load_config(path), environ={})
        self.assertEqual('bootstrap', config.engine)
        self.assertEqual((0.05,), config.thresholds)
        self.assertEqual(2000, config.population.decisions)
        self.assertEqual((0.05,), build_run_config(_args('dca'), load_config(path), environ={}).thresholds)

    def test_malformed_file(self):
        path = write_file(self.tmp.name, 'settings.cfg', 'no section header\n')
        with self.assertRaises(ConfigError):
            load_config(path)

    def test_invalid_values(self):
        conf = load_config(self.missing)
        for kwargs in ({'thresholds': '0.5,1.0'}, {'thresholds': '0'}, {'n_sims': 1}, {'n_star': '-5'},
                       {'engine': 'analytic'}, {'format': 'xml'}, {'workers': 0}):
            with self.subTest(**kwargs):
                with self.assertRaises(ConfigError):
                    build_run_config(_args(**kwargs), conf, environ={})


if __name__ == '__main__':
    unittest.main()
