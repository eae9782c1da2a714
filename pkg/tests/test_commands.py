import dataclasses
import json
import os
import tempfile
import unittest
from unittest.mock import patch

from tests.context import *
from bin.nbvoi import main
from modules import voi_generic
from modules.commands import _grid_point
from modules.errors import DataError, VoiError
from modules.reporting import parse_results


class CommandTestCase(unittest.TestCase):
    """Runs the nbvoi script in a scratch directory without a settings file."""

    @classmethod
    def setUpClass(cls) -> None:
        init_test_logger()
        return super().setUpClass()

    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.config = os.path.join(self.tmp.name, 'missing.cfg')
        return super().setUp()

    def tearDown(self) -> None:
        self.tmp.cleanup()
        return super().tearDown()

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def run_main(self, *argv, environ=None):
        argv = list(argv)
        if '--config' not in argv:
            argv[1:1] = ['--config', self.config]
        return main(argv, environ={} if environ is None else environ)

    def synth(self, name='sample.csv', n=2000, prevalence=0.1, slope=1.0, seed=1):
        out = self.path(name)
        code = self.run_main('synth', '--n', str(n), '--prevalence', str(prevalence), '--slope', str(slope),
                             '--seed', str(seed), '--out', out)
        self.assertEqual(0, code)
        return out

    def results(self, name):
        return parse_results(read_bytes(self.path(name)), 'json')


class TestSynthAndDca(CommandTestCase):

    def test_synth_is_deterministic(self):
        a = read_bytes(self.synth('a.csv'))
        b = read_bytes(self.synth('b.csv'))
        self.assertEqual(a, b)
        self.assertTrue(a.startswith(b'risk,outcome\n'))
        self.assertEqual(2001, len(a.splitlines()))

    def test_dca(self):
        sample = self.synth()
        for name, workers in (('one.csv', '1'), ('again.csv', '1'), ('three.csv', '3')):
            code = self.run_main('dca', '--input', sample, '--n-boot', '200', '--seed', '9',
                                 '--workers', workers, '--out', self.path(name))
            self.assertEqual(0, code)
        lines = read_bytes(self.path('one.csv')).splitlines()
        self.assertEqual(11, len(lines))
        self.assertEqual(b'threshold,nb_none,nb_model,nb_all,delta_nb,ci_lo,ci_hi', lines[0])
        self.assertEqual(read_bytes(self.path('one.csv')), read_bytes(self.path('again.csv')))
        self.assertEqual(read_bytes(self.path('one.csv')), read_bytes(self.path('three.csv')))

    def test_missing_input(self):
        code = self.run_main('dca', '--input', self.path('nowhere.csv'), '--out', self.path('out.csv'))
        self.assertEqual(2, code)
        self.assertFalse(os.path.exists(self.path('out.csv')))


class TestVoi(CommandTestCase):

    def test_betabin_on_sample(self):
        sample = self.synth()
        code = self.run_main('voi', '--input', sample, '--thresholds', '0.02,0.05', '--n-star', '0,250,1000',
                             '--n-sims', '20000', '--format', 'json', '--out', self.path('voi.json'))
        self.assertEqual(0, code)
        rows = self.results('voi.json')
        self.assertEqual(6, len(rows))
        self.assertEqual([0.02] * 3 + [0.05] * 3, [r['z'] for r in rows])
        for z in (0.02, 0.05):
            curve = [r for r in rows if r['z'] == z]
            self.assertEqual(0.0, curve[0]['evsi'])
            for lo, hi in zip(curve, curve[1:]):
                self.assertLessEqual(lo['evsi'], hi['evsi'] + MC_TOLERANCE_SE * (lo['mc_se_evsi'] + hi['mc_se_evsi']))
            for r in curve:
                self.assertLessEqual(r['evsi'], r['evpi'] + MC_TOLERANCE_SE * (r['mc_se_evsi'] + r['mc_se_evpi']))
                self.assertEqual('betabin', r['engine'])
                self.assertIsNone(r['tp_units'])

    def test_workers_do_not_change_results(self):
        sample = self.synth()
        for name, workers in (('one.csv', '1'), ('four.csv', '4')):
            code = self.run_main('voi', '--input', sample, '--thresholds', '0.02', '--n-star', '0,500',
                                 '--n-sims', '70000', '--workers', workers, '--out', self.path(name))
            self.assertEqual(0, code)
        self.assertEqual(read_bytes(self.path('one.csv')), read_bytes(self.path('four.csv')))

    def test_population(self):
        sample = self.synth()
        code = self.run_main('voi', '--input', sample, '--thresholds', '0.02,0.1', '--n-star', '500',
                             '--n-sims', '20000', '--population', '800000', '--format', 'json',
                             '--out', self.path('voi.json'))
        self.assertEqual(0, code)
        for r in self.results('voi.json'):
            self.assertAlmostEqual(r['evsi'] * 800000, r['tp_units'])
            if r['tp_units'] > 0:
                self.assertAlmostEqual((1 - r['z']) / r['z'], r['fp_units'] / r['tp_units'])

    def test_priors_file(self):
        code = self.run_main('voi', '--priors', os.path.join(RESOURCES_DIR, 'priors.sample.beta.json'),
                             '--thresholds', '0.02', '--n-star', '0,100', '--n-sims', '5000', '--format', 'json',
                             '--out', self.path('voi.json'))
        self.assertEqual(0, code)
        self.assertEqual(2, len(self.results('voi.json')))

    def test_priors_file_with_non_numeric_mean(self):
        priors = write_file(self.tmp.name, 'priors.json', json.dumps({
            'prevalence': {'mean': 'high', 'sample_size': 10},
            'sensitivity': [41, 2],
            'specificity': [300, 150]}))
        code = self.run_main('voi', '--priors', priors, '--thresholds', '0.02', '--n-star', '0',
                             '--out', self.path('voi.csv'))
        self.assertEqual(2, code)
        self.assertFalse(os.path.exists(self.path('voi.csv')))

    def test_dataset_priors_file(self):
        code = self.run_main('voi', '--priors', os.path.join(RESOURCES_DIR, 'priors.sample.dataset.json'),
                             '--thresholds', '0.02,0.05', '--n-star', '0,100', '--n-sims', '5000',
                             '--format', 'json', '--out', self.path('voi.json'))
        self.assertEqual(0, code)
        rows = self.results('voi.json')
        self.assertEqual(4, len(rows))
        self.assertEqual(0.0, rows[0]['evsi'])

        code = self.run_main('voi', '--priors', os.path.join(RESOURCES_DIR, 'priors.sample.discrete.json'),
                             '--out', self.path('voi.csv'))
        self.assertEqual(1, code)

    def test_generic_matches_betabin_on_exported_draws(self):
        sample = self.synth()
        common = ['--input', sample, '--thresholds', '0.02', '--n-star', '0,500',
                  '--format', 'json']
        code = self.run_main('voi', *common, '--n-sims', '50000', '--export-draws', self.path('draws.csv'),
                             '--out', self.path('betabin.json'))
        self.assertEqual(0, code)
        self.assertEqual(50001, len(read_bytes(self.path('draws.csv')).splitlines()))
        code = self.run_main('voi', '--engine', 'generic', '--draws', self.path('draws.csv'),
                             '--thresholds', '0.02', '--n-star', '0,500', '--n-sims', '5000', '--format', 'json',
                             '--out', self.path('generic.json'))
        self.assertEqual(0, code)

        for b, g in zip(self.results('betabin.json'), self.results('generic.json')):
            with self.subTest(n_star=b['n_star']):
                self.assertEqual('generic', g['engine'])
                delta = MC_TOLERANCE_SE * (b['mc_se_evsi'] + b['mc_se_evpi'] + g['mc_se_evsi'] + g['mc_se_evpi'])
                self.assertAlmostEqual(b['evsi'], g['evsi'], delta=delta + 1e-12)
                self.assertAlmostEqual(b['evpi'], g['evpi'], delta=delta + 1e-12)

    def test_seed_from_environment(self):
        sample = self.synth()
        code = self.run_main('voi', '--input', sample, '--thresholds', '0.02', '--n-star', '0',
                             '--n-sims', '1000', '--format', 'json', '--out', self.path('voi.json'),
                             environ={'NBVOI_SEED': '5'})
        self.assertEqual(0, code)
        self.assertEqual(5, self.results('voi.json')[0]['seed'])

    def test_usage_errors(self):
        sample = self.synth()
        self.assertEqual(1, self.run_main('voi', '--input', sample, '--thresholds', '1.5'))
        self.assertEqual(1, self.run_main('voi', '--engine', 'bootstrap', '--thresholds', '0.02'))
        with self.assertRaises(SystemExit) as cm:
            self.run_main('voi', '--no-such-flag')
        self.assertEqual(1, cm.exception.code)


class TestSweep(CommandTestCase):

    def test_sweep(self):
        code = self.run_main('sweep', '--n', '5000', '--sizes', '500,2000', '--repetitions', '3',
                             '--thresholds', '0.02', '--n-star', '0,500', '--n-sims', '2000', '--format', 'json',
                             '--out', self.path('sweep.json'))
        self.assertEqual(0, code)
        rows = self.results('sweep.json')
        self.assertEqual(4, len(rows))
        self.assertEqual([500, 500, 2000, 2000], [r['n_current'] for r in rows])
        self.assertTrue(all(r['repetitions'] == 3 for r in rows))
        self.assertEqual(0.0, rows[0]['evsi'])

    def test_single_size_has_voi_columns(self):
        code = self.run_main('sweep', '--n', '2000', '--sizes', '500', '--repetitions', '2',
                             '--thresholds', '0.02', '--n-star', '0,500', '--n-sims', '2000',
                             '--out', self.path('sweep.csv'))
        self.assertEqual(0, code)
        sample = self.synth()
        code = self.run_main('voi', '--input', sample, '--thresholds', '0.02', '--n-star', '0,500',
                             '--n-sims', '2000', '--out', self.path('voi.csv'))
        self.assertEqual(0, code)
        sweep_lines = read_bytes(self.path('sweep.csv')).splitlines()
        voi_lines = read_bytes(self.path('voi.csv')).splitlines()
        self.assertEqual(voi_lines[0], sweep_lines[0])
        self.assertEqual(len(voi_lines), len(sweep_lines))

    def test_more_current_data_lowers_evsi(self):
        code = self.run_main('sweep', '--sizes', '500,8000', '--repetitions', '20', '--thresholds', '0.02',
                             '--n-star', '0,500,2000,8000', '--n-sims', '2000', '--format', 'json',
                             '--out', self.path('sweep.json'))
        self.assertEqual(0, code)
        rows = self.results('sweep.json')
        small = [r for r in rows if r['n_current'] == 500]
        large = [r for r in rows if r['n_current'] == 8000]
        self.assertEqual(4, len(small))
        self.assertEqual([r['n_star'] for r in small], [r['n_star'] for r in large])
        for s, big in zip(small, large):
            with self.subTest(n_star=s['n_star']):
                self.assertLessEqual(big['evsi'], s['evsi'] + MC_TOLERANCE_SE * (s['mc_se_evsi'] + big['mc_se_evsi']))

    def test_size_over_master(self):
        code = self.run_main('sweep', '--n', '1000', '--sizes', '2000', '--repetitions', '1',
                             '--out', self.path('sweep.csv'))
        self.assertEqual(2, code)
        self.assertFalse(os.path.exists(self.path('sweep.csv')))


class TestGridPoint(unittest.TestCase):

    @classmethod
    def setUpClass(cls) -> None:
        init_test_logger()
        return super().setUpClass()

    def test_keeps_line_number(self):
        with self.assertRaises(DataError) as cm:
            with _grid_point(z=0.02):
                raise DataError('outcome must be 0 or 1', line=6)
        self.assertEqual(6, cm.exception.line)
        self.assertEqual('z=0.02: line 6: outcome must be 0 or 1', str(cm.exception))

    def test_keeps_the_exception_object(self):

        class _TooMany(VoiError):
            def __init__(self, count):
                super().__init__(f'{count} failures')
                self.count = count

        error = _TooMany(4)
        with self.assertRaises(_TooMany) as cm:
            with _grid_point(n_current=500, repetition=1, z=0.05):
                raise error
        self.assertIs(error, cm.exception)
        self.assertEqual(4, cm.exception.count)
        self.assertEqual('n_current=500, repetition=1, z=0.05: 4 failures', str(cm.exception))


class TestOracleCheck(CommandTestCase):

    DISCRETE = os.path.join(RESOURCES_DIR, 'priors.sample.discrete.json')

    def report(self):
        return read_bytes(self.path('report.txt')).decode('utf-8').splitlines()

    def test_single_atom(self):
        priors = write_file(self.tmp.name, 'atom.json', json.dumps({'atoms': [
            {'prevalence': 0.08, 'sensitivity': 0.9, 'specificity': 0.6, 'probability': 1.0}]}))
        code = self.run_main('oracle-check', '--priors', priors, '--thresholds', '0.02', '--n-star', '0,3',
                             '--n-sims', '1000', '--out', self.path('report.txt'))
        self.assertEqual(0, code)
        self.assertTrue(self.report()[-1].startswith('PASS: '))

    def test_discrete_prior(self):
        code = self.run_main('oracle-check', '--priors', self.DISCRETE, '--thresholds', '0.05',
                             '--n-star', '0,4', '--n-sims', '20000', '--out', self.path('report.txt'))
        self.assertEqual(0, code)
        report = self.report()
        self.assertEqual(5, len(report))
        self.assertEqual('PASS: 4 of 4 checks within 3 SE', report[-1])

    def test_detects_a_biased_engine(self):
        run_grid = voi_generic.run_grid

        def biased(*args, **kwargs):
            return [dataclasses.replace(e, evsi=e.evsi + 0.05,
                                        diagnostics={**e.diagnostics, 'evsi_raw': e.diagnostics['evsi_raw'] + 0.05})
                    for e in run_grid(*args, **kwargs)]

        with patch('modules.voi_generic.run_grid', side_effect=biased):
            code = self.run_main('oracle-check', '--priors', self.DISCRETE, '--thresholds', '0.05',
                                 '--n-star', '0,4', '--n-sims', '2000', '--out', self.path('report.txt'))
        self.assertEqual(3, code)
        self.assertTrue(self.report()[-1].startswith('FAIL: '))

    def test_beta_priors(self):
        code = self.run_main('oracle-check', '--priors', os.path.join(RESOURCES_DIR, 'priors.sample.beta.json'),
                             '--thresholds', '0.02', '--n-star', '0,4', '--n-sims', '50000',
                             '--out', self.path('report.txt'))
        self.assertEqual(0, code)
        self.assertTrue(self.report()[-1].startswith('PASS: 2 of 2'))

    def test_sample_with_betabin(self):
        sample = self.synth(n=500)
        code = self.run_main('oracle-check', '--input', sample, '--engine', 'betabin', '--thresholds', '0.05',
                             '--n-star', '0,3', '--n-sims', '50000', '--out', self.path('report.txt'))
        self.assertEqual(0, code)

    def test_engine_not_applicable(self):
        code = self.run_main('oracle-check', '--priors', self.DISCRETE, '--engine', 'betabin',
                             '--out', self.path('report.txt'))
        self.assertEqual(1, code)


if __name__ == '__main__':
    unittest.main()
