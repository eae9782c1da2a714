import unittest

import numpy as np

from tests.context import *
from modules.errors import DomainError
from modules.net_benefit import ThetaTriplet, net_benefits
from modules.oracle import evsi_exact_beta
from modules.random_streams import substream
from modules.validation_data import ConfusionCounts
from modules.voi_betabin import (BetaPriorSet, FutureCounts, enb_current, posterior_mean_update,
                                 priors_from_sample, run, run_grid, simulate_future_counts)


class TestBetaPriorSet(unittest.TestCase):

    @classmethod
    def setUpClass(cls) -> None:
        init_test_logger()
        return super().setUpClass()

    def test_positive_parameters(self):
        with self.assertRaises(DomainError):
            BetaPriorSet(0.0, 1.0, 1.0, 1.0, 1.0, 1.0)
        with self.assertRaises(DomainError):
            BetaPriorSet(1.0, 1.0, 1.0, -2.0, 1.0, 1.0)

    def test_elicited(self):
        priors = BetaPriorSet.from_mean_and_sample_size((0.3, 0.8, 0.5), 10)
        self.assertAlmostEqual(3.0, priors.alpha_p)
        self.assertAlmostEqual(7.0, priors.beta_p)
        self.assertAlmostEqual(8.0, priors.alpha_se)
        self.assertAlmostEqual(2.0, priors.beta_se)

    def test_from_dict_forms(self):
        priors = BetaPriorSet.from_dict({
            'prevalence': [43, 457],
            'sensitivity': {'alpha': 41, 'beta': 2},
            'specificity': {'mean': 0.3, 'sample_size': 10},
        })
        self.assertEqual((43.0, 457.0), (priors.alpha_p, priors.beta_p))
        self.assertEqual((41.0, 2.0), (priors.alpha_se, priors.beta_se))
        self.assertAlmostEqual(3.0, priors.alpha_sp)
        self.assertEqual(priors, BetaPriorSet.from_dict(priors.to_dict()))

    def test_from_dict_invalid(self):
        with self.assertRaises(DomainError):
            BetaPriorSet.from_dict({'prevalence': [1, 1], 'sensitivity': [1, 1]})
        with self.assertRaises(DomainError):
            BetaPriorSet.from_dict({'prevalence': [1, 1], 'sensitivity': [1, 1], 'specificity': 'flat'})
        with self.assertRaises(DomainError):
            BetaPriorSet.from_dict({'prevalence': [1, 1], 'sensitivity': [1, 1], 'specificity': {'mean': 0.5}})

    def test_from_dict_non_numeric_values(self):
        for spec in ({'mean': 'high', 'sample_size': 10}, {'mean': 0.3, 'sample_size': 'ten'},
                     {'mean': None, 'sample_size': 10}, {'mean': [0.3], 'sample_size': 10},
                     {'alpha': 'a', 'beta': 1}, ['x', 1]):
            with self.subTest(spec=spec):
                with self.assertRaises(DomainError):
                    BetaPriorSet.from_dict({'prevalence': spec, 'sensitivity': [1, 1], 'specificity': [1, 1]})

    def test_from_dict_numeric_strings(self):
        priors = BetaPriorSet.from_dict({'prevalence': {'mean': '0.3', 'sample_size': '10'},
                                         'sensitivity': [1, 1], 'specificity': [1, 1]})
        self.assertAlmostEqual(3.0, priors.alpha_p)
        self.assertAlmostEqual(7.0, priors.beta_p)

    def test_priors_from_sample(self):
        priors = priors_from_sample(ConfusionCounts(9, 1, 60, 30))
        self.assertEqual((11, 91), (priors.alpha_p, priors.beta_p))
        self.assertEqual((10, 2), (priors.alpha_se, priors.beta_se))
        self.assertEqual((61, 31), (priors.alpha_sp, priors.beta_sp))

    def test_priors_from_sample_with_vague_base(self):
        priors = priors_from_sample(ConfusionCounts(9, 1, 60, 30), BetaPriorSet.vague())
        self.assertAlmostEqual(10.0, priors.alpha_p, places=5)
        self.assertAlmostEqual(0.9, priors.means().sensitivity, places=6)

    def test_enb_current_uses_means(self):
        priors = BetaPriorSet(11, 91, 10, 2, 61, 31)
        np.testing.assert_array_equal(net_benefits(priors.means(), 0.1), enb_current(priors, 0.1))


class TestFutureCounts(unittest.TestCase):

    @classmethod
    def setUpClass(cls) -> None:
        init_test_logger()
        return super().setUpClass()

    def test_no_future_sample(self):
        fc = simulate_future_counts(ThetaTriplet(0.3, 0.7, 0.8), 0, substream(1, 0))
        self.assertEqual((0, 0, 0, 0, 0), (fc.n_pos, fc.n_tp, fc.n_fn, fc.n_tn, fc.n_fp))

    def test_law_of_large_numbers(self):
        fc = simulate_future_counts(ThetaTriplet(0.5, 0.5, 0.5), 100000, substream(1, 1))
        self.assertAlmostEqual(0.5, fc.n_pos / fc.n_star, delta=0.005)
        self.assertEqual(fc.n_star, fc.n_tp + fc.n_fn + fc.n_tn + fc.n_fp)

    def test_inconsistent_counts(self):
        with self.assertRaises(DomainError):
            FutureCounts(n_pos=3, n_tp=1, n_fn=1, n_tn=5, n_fp=2, n_star=10)

    def test_posterior_mean_update(self):
        fc = FutureCounts(n_pos=3, n_tp=2, n_fn=1, n_tn=5, n_fp=2, n_star=10)
        theta = posterior_mean_update(BetaPriorSet.flat(), fc)
        self.assertAlmostEqual(4 / 12, theta.prevalence)
        self.assertAlmostEqual(3 / 5, theta.sensitivity)
        self.assertAlmostEqual(6 / 9, theta.specificity)


class TestRun(unittest.TestCase):

    PRIORS = BetaPriorSet(11, 91, 10, 2, 61, 31)

    # Prior where treat-all and the model are close at z=0.02.
    CLOSE_PRIORS = BetaPriorSet(43, 457, 41, 2, 137.1, 319.9)

    @classmethod
    def setUpClass(cls) -> None:
        init_test_logger()
        return super().setUpClass()

    def test_evsi_zero_without_future_data(self):
        est = run(self.CLOSE_PRIORS, 0.02, 0, n_sims=5000, seed=1)
        self.assertEqual(0.0, est.evsi)
        self.assertEqual(0.0, est.diagnostics['evsi_raw'])
        self.assertAlmostEqual(0.0, est.mc_se_evsi, places=12)
        self.assertGreaterEqual(est.evpi, 0.0)

    def test_grid_matches_single_runs(self):
        grid = run_grid(self.CLOSE_PRIORS, 0.02, [0, 50, 400], n_sims=4000, seed=8)
        single = run(self.CLOSE_PRIORS, 0.02, 400, n_sims=4000, seed=8)
        self.assertEqual(single.evsi, grid[2].evsi)
        self.assertEqual(single.evpi, grid[2].evpi)
        self.assertEqual(grid[0].evpi, grid[1].evpi)

    def test_deterministic_across_workers(self):
        a = run(self.CLOSE_PRIORS, 0.02, 200, n_sims=70000, seed=3, workers=1)
        b = run(self.CLOSE_PRIORS, 0.02, 200, n_sims=70000, seed=3, workers=4)
        self.assertEqual(a.to_dict(), b.to_dict())

    def test_ordering(self):
        grid = run_grid(self.CLOSE_PRIORS, 0.02, [0, 125, 500, 2000, 100000], n_sims=40000, seed=5)
        for lo, hi in zip(grid, grid[1:]):
            self.assertLessEqual(lo.evsi, hi.evsi + MC_TOLERANCE_SE * (lo.mc_se_evsi + hi.mc_se_evsi))
        for est in grid:
            self.assertLessEqual(est.evsi, est.evpi + MC_TOLERANCE_SE * est.combined_se)
        last = grid[-1]
        self.assertAlmostEqual(last.evpi, last.evsi, delta=MC_TOLERANCE_SE * last.combined_se)

    def test_matches_exact_enumeration(self):
        for z in (0.02, 0.1):
            for n_star in (2, 6):
                with self.subTest(z=z, n_star=n_star):
                    exact = evsi_exact_beta(self.CLOSE_PRIORS, z, n_star)
                    est = run(self.CLOSE_PRIORS, z, n_star, n_sims=100000, seed=13)
                    self.assertAlmostEqual(exact, est.diagnostics['evsi_raw'],
                                           delta=MC_TOLERANCE_SE * est.mc_se_evsi + 1e-12)

    def test_invalid_arguments(self):
        with self.assertRaises(DomainError):
            run(self.PRIORS, 0.02, -1, n_sims=100, seed=1)
        with self.assertRaises(DomainError):
            run(self.PRIORS, 0.02, 10, n_sims=1, seed=1)
        with self.assertRaises(DomainError):
            run(self.PRIORS, 1.0, 10, n_sims=100, seed=1)


if __name__ == '__main__':
    unittest.main()
