import os
import shutil
import unittest
from collections import deque, OrderedDict

import numpy as np
import pandas as pd

from dirveval.core import Ranking, RankingSet, ImpressionRecord, PreferenceMatrix
from dirveval.clickmodel import ClickModelKind
from dirveval.data_io import ReplayDataset
from dirveval.exp_config import ExperimentConfig, ConfigInvalidException, REPLAY
from dirveval.estimator import VariancePredictor, ORACLE_NOISE, CONSTANT
from dirveval.interleave import PolicyKind, AB, DIRV, DIRV_NO_ERRCORR, DIRV_NO_VARPRED, TDM
from dirveval.sim import GroundTruthItem, Exponential, ScaledBernoulli, UserBehaviorKind
from dirveval.harness import binary_error, run_simulation, run_replay, run_replay_datasets, split_pool, \
    replay_truth, error_bound_check, default_predictor, aggregate_results, emit_results, load_results, result_frame, \
    result_path, aggregate_path, stream, UndefinedBoundException, RESULT_COLUMNS, AGGREGATE_COLUMNS, HOLDS, VACUOUS, \
    WORLD_STREAM, POLICY_STREAM

SMALL_SIMULATION = dict(num_items=12, num_rankings=3, depth=3, num_impressions=20, num_repeats=2,
                        checkpoint_interval=10, seed=5, predictor='constant')


def record(ranking, values):
    return ImpressionRecord(Ranking(ranking), tuple(value is not None for value in values), tuple(values))


def replay_dataset(records_per_ranking=10):
    rankings = RankingSet(((1, 2), (2, 1)))
    pool = OrderedDict()
    pool[Ranking((1, 2))] = deque(record((1, 2), (float(idx), None)) for idx in range(records_per_ranking))
    pool[Ranking((2, 1))] = deque(record((2, 1), (None, None)) for _ in range(records_per_ranking))
    return ReplayDataset('q', rankings, pool)


def deterministic_world(second_price=20.0):
    return {1: GroundTruthItem(1, 1.0, ScaledBernoulli(1.0, 10.0)),
            2: GroundTruthItem(2, 1.0, ScaledBernoulli(1.0, second_price))}


def separated_world():
    """
    Three items whose expected post-click values (50, 10 and 24) are far apart.
    """
    return {1: GroundTruthItem(1, 0.5, Exponential(100.0)),
            2: GroundTruthItem(2, 0.5, Exponential(20.0)),
            3: GroundTruthItem(3, 0.4, Exponential(60.0))}


class TestBinaryError(unittest.TestCase):

    def setUp(self):
        self.truth = PreferenceMatrix.from_metrics([1.0, 2.0, 4.0])

    def test_identical(self):
        self.assertEqual(binary_error(self.truth, self.truth), 0.0)

    def test_flipped(self):
        self.assertEqual(binary_error(self.truth, -self.truth), 1.0)

    def test_one_pair_wrong(self):
        est = PreferenceMatrix.from_metrics([2.5, 2.0, 4.0])
        self.assertAlmostEqual(binary_error(self.truth, est), 2 / 6)

    def test_rescaling(self):
        est = PreferenceMatrix.from_metrics([2.5, 2.0, 4.0])
        self.assertEqual(binary_error(PreferenceMatrix(self.truth.values * 3.0), PreferenceMatrix(est.values * 0.01)),
                         binary_error(self.truth, est))

    def test_zero_signs(self):
        zero = PreferenceMatrix(np.zeros((3, 3)))
        self.assertEqual(binary_error(self.truth, zero), 1.0)
        self.assertEqual(binary_error(zero, zero), 0.0)
        tied = PreferenceMatrix.from_metrics([1.0, 1.0, 4.0])
        self.assertAlmostEqual(binary_error(tied, zero), 4 / 6)
        self.assertEqual(binary_error(tied, PreferenceMatrix.from_metrics([0.0, 2.0, 4.0]), exclude_ties=True), 0.0)

    def test_all_ties_excluded(self):
        zero = PreferenceMatrix(np.zeros((2, 2)))
        with self.assertLogs('dirveval.harness', level='WARNING'):
            self.assertEqual(binary_error(zero, zero, exclude_ties=True), 0.0)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            binary_error(self.truth, PreferenceMatrix.from_metrics([1.0, 2.0]))
        with self.assertRaises(ValueError):
            binary_error(np.zeros((1, 1)), np.zeros((1, 1)))


class TestSimulation(unittest.TestCase):

    def test_no_impressions(self):
        frame = run_simulation(ExperimentConfig(**dict(SMALL_SIMULATION, num_impressions=0)))
        self.assertEqual(list(frame.columns), RESULT_COLUMNS)
        self.assertEqual(list(frame['impressions']), [0, 0])
        # Cold-start estimates have no preferences at all
        self.assertEqual(list(frame['e_bin']), [1.0, 1.0])

    def test_checkpoints(self):
        frame = run_simulation(ExperimentConfig(**dict(SMALL_SIMULATION, num_impressions=25)))
        self.assertEqual(list(frame['impressions']), [0, 10, 20, 25] * 2)
        self.assertEqual(list(frame['repeat']), [0] * 4 + [1] * 4)
        self.assertTrue(frame['e_bin'].between(0.0, 1.0).all())
        self.assertEqual(set(frame['policy']), {DIRV})

    def test_deterministic(self):
        for policy in (DIRV, TDM, AB):
            cfg = ExperimentConfig(**dict(SMALL_SIMULATION, policy=policy))
            pd.testing.assert_frame_equal(run_simulation(cfg), run_simulation(cfg))

    def test_replay_config(self):
        with self.assertRaises(ConfigInvalidException):
            run_simulation(ExperimentConfig(**dict(SMALL_SIMULATION, mode=REPLAY)))

    def test_streams(self):
        self.assertEqual(stream(3, 1, WORLD_STREAM).random(), stream(3, 1, WORLD_STREAM).random())
        self.assertNotEqual(stream(3, 1, WORLD_STREAM).random(), stream(3, 1, POLICY_STREAM).random())
        self.assertNotEqual(stream(3, 1, WORLD_STREAM).random(), stream(3, 2, WORLD_STREAM).random())


class TestReplay(unittest.TestCase):

    def cfg(self, policy, num_impressions=100):
        return ExperimentConfig(mode=REPLAY, policy=policy, predictor='constant', depth=2,
                                num_impressions=num_impressions, checkpoint_interval=4)

    def test_split_pool(self):
        data = replay_dataset()
        truth_pool, replay_pool = split_pool(data)
        self.assertEqual([rec.post_clicks[0] for rec in truth_pool[Ranking((1, 2))]], [0.0, 1.0, 2.0, 3.0, 4.0])
        self.assertEqual([rec.post_clicks[0] for rec in replay_pool[Ranking((1, 2))]], [5.0, 6.0, 7.0, 8.0, 9.0])
        truth_swapped, replay_swapped = split_pool(data, swap=True)
        self.assertEqual(list(truth_swapped[Ranking((1, 2))]), list(replay_pool[Ranking((1, 2))]))
        self.assertEqual(list(replay_swapped[Ranking((1, 2))]), list(truth_pool[Ranking((1, 2))]))
        # The dataset itself is left untouched
        self.assertEqual(data.record_count(), 20)

    def test_truth(self):
        truth_pool, _ = split_pool(replay_dataset())
        truth = replay_truth(RankingSet(((1, 2), (2, 1))), truth_pool)
        self.assertEqual(truth[0][1], 2.0)

    def test_never_fabricates_records(self):
        for policy in (AB, DIRV):
            with self.assertLogs('dirveval.harness', level='WARNING'):
                rows = run_replay(self.cfg(policy), replay_dataset())
            self.assertEqual(rows[-1]['impressions'], 10)
            self.assertEqual([row['impressions'] for row in rows], [0, 4, 8, 10])

    def test_single_pool_ranking(self):
        data = replay_dataset()
        del data.pool[Ranking((2, 1))]
        with self.assertLogs('dirveval.harness', level='WARNING'):
            rows = run_replay(self.cfg(DIRV), data)
        self.assertEqual(rows[-1]['impressions'], 5)

    def test_swapped_halves(self):
        rows = run_replay(self.cfg(AB, num_impressions=6), replay_dataset(), swap=True)
        self.assertEqual(rows[-1]['impressions'], 6)

    def test_team_draft_rejected(self):
        with self.assertRaises(ConfigInvalidException):
            run_replay(ExperimentConfig(policy=TDM, predictor='constant'), replay_dataset())

    def test_datasets(self):
        frame = run_replay_datasets(self.cfg(AB, num_impressions=4), [replay_dataset(), replay_dataset()])
        self.assertEqual(list(frame['repeat']), [0, 0, 1, 1])
        self.assertEqual(list(frame['impressions']), [0, 4, 0, 4])


class TestBoundCheck(unittest.TestCase):

    def test_deterministic_world(self):
        rankings = RankingSet(((1,), (2,)))
        report = error_bound_check(deterministic_world(), rankings, UserBehaviorKind(), PolicyKind(AB),
                                   ClickModelKind(), 50, 3, seed=1)
        self.assertEqual(report.bound, 0.0)
        self.assertEqual(report.empirical_error, 0.0)
        self.assertEqual(report.empirical_variance_bound, 0.0)
        self.assertEqual(report.min_squared_difference, 100.0)
        self.assertEqual(report.verdict, HOLDS)

    def test_vacuous(self):
        world = {1: GroundTruthItem(1, 0.5, ScaledBernoulli(0.5, 10.0)),
                 2: GroundTruthItem(2, 0.5, ScaledBernoulli(0.5, 10.01))}
        report = error_bound_check(world, RankingSet(((1,), (2,))), UserBehaviorKind(), PolicyKind(AB),
                                   ClickModelKind(), 20, 2)
        self.assertGreater(report.bound, 1.0)
        self.assertEqual(report.verdict, VACUOUS)

    def test_undefined(self):
        with self.assertRaises(UndefinedBoundException):
            error_bound_check(deterministic_world(second_price=10.0), RankingSet(((1,), (2,))),
                              UserBehaviorKind(), PolicyKind(AB), ClickModelKind(), 10, 2)

    def test_holds_for_interleaving(self):
        world = separated_world()
        rankings = RankingSet(((1,), (2,), (3,)))
        for variant in (DIRV, DIRV_NO_ERRCORR):
            report = error_bound_check(world, rankings, UserBehaviorKind(), PolicyKind(variant), ClickModelKind(),
                                       300, 200)
            self.assertAlmostEqual(report.min_squared_difference, 196.0)
            self.assertLess(report.bound, 1.0, msg=variant)
            self.assertLessEqual(report.empirical_error, report.bound, msg=variant)
            self.assertEqual(report.verdict, HOLDS, msg=variant)

    def test_default_predictor_follows_policy(self):
        world = separated_world()
        rankings = RankingSet(((1,), (2,), (3,)))
        self.assertEqual(default_predictor(PolicyKind(DIRV)), VariancePredictor(ORACLE_NOISE))
        self.assertEqual(default_predictor(PolicyKind(DIRV_NO_VARPRED)), VariancePredictor(CONSTANT))
        args = (world, rankings, UserBehaviorKind(), PolicyKind(DIRV), ClickModelKind(), 100, 3)
        self.assertEqual(error_bound_check(*args), error_bound_check(*args, predictor=VariancePredictor(ORACLE_NOISE)))


class TestResults(unittest.TestCase):

    output_dir = '_tmp_test_results'

    def tearDown(self):
        shutil.rmtree(self.output_dir, ignore_errors=True)

    @staticmethod
    def rows():
        return result_frame([
            {'repeat': 0, 'impressions': 0, 'e_bin': 1.0, 'total_variance': 8.0, 'policy': AB, 'seed': 0},
            {'repeat': 0, 'impressions': 10, 'e_bin': 0.5, 'total_variance': 4.0, 'policy': AB, 'seed': 0},
            {'repeat': 1, 'impressions': 0, 'e_bin': 1.0, 'total_variance': 6.0, 'policy': AB, 'seed': 0},
            {'repeat': 1, 'impressions': 10, 'e_bin': 0.0, 'total_variance': 2.0, 'policy': AB, 'seed': 0},
        ])

    def test_aggregate(self):
        aggregate = aggregate_results(self.rows())
        self.assertEqual(list(aggregate.columns), AGGREGATE_COLUMNS)
        self.assertEqual(list(aggregate['impressions']), [0, 10])
        self.assertEqual(list(aggregate['repeats']), [2, 2])
        self.assertEqual(list(aggregate['e_bin_mean']), [1.0, 0.25])
        self.assertEqual(aggregate['e_bin_std'][0], 0.0)
        self.assertAlmostEqual(aggregate['e_bin_std'][1], np.sqrt(0.125))
        self.assertAlmostEqual(aggregate['total_variance_std'][0], np.sqrt(2.0))

    def test_single_repeat(self):
        aggregate = aggregate_results(self.rows().iloc[:2])
        self.assertEqual(list(aggregate['e_bin_std']), [0.0, 0.0])

    def test_empty(self):
        path, aggregated = emit_results(result_frame([]), os.path.join(self.output_dir, 'empty.csv'))
        with open(path) as result_file:
            self.assertEqual(result_file.read().strip(), ','.join(RESULT_COLUMNS))
        with open(aggregated) as aggregate_file:
            self.assertEqual(aggregate_file.read().strip(), ','.join(AGGREGATE_COLUMNS))

    def test_emit_and_load(self):
        frame = self.rows().iloc[:3]
        path, aggregated = emit_results(frame, result_path(self.output_dir, AB, 0))
        self.assertEqual(os.path.basename(path), 'simulate_ab_seed0.csv')
        self.assertEqual(aggregated, aggregate_path(path))
        self.assertEqual(len(pd.read_csv(path)), 3)
        # Writing again replaces the files
        emit_results(frame, path)
        with open(os.path.join(self.output_dir, 'notes.csv'), 'w') as other:
            other.write("a,b\n1,2\n")
        with self.assertLogs('dirveval.harness', level='WARNING'):
            loaded = load_results(self.output_dir)
        pd.testing.assert_frame_equal(loaded, frame.reset_index(drop=True), check_dtype=False)
