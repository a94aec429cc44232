"""
dirveval - online comparison of rankings on post-click metrics

Experiment runners. A run repeatedly lets a policy pick a ranking, feeds back the clicks and post-click values of one
impression, and at every checkpoint compares the policy's estimated preferences with the ground truth.
"""
import os
import logging
from collections import deque, OrderedDict
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .core import ExperimentState, PreferenceMatrix, record_impression
from .clickmodel import ClickModelKind, update_examination_counts
from .estimator import VariancePredictor, EstimatorConfig, freeze_predictions, ranking_metric_estimate, \
    input_click_probs, ORACLE_NOISE, CONSTANT, TABLE
from .objective import VarianceSnapshot
from .interleave import PolicyKind, ReplayExhaustedException, estimator_config_for, make_policy, ab_estimate, TDM
from .exp_config import ConfigInvalidException, SIMULATE
from .data_io import load_relevance_csv, load_feature_csv, load_world_csv, load_variance_table_csv
from .utils import ensure_dir_exists
from . import sim

_log = logging.getLogger(__name__)

RESULT_COLUMNS = ['repeat', 'impressions', 'e_bin', 'total_variance', 'policy', 'seed']
AGGREGATE_COLUMNS = ['policy', 'impressions', 'repeats', 'e_bin_mean', 'e_bin_std',
                     'total_variance_mean', 'total_variance_std']
FLOAT_FORMAT = '%.12g'

# Separate random streams, so that runs of different policies see the same worlds
WORLD_STREAM = 0
BEHAVIOR_STREAM = 1
POLICY_STREAM = 2
PREDICTOR_STREAM = 3

VACUOUS = 'vacuous'
HOLDS = 'holds'
VIOLATED = 'violated'


def stream(seed, repeat, name):
    return np.random.default_rng([seed, repeat, name])


def binary_error(truth, est, exclude_ties=False):
    """
    Fraction of ordered pairs of distinct rankings where the sign of the estimated preference differs from the truth.

    With exclude_ties, pairs without a true preference are left out.
    """
    truth_values = truth.values if isinstance(truth, PreferenceMatrix) else np.asarray(truth)
    est_values = est.values if isinstance(est, PreferenceMatrix) else np.asarray(est)
    if truth_values.shape != est_values.shape:
        raise ValueError("preference matrices don't match: {} and {}".format(truth_values.shape, est_values.shape))
    if truth_values.shape[0] < 2:
        raise ValueError("at least 2 rankings are needed, got {}".format(truth_values.shape[0]))
    pairs = ~np.eye(truth_values.shape[0], dtype=bool)
    if exclude_ties:
        pairs &= truth_values != 0
    if not pairs.any():
        _log.warning("No pairs of rankings with a true preference, binary error is 0")
        return 0.0
    disagree = np.sign(truth_values) != np.sign(est_values)
    return float(disagree[pairs].sum() / pairs.sum())


def click_kind_for(cfg):
    return ClickModelKind(cfg.click_model, cfg.click_model_position_probs)


def behavior_for(cfg):
    if cfg.behavior == 'position_based':
        return sim.UserBehaviorKind(sim.POSITION_BASED_SIM, cfg.behavior_position_probs)
    return sim.UserBehaviorKind(sim.CASCADE_SIM)


def predictor_for(cfg):
    if cfg.predictor == TABLE:
        return VariancePredictor(TABLE, table=load_variance_table_csv(cfg.predictor_file))
    if cfg.predictor == ORACLE_NOISE:
        return VariancePredictor(ORACLE_NOISE)
    return VariancePredictor(CONSTANT, value=cfg.predictor_value)


def default_predictor(kind):
    """
    Variance predictions a policy runs with in simulation when nothing else is configured.
    """
    return VariancePredictor(ORACLE_NOISE) if kind.variance_prediction else VariancePredictor(CONSTANT)


def reporting_config(est_cfg):
    """
    Settings used for the total variance of a checkpoint, the same for every policy so that runs are comparable.
    """
    return EstimatorConfig(kind=est_cfg.kind, attraction_prior=est_cfg.attraction_prior)


@dataclass
class SimulationInputs:
    """
    Data files of a simulation config, loaded once for all repeats.
    """
    relevance: dict = None
    features: pd.DataFrame = None
    world_table: dict = None

    @classmethod
    def load(cls, cfg):
        if cfg.dataset == 'letor':
            return cls(relevance=load_relevance_csv(cfg.relevance_file), features=load_feature_csv(cfg.feature_file))
        if cfg.dataset == 'news':
            return cls(world_table=load_world_csv(cfg.world_file))
        return cls()


def build_world(cfg, inputs, rng):
    """
    The world and input rankings of one repeat.
    """
    if cfg.dataset == 'letor':
        world = sim.gen_letor_world(inputs.relevance, rng)
        features = list(cfg.features) if cfg.features is not None else list(inputs.features.columns)
        known = inputs.features.loc[[item for item in inputs.features.index if item in world]]
        return world, sim.letor_input_rankings(known, features, cfg.depth, cfg.sample_size, rng)
    if cfg.dataset == 'news':
        world = sim.gen_news_world(inputs.world_table)
    else:
        world = sim.gen_ec_world(cfg.num_items, rng)
    return world, sim.gen_input_rankings(world, cfg.duplication_k, cfg.num_rankings, cfg.depth, rng)


def checkpoint_row(repeat, state, policy, truth, report_cfg, seed, exclude_ties):
    return {'repeat': repeat,
            'impressions': state.impressions,
            'e_bin': binary_error(truth, policy.preference(state), exclude_ties=exclude_ties),
            'total_variance': VarianceSnapshot(state, report_cfg).total_variance(),
            'policy': policy.name,
            'seed': seed}


def impression_loop(policy, state, rng, num_impressions, feedback, candidates=None,
                    checkpoint_interval=None, on_checkpoint=None):
    """
    Present num_impressions rankings chosen by the policy, feeding back the record returned by feedback(ranking).

    With candidates, the policy chooses among the rankings it returns, and the loop stops early once there are none.
    on_checkpoint(state) is called before the first impression, every checkpoint_interval impressions and at the end.
    """
    if on_checkpoint is not None:
        on_checkpoint(state)
    last_checkpoint = state.impressions
    for _ in range(num_impressions):
        pool = candidates() if candidates is not None else None
        if pool is not None and len(pool) == 0:
            _log.warning("Stopping after {} of {} impressions: no logged impressions left".format(
                state.impressions, num_impressions))
            break
        ranking = policy.select(state, rng, pool)
        rec = feedback(ranking)
        record_impression(state, rec)
        update_examination_counts(state, rec)
        policy.observe(rec)
        if on_checkpoint is not None and checkpoint_interval is not None and \
                state.impressions % checkpoint_interval == 0:
            on_checkpoint(state)
            last_checkpoint = state.impressions
    if on_checkpoint is not None and last_checkpoint != state.impressions:
        on_checkpoint(state)
    return state


def simulate_repeat(cfg, inputs, repeat, kind=None):
    """
    Result rows of one repeat of a simulation.
    """
    kind = PolicyKind(cfg.policy, cfg.gamma) if kind is None else kind
    world_rng = stream(cfg.seed, repeat, WORLD_STREAM)
    behavior_rng = stream(cfg.seed, repeat, BEHAVIOR_STREAM)
    policy_rng = stream(cfg.seed, repeat, POLICY_STREAM)
    predictor_rng = stream(cfg.seed, repeat, PREDICTOR_STREAM)

    world, rankings = build_world(cfg, inputs, world_rng)
    behavior = behavior_for(cfg)
    truth = sim.ground_truth_preference(rankings, world, behavior)
    predictions = freeze_predictions(predictor_for(cfg), rankings.universe, sim.true_variances(world), predictor_rng)
    est_cfg = estimator_config_for(kind, click_kind_for(cfg), predictions, cfg.attraction_prior)
    policy = make_policy(kind, rankings, est_cfg, cfg.depth)
    report_cfg = reporting_config(est_cfg)

    rows = []

    def on_checkpoint(state):
        rows.append(checkpoint_row(repeat, state, policy, truth, report_cfg, cfg.seed, exclude_ties=True))
        _log.debug("{} repeat {}: {} impressions, binary error {}".format(
            policy.name, repeat, state.impressions, rows[-1]['e_bin']))

    impression_loop(policy, ExperimentState(rankings), policy_rng, cfg.num_impressions,
                    lambda ranking: sim.simulate_impression(ranking, world, behavior, behavior_rng),
                    checkpoint_interval=cfg.checkpoint_interval, on_checkpoint=on_checkpoint)
    _log.info("{} repeat {}: binary error {} after {} impressions".format(
        policy.name, repeat, rows[-1]['e_bin'], rows[-1]['impressions']))
    return rows


def run_simulation(cfg):
    """
    Result rows of every repeat of a simulation, see RESULT_COLUMNS.
    """
    if cfg.mode != SIMULATE:
        raise ConfigInvalidException("config is for mode '{}'".format(cfg.mode), 'mode')
    kind = PolicyKind(cfg.policy, cfg.gamma)
    inputs = SimulationInputs.load(cfg)
    rows = []
    for repeat in range(cfg.num_repeats):
        rows.extend(simulate_repeat(cfg, inputs, repeat, kind))
    return result_frame(rows)


def split_pool(dataset, rng=None, swap=False):
    """
    Split the logged impressions of every ranking in two halves: the first to compute the ground truth, the second to
    replay. Records are shuffled first when an rng is given.
    """
    truth_pool, replay_pool = OrderedDict(), OrderedDict()
    for ranking, queue in dataset.pool.items():
        records = list(queue)
        if rng is not None:
            records = [records[idx] for idx in rng.permutation(len(records))]
        half = len(records) // 2
        first, second = records[:half], records[half:]
        if swap:
            first, second = second, first
        truth_pool[ranking] = deque(first)
        replay_pool[ranking] = deque(second)
    return truth_pool, replay_pool


def replay_truth(rankings, truth_pool):
    """
    Preferences from the mean post-click value per impression of every input ranking presented verbatim.
    """
    state = ExperimentState(rankings)
    for ranking in rankings:
        for rec in truth_pool.get(ranking, ()):
            record_impression(state, rec)
    metrics = []
    for idx, ranking in enumerate(rankings):
        estimate = ab_estimate(state.ranking_stats[idx])
        if estimate.cold_start:
            _log.warning("Input ranking [{}] has no logged impressions for the ground truth".format(ranking))
        metrics.append(estimate.value)
    return PreferenceMatrix.from_metrics(metrics)


def run_replay(cfg, data, repeat=0, swap=False):
    """
    Result rows of replaying the logged impressions of one query.
    """
    kind = PolicyKind(cfg.policy, cfg.gamma)
    if kind.variant == TDM:
        raise ConfigInvalidException("policy '{}' can't be replayed".format(kind.variant), 'policy')
    rankings = data.input_rankings
    truth_pool, replay_pool = split_pool(data, swap=swap)
    truth = replay_truth(rankings, truth_pool)

    predictions = freeze_predictions(predictor_for(cfg), rankings.universe)
    est_cfg = estimator_config_for(kind, click_kind_for(cfg), predictions, cfg.attraction_prior)
    policy = make_policy(kind, rankings, est_cfg, cfg.depth)
    report_cfg = reporting_config(est_cfg)
    policy_rng = stream(cfg.seed, repeat, POLICY_STREAM)

    def candidates():
        if kind.is_dirv:
            return [ranking for ranking, queue in replay_pool.items() if len(queue) > 0]
        return [ranking for ranking in rankings if len(replay_pool.get(ranking, ())) > 0]

    def feedback(ranking):
        queue = replay_pool.get(ranking)
        if queue is None or len(queue) == 0:
            raise ReplayExhaustedException("no logged impressions left for ranking [{}]".format(ranking))
        return queue.popleft()

    rows = []

    def on_checkpoint(state):
        rows.append(checkpoint_row(repeat, state, policy, truth, report_cfg, cfg.seed, exclude_ties=False))

    impression_loop(policy, ExperimentState(rankings), policy_rng, cfg.num_impressions, feedback,
                    candidates=candidates, checkpoint_interval=cfg.checkpoint_interval, on_checkpoint=on_checkpoint)
    _log.info("{} query '{}': binary error {} after {} impressions".format(
        policy.name, data.query_id, rows[-1]['e_bin'], rows[-1]['impressions']))
    return rows


def run_replay_datasets(cfg, datasets, swap=False):
    """
    Replay every query in turn. The repeat column holds the position of the query in the log.
    """
    rows = []
    for repeat, data in enumerate(datasets):
        rows.extend(run_replay(cfg, data, repeat=repeat, swap=swap))
    return result_frame(rows)


@dataclass(frozen=True)
class BoundReport:
    """
    Monte Carlo binary error against its upper bound sum(V) / (C * |R|), where C is the smallest squared difference
    between the true metrics of two rankings and V the variance of each ranking's metric estimate.
    """
    impressions: int
    repeats: int
    empirical_error: float
    bound: float
    # Bound with the variances of the metric estimates measured over the repeats
    empirical_variance_bound: float
    min_squared_difference: float
    verdict: str


def _bound_verdict(empirical_error, bound):
    if bound > 1.0:
        return VACUOUS
    return HOLDS if empirical_error <= bound else VIOLATED


def error_bound_check(world, rankings, behavior, kind, click_kind, num_impressions, repeats, seed=0,
                      predictor=None, attraction_prior=0.0):
    """
    Repeatedly run a policy on a fixed world and compare the mean binary error with its Chebyshev upper bound.
    Without a predictor the policy gets the variance predictions it runs with in simulation.
    """
    truth = sim.ground_truth_preference(rankings, world, behavior)
    diffs = truth.values[~np.eye(truth.size, dtype=bool)]
    if np.any(diffs == 0):
        raise UndefinedBoundException()
    min_squared = float(np.min(diffs * diffs))
    predictor = default_predictor(kind) if predictor is None else predictor

    errors, variances, estimates = [], [], []
    for repeat in range(repeats):
        predictions = freeze_predictions(predictor, rankings.universe, sim.true_variances(world),
                                         stream(seed, repeat, PREDICTOR_STREAM))
        est_cfg = estimator_config_for(kind, click_kind, predictions, attraction_prior)
        policy = make_policy(kind, rankings, est_cfg, len(rankings[0]))
        behavior_rng = stream(seed, repeat, BEHAVIOR_STREAM)
        state = impression_loop(policy, ExperimentState(rankings), stream(seed, repeat, POLICY_STREAM),
                                num_impressions,
                                lambda ranking: sim.simulate_impression(ranking, world, behavior, behavior_rng))
        errors.append(binary_error(truth, policy.preference(state)))
        variances.append(VarianceSnapshot(state, est_cfg).total_variance())
        estimates.append([ranking_metric_estimate(ranking, state, est_cfg, probs=input_click_probs(idx, state, est_cfg))
                          for idx, ranking in enumerate(rankings)])

    empirical_error = float(np.mean(errors))
    bound = float(np.mean(variances)) / (min_squared * len(rankings))
    spread = float(np.var(np.array(estimates), axis=0, ddof=1).sum()) if repeats > 1 else 0.0
    report = BoundReport(impressions=num_impressions, repeats=repeats, empirical_error=empirical_error, bound=bound,
                         empirical_variance_bound=spread / (min_squared * len(rankings)),
                         min_squared_difference=min_squared, verdict=_bound_verdict(empirical_error, bound))
    _log.info("Bound check: {}".format(report))
    return report


def bound_check_from_config(cfg, num_impressions=None, repeats=None):
    """
    Bound check on the world and input rankings of the first repeat of a simulation config.
    """
    inputs = SimulationInputs.load(cfg)
    world, rankings = build_world(cfg, inputs, stream(cfg.seed, 0, WORLD_STREAM))
    return error_bound_check(world, rankings, behavior_for(cfg), PolicyKind(cfg.policy, cfg.gamma),
                             click_kind_for(cfg),
                             cfg.num_impressions if num_impressions is None else num_impressions,
                             cfg.num_repeats if repeats is None else repeats,
                             seed=cfg.seed, predictor=predictor_for(cfg), attraction_prior=cfg.attraction_prior)


def result_frame(rows):
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def aggregate_results(frame):
    """
    Mean and sample standard deviation over the repeats of every policy at every checkpoint.
    """
    if len(frame) == 0:
        return pd.DataFrame(columns=AGGREGATE_COLUMNS)
    grouped = frame.groupby(['policy', 'impressions'], sort=True)
    result = pd.DataFrame({
        'repeats': grouped['e_bin'].count(),
        'e_bin_mean': grouped['e_bin'].mean(),
        'e_bin_std': grouped['e_bin'].std(ddof=1),
        'total_variance_mean': grouped['total_variance'].mean(),
        'total_variance_std': grouped['total_variance'].std(ddof=1),
    }).reset_index()
    # A single repeat has no spread
    return result[AGGREGATE_COLUMNS].fillna(0.0)


def aggregate_path(path):
    root, ext = os.path.splitext(path)
    return '{}_aggregate{}'.format(root, ext or '.csv')


def write_csv(frame, path):
    try:
        ensure_dir_exists(os.path.dirname(path))
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as exc:
        raise OSError("Can't write results to '{}': {}".format(path, exc)) from exc


def emit_results(frame, path):
    """
    Write the result rows of a run and, next to them, their aggregate over the repeats. Existing files are replaced.
    """
    frame = result_frame([]) if frame is None else frame
    write_csv(frame, path)
    write_csv(aggregate_results(frame), aggregate_path(path))
    return path, aggregate_path(path)


def result_path(output_dir, policy, seed, mode=SIMULATE):
    return os.path.join(output_dir, '{}_{}_seed{}.csv'.format(mode, policy, seed))


def load_results(directory):
    """
    All run result files in a directory, skipping aggregates.
    """
    files = sorted(name for name in os.listdir(directory)
                   if name.endswith('.csv') and not name.endswith('_aggregate.csv'))
    frames = []
    for name in files:
        frame = pd.read_csv(os.path.join(directory, name))
        if list(frame.columns) != RESULT_COLUMNS:
            _log.warning("Skipping '{}': not a result file".format(name))
            continue
        frames.append(frame)
    if len(frames) == 0:
        return result_frame([])
    return pd.concat(frames, ignore_index=True)


class UndefinedBoundException(Exception):
    """
    Exception raised when two rankings have the same true metric, which leaves the error bound undefined.
    """

    def __init__(self, message="some rankings have identical true metrics, the bound needs strict preferences"):
        super().__init__(message)
