"""
dirveval - online comparison of rankings on post-click metrics

Simulated users. A world holds the true attraction probability and post-click value distribution of every item, users
then click and produce post-click values according to a behavior model.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import Ranking, RankingSet, ImpressionRecord, PreferenceMatrix, UnknownItemException
from .clickmodel import validate_position_probs
from .data_io import DataInvalidException
from .exp_config import ConfigInvalidException
from .interleave import tdm_interleave

_log = logging.getLogger(__name__)

CASCADE_SIM = 'cascade_sim'
POSITION_BASED_SIM = 'position_based_sim'

RELEVANCE_LABELS = (0, 1, 2)


@dataclass(frozen=True)
class Exponential:
    """
    Dwell time with an exponential distribution of the given mean.
    """
    mean_value: float

    def __post_init__(self):
        if self.mean_value <= 0:
            raise ValueError("exponential mean has to be positive: {}".format(self.mean_value))

    def mean(self):
        return self.mean_value

    def variance(self):
        return self.mean_value * self.mean_value

    def draw(self, rng):
        return float(rng.exponential(self.mean_value))


@dataclass(frozen=True)
class ScaledBernoulli:
    """
    Purchase value: the price with probability conversion_rate, otherwise 0.
    """
    conversion_rate: float
    price: float

    def __post_init__(self):
        if not 0.0 <= self.conversion_rate <= 1.0:
            raise ValueError("conversion rate isn't in [0, 1]: {}".format(self.conversion_rate))
        if self.price <= 0:
            raise ValueError("price has to be positive: {}".format(self.price))

    def mean(self):
        return self.conversion_rate * self.price

    def variance(self):
        return self.price * self.price * self.conversion_rate * (1.0 - self.conversion_rate)

    def draw(self, rng):
        return self.price if rng.random() < self.conversion_rate else 0.0


@dataclass(frozen=True)
class GammaDwell:
    """
    Dwell time with a gamma distribution matching the given mean and variance. A variance of 0 always gives the mean.
    """
    mean_value: float
    var_value: float

    def __post_init__(self):
        if self.mean_value <= 0:
            raise ValueError("mean dwell time has to be positive: {}".format(self.mean_value))
        if self.var_value < 0:
            raise ValueError("dwell time variance can't be negative: {}".format(self.var_value))

    def mean(self):
        return self.mean_value

    def variance(self):
        return self.var_value

    def draw(self, rng):
        if self.var_value == 0:
            return self.mean_value
        shape = self.mean_value * self.mean_value / self.var_value
        scale = self.var_value / self.mean_value
        return float(rng.gamma(shape, scale))


@dataclass(frozen=True)
class GroundTruthItem:
    id: int
    attraction: float
    post_click: object

    def __post_init__(self):
        if not 0.0 <= self.attraction <= 1.0:
            raise ValueError("attraction of item {} isn't in [0, 1]: {}".format(self.id, self.attraction))

    def expected_value(self):
        return self.post_click.mean()


@dataclass(frozen=True)
class UserBehaviorKind:
    """
    cascade_sim: users scan top-down and leave after their first click
    position_based_sim: every rank is examined independently with its probability from position_probs
    """
    variant: str = CASCADE_SIM
    position_probs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in (CASCADE_SIM, POSITION_BASED_SIM):
            raise ValueError("unknown user behavior: '{}'".format(self.variant))
        if self.variant == POSITION_BASED_SIM:
            validate_position_probs(self.position_probs)

    def examination_at(self, rank):
        return self.position_probs.get(rank, 0.0)


def _world_item(world, item):
    try:
        return world[item]
    except KeyError as err:
        raise UnknownItemException(item, 'world') from err


def simulate_impression(ranking, world, behavior, rng):
    items = [_world_item(world, item) for item in ranking]
    clicks = [False] * len(items)
    post_clicks = [None] * len(items)
    for pos, truth in enumerate(items):
        if behavior.variant == POSITION_BASED_SIM and rng.random() >= behavior.examination_at(pos + 1):
            continue
        if rng.random() < truth.attraction:
            clicks[pos] = True
            post_clicks[pos] = truth.post_click.draw(rng)
            if behavior.variant == CASCADE_SIM:
                break
    return ImpressionRecord(ranking, tuple(clicks), tuple(post_clicks))


def gen_ec_world(num_items, rng):
    """
    E-commerce items whose post-click value is a purchase at a random price with a random conversion rate.
    """
    attraction = rng.uniform(0.0, 0.5, num_items)
    price = rng.uniform(1.0, 1000.0, num_items)
    conversion_rate = rng.uniform(0.0, 0.5, num_items)
    return {item: GroundTruthItem(item, float(attraction[item]),
                                  ScaledBernoulli(float(conversion_rate[item]), float(price[item])))
            for item in range(num_items)}


def gen_letor_world(relevance, rng):
    """
    Items of one query with dwell times and attraction that grow with their relevance label.
    """
    world = {}
    for item in sorted(relevance):
        label = relevance[item]
        if label not in RELEVANCE_LABELS:
            raise DataInvalidException("relevance label of item {} isn't one of {}: {}".format(
                item, list(RELEVANCE_LABELS), label))
        mean_dwell = (label + 1) * rng.uniform(1.0, 20.0)
        attraction = min((label + 1) * rng.uniform(0.0, 0.5), 1.0)
        world[item] = GroundTruthItem(item, float(attraction), Exponential(float(mean_dwell)))
    return world


def gen_news_world(table):
    """
    News articles from a table of item id -> (attraction, mean dwell time, dwell time variance).
    """
    return {int(item): GroundTruthItem(int(item), attraction, GammaDwell(mean_dwell, var_dwell))
            for item, (attraction, mean_dwell, var_dwell) in sorted(table.items())}


def true_variances(world):
    return {item: truth.post_click.variance() for item, truth in world.items()}


def gen_input_rankings(world, duplication_k, num_rankings, depth, rng):
    """
    Every ranking contains the top duplication_k items by expected value per impression, filled up with random other
    items and shuffled.
    """
    if duplication_k > depth:
        raise ConfigInvalidException("duplication_k ({}) can't be larger than depth ({})".format(duplication_k, depth))
    if depth > len(world):
        raise ConfigInvalidException("can't fill rankings of depth {} from {} items".format(depth, len(world)))
    by_value = sorted(world, key=lambda item: (-world[item].attraction * world[item].expected_value(), item))
    top = by_value[:duplication_k]
    rest = np.array(sorted(by_value[duplication_k:]))
    rankings = []
    for _ in range(num_rankings):
        fill = rng.choice(rest, size=depth - duplication_k, replace=False) if depth > duplication_k else []
        items = np.array(list(top) + [int(item) for item in fill])
        rankings.append(Ranking(tuple(int(item) for item in rng.permutation(items))))
    return RankingSet(tuple(rankings))


def letor_input_rankings(feature_table, features, depth, sample_size=None, rng=None):
    """
    One ranking per feature column, each sorting the items by that feature in descending order. When sample_size is
    given, only that many randomly selected items are ranked.
    """
    missing = [feature for feature in features if feature not in feature_table.columns]
    if len(missing) > 0:
        raise DataInvalidException("feature columns not found: {} (available: {})".format(
            missing, list(feature_table.columns)))
    table = feature_table
    if sample_size is not None and sample_size < len(table):
        chosen = rng.choice(np.array(sorted(table.index)), size=sample_size, replace=False)
        table = table.loc[sorted(int(item) for item in chosen)]
    if depth > len(table):
        raise ConfigInvalidException("can't fill rankings of depth {} from {} items".format(depth, len(table)))
    table = table.rename_axis('item_id').reset_index()
    rankings = []
    for feature in features:
        ordered = table.sort_values([feature, 'item_id'], ascending=[False, True], kind='mergesort')
        rankings.append(Ranking(tuple(int(item) for item in ordered['item_id'].iloc[:depth])))
    return RankingSet(tuple(rankings))


def true_click_probs(ranking, world, behavior=None):
    """
    Click probability at each position for simulated users.
    """
    behavior = UserBehaviorKind() if behavior is None else behavior
    attraction = np.array([_world_item(world, item).attraction for item in ranking])
    if behavior.variant == POSITION_BASED_SIM:
        return np.array([behavior.examination_at(rank) for rank in range(1, len(ranking) + 1)]) * attraction
    # Users reach a position only if they didn't click anything above it
    reached = np.concatenate(([1.0], np.cumprod(1.0 - attraction)[:-1]))
    return reached * attraction


def true_metric(ranking, world, behavior=None):
    means = np.array([_world_item(world, item).expected_value() for item in ranking])
    return float(np.dot(true_click_probs(ranking, world, behavior), means))


def ground_truth_preference(rankings, world, behavior=None):
    return PreferenceMatrix.from_metrics([true_metric(ranking, world, behavior) for ranking in rankings])


def interleaved_candidates(rankings, count, rng, depth=None):
    """
    Distinct rankings that team-draft interleaving of the input rankings can produce, preceded by the input rankings.
    """
    candidates = list(dict.fromkeys(rankings))
    for _ in range(count):
        ranking, _ = tdm_interleave(rankings, rng, depth)
        if ranking not in candidates:
            candidates.append(ranking)
    return candidates


def record_replay_log(world, rankings, behavior, impressions_per_ranking, rng, candidates=None):
    """
    Logged impressions for every candidate ranking (the input rankings by default), as a replay log would hold them.
    """
    candidates = list(rankings) if candidates is None else list(candidates)
    records = []
    for ranking in candidates:
        records.extend(simulate_impression(ranking, world, behavior, rng) for _ in range(impressions_per_ranking))
    return records
