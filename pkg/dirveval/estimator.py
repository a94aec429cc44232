"""
dirveval - online comparison of rankings on post-click metrics

Post-click metric estimators. The metric of a ranking is decomposed into the click probability of each of its items times
the mean post-click value of that item, so every click on an item counts towards all rankings containing it.
"""
import math
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import Estimate, PreferenceMatrix
from .clickmodel import ClickModelKind, attraction_table, click_probs
from .exp_config import ConfigInvalidException

_log = logging.getLogger(__name__)

ORACLE_NOISE = 'oracle_noise'
CONSTANT = 'constant'
TABLE = 'table'


@dataclass(frozen=True)
class VariancePredictor:
    """
    Source of predicted per-item post-click variances.

    oracle_noise: uniform draw on [0, 2 * true variance] (simulation only)
    constant: the same value for every item (a value of 0 turns variance prediction off)
    table: externally produced predictions per item, 0 for items missing from the table
    """
    kind: str = CONSTANT
    value: float = 0.0
    table: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (ORACLE_NOISE, CONSTANT, TABLE):
            raise ValueError("unknown variance predictor: '{}'".format(self.kind))
        if self.value < 0 or any(v < 0 for v in self.table.values()):
            raise ValueError("predicted variances can't be negative")


@dataclass(frozen=True)
class EstimatorConfig:
    """
    Settings shared by the estimators, the variance objectives and the interleaving policies.

    predictions: frozen predicted variance per item (see freeze_predictions())
    error_correction: blend model click probabilities with observed per-ranking click-through rates
    """
    kind: ClickModelKind = field(default_factory=ClickModelKind)
    predictions: dict = field(default_factory=dict)
    error_correction: bool = False
    attraction_prior: float = 0.0
    default_mean: float = 0.0

    def predicted_variance(self, item):
        return self.predictions.get(item, 0.0)


def item_mean(stats, default=0.0):
    if stats.n_click == 0:
        return Estimate(default, True)
    return Estimate(stats.sum_x / stats.n_click)


def item_variance(stats):
    """
    Unbiased sample variance of the post-click values, or None when fewer than two values were observed.
    """
    count = stats.n_click
    if count < 2:
        return None
    numerator = stats.sum_x2 - stats.sum_x * stats.sum_x / count
    # Rounding can push the numerator of a constant sample slightly below zero
    return max(numerator, 0.0) / (count - 1)


def clipped_variance(observed, predicted):
    """
    The larger of the observed and predicted variance, since underestimating an item's variance starves it of exposure.
    """
    if observed is None:
        return predicted
    return max(observed, predicted)


def model_click_probs(ranking, state, cfg):
    attraction = attraction_table(state, ranking, cfg.attraction_prior)
    return click_probs(ranking, attraction, cfg.kind)


def model_agnostic_ctr(ranking, ranking_stats, item):
    """
    Click-through rate of the item over the impressions where the ranking was presented verbatim.
    """
    if item not in ranking:
        raise DomainException("item {} isn't part of ranking [{}]".format(item, ranking))
    if ranking_stats.n_impr_ranking == 0:
        return Estimate(0.0, True)
    return Estimate(ranking_stats.n_click_by_item.get(item, 0) / ranking_stats.n_impr_ranking)


def blend_weight(n_impr_ranking):
    return 1.0 / math.sqrt(n_impr_ranking + 1)


def blended_click_prob(model_prob, ctr, n_impr_ranking):
    """
    Weights the click model heavily while a ranking has few verbatim impressions and shifts to its observed CTR later.
    """
    theta = blend_weight(n_impr_ranking)
    return theta * model_prob + (1.0 - theta) * ctr


def input_click_probs(idx, state, cfg):
    """
    Click probabilities for the items of the input ranking with the given index, blended with its CTR if enabled.
    """
    ranking = state.rankings[idx]
    probs = model_click_probs(ranking, state, cfg)
    if not cfg.error_correction:
        return probs
    ranking_stats = state.ranking_stats[idx]
    ctrs = [model_agnostic_ctr(ranking, ranking_stats, item).value for item in ranking]
    return np.array([blended_click_prob(prob, ctr, ranking_stats.n_impr_ranking) for prob, ctr in zip(probs, ctrs)])


def ranking_metric_estimate(ranking, state, cfg, probs=None):
    """
    Expected post-click metric of a ranking as the sum over its items of click probability times mean post-click value.
    """
    if probs is None:
        probs = model_click_probs(ranking, state, cfg)
    means = [item_mean(state.item(item), cfg.default_mean).value for item in ranking]
    return float(np.dot(probs, means))


def estimated_preference(state, cfg):
    metrics = [ranking_metric_estimate(ranking, state, cfg, probs=input_click_probs(idx, state, cfg))
               for idx, ranking in enumerate(state.rankings)]
    return PreferenceMatrix.from_metrics(metrics)


def predict_variance(pred, item, truth=None, rng=None):
    if pred.kind == CONSTANT:
        return pred.value
    if pred.kind == TABLE:
        return pred.table.get(item, 0.0)
    if truth is None:
        raise ConfigInvalidException("oracle-noise variance prediction needs the true variance of item {}".format(item))
    return float(rng.uniform(0.0, 2.0 * truth))


def freeze_predictions(pred, items, truths=None, rng=None):
    """
    Draw one prediction per item at the start of an experiment, kept fixed for the rest of the run.
    """
    truths = {} if truths is None else truths
    return {item: predict_variance(pred, item, truths.get(item), rng) for item in sorted(items)}


class DomainException(Exception):
    """
    Exception raised when an estimator is asked about an item outside its ranking.
    """
