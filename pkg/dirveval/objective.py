"""
dirveval - online comparison of rankings on post-click metrics

Variance of the decomposed ranking metric and the objectives used to pick the ranking to present.

Each item of an input ranking contributes

    phi = p(1-p)/n_impr * V/n_click + p^2 * V/n_click + mean^2 * p(1-p)/n_impr

to the variance of that ranking's estimate, where p is the item's click probability at its position in the ranking, mean and
V are the item's post-click mean and variance, and n_impr/n_click its impression and click counts.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .core import Ranking
from .clickmodel import CASCADE, estimate_attraction, next_examination
from .estimator import item_mean, item_variance, clipped_variance, model_click_probs, input_click_probs, blend_weight

_log = logging.getLogger(__name__)

# Stand-in for the unbounded variance of an item without any observed clicks
PHI_CAP = 1e12
COUNT_FLOOR = 1.0


@dataclass(frozen=True)
class PhiInputs:
    p_click: float
    mean_x: float
    var_x: float
    n_impr: float
    n_click: float


def phi_terms(p_click, mean_x, var_x, n_impr, n_click):
    """
    Vectorised phi. Counts below one are floored to one.
    """
    n_impr = np.maximum(n_impr, COUNT_FLOOR)
    n_click = np.maximum(n_click, COUNT_FLOOR)
    click_var = p_click * (1.0 - p_click)
    return (click_var / n_impr) * (var_x / n_click) + p_click * p_click * (var_x / n_click) + \
        mean_x * mean_x * (click_var / n_impr)


def state_phi(p_click, mean_x, var_x, n_impr, n_click):
    """
    Phi at the counts observed so far, capped for items that were never shown or never clicked.
    """
    uncapped = phi_terms(p_click, mean_x, var_x, n_impr, n_click)
    return np.where((np.asarray(n_impr) <= 0) | (np.asarray(n_click) <= 0), PHI_CAP, uncapped)


def ranking_stats_phi(p_click, mean_x, var_x, n_impr_ranking, n_click):
    """
    Phi at the counts of a ranking's verbatim impressions, capped while the ranking was never presented verbatim.
    """
    uncapped = phi_terms(p_click, mean_x, var_x, n_impr_ranking, n_click)
    return np.where(np.asarray(n_impr_ranking) <= 0, PHI_CAP, uncapped)


def phi(inputs):
    return float(phi_terms(inputs.p_click, inputs.mean_x, inputs.var_x, inputs.n_impr, inputs.n_click))


def current_phi(inputs):
    return float(state_phi(inputs.p_click, inputs.mean_x, inputs.var_x, inputs.n_impr, inputs.n_click))


def item_inputs(item, p_click, state, cfg):
    stats = state.item(item)
    return PhiInputs(p_click=float(p_click),
                     mean_x=item_mean(stats, cfg.default_mean).value,
                     var_x=clipped_variance(item_variance(stats), cfg.predicted_variance(item)),
                     n_impr=stats.n_impr,
                     n_click=stats.n_click)


def after_impression(inputs, expected_clicks):
    """
    Inputs as they are expected to be after one more impression with the given expected number of clicks.
    """
    return PhiInputs(inputs.p_click, inputs.mean_x, inputs.var_x, inputs.n_impr + 1, inputs.n_click + expected_clicks)


def ranking_variance(ranking, state, cfg, probs=None):
    """
    Variance of the decomposed metric estimate of a ranking. Click probabilities default to those of the click model.
    """
    if probs is None:
        probs = model_click_probs(ranking, state, cfg)
    return sum(current_phi(item_inputs(item, prob, state, cfg)) for item, prob in zip(ranking, probs))


def total_variance(state, cfg):
    return sum(ranking_variance(ranking, state, cfg, probs=input_click_probs(idx, state, cfg))
               for idx, ranking in enumerate(state.rankings))


def f_objective(ranking, state, cfg):
    """
    Total variance over all input rankings expected after presenting the given ranking once.
    """
    expected = dict(zip(ranking, model_click_probs(ranking, state, cfg)))
    total = 0.0
    for idx, input_ranking in enumerate(state.rankings):
        for item, prob in zip(input_ranking, input_click_probs(idx, state, cfg)):
            inputs = item_inputs(item, prob, state, cfg)
            if item in expected:
                total += phi(after_impression(inputs, expected[item]))
            else:
                total += current_phi(inputs)
    return total


def greedy_gain(item, prefix, state, cfg):
    """
    Reduction of the total variance from appending the item to the bottom of a partial ranking.
    """
    expected_clicks = model_click_probs(Ranking(tuple(prefix) + (item,)), state, cfg)[-1]
    gain = 0.0
    for idx, input_ranking in enumerate(state.rankings):
        if item not in input_ranking:
            continue
        prob = input_click_probs(idx, state, cfg)[input_ranking.position_of(item)]
        inputs = item_inputs(item, prob, state, cfg)
        gain += current_phi(inputs) - phi(after_impression(inputs, expected_clicks))
    return gain


def g_objective(ranking, state, cfg):
    """
    Variance of the per-ranking click-through estimates, weighted by how much each ranking still relies on the click model.
    Only an input ranking identical to the presented one gets its counts updated.
    """
    presented = model_click_probs(ranking, state, cfg)
    total = 0.0
    for idx, input_ranking in enumerate(state.rankings):
        ranking_stats = state.ranking_stats[idx]
        theta = blend_weight(ranking_stats.n_impr_ranking)
        matched = input_ranking == ranking
        probs = input_click_probs(idx, state, cfg)
        for pos, (item, prob) in enumerate(zip(input_ranking, probs)):
            inputs = item_inputs(item, prob, state, cfg)
            inputs = PhiInputs(inputs.p_click, inputs.mean_x, inputs.var_x,
                               ranking_stats.n_impr_ranking, ranking_stats.n_click_by_item.get(item, 0))
            if matched:
                total += theta * phi(after_impression(inputs, presented[pos]))
            else:
                total += theta * float(ranking_stats_phi(inputs.p_click, inputs.mean_x, inputs.var_x,
                                                         inputs.n_impr, inputs.n_click))
    return total


class VarianceSnapshot:
    """
    Vectorised view of an experiment state for scoring many candidate rankings against the same state.

    Every (input ranking, position) pair is one "membership" row; per-item values are gathered into these rows.
    """

    def __init__(self, state, cfg):
        self.cfg = cfg
        self.rankings = state.rankings
        self.items = sorted(state.rankings.universe)
        self.index = {item: idx for idx, item in enumerate(self.items)}
        stats = [state.item(item) for item in self.items]
        self.attraction = np.array([estimate_attraction(s, cfg.attraction_prior).value for s in stats])
        self.mean = np.array([item_mean(s, cfg.default_mean).value for s in stats])
        self.var = np.array([clipped_variance(item_variance(s), cfg.predicted_variance(item))
                             for item, s in zip(self.items, stats)])
        self.n_impr = np.array([s.n_impr for s in stats], dtype=float)
        self.n_click = np.array([s.n_click for s in stats], dtype=float)

        mem_item, mem_ranking, mem_pos, mem_p, rank_impr, rank_click = [], [], [], [], [], []
        self.theta = np.zeros(len(self.rankings))
        for idx, ranking in enumerate(self.rankings):
            ranking_stats = state.ranking_stats[idx]
            self.theta[idx] = blend_weight(ranking_stats.n_impr_ranking)
            for pos, (item, prob) in enumerate(zip(ranking, input_click_probs(idx, state, cfg))):
                mem_item.append(self.index[item])
                mem_ranking.append(idx)
                mem_pos.append(pos)
                mem_p.append(prob)
                rank_impr.append(ranking_stats.n_impr_ranking)
                rank_click.append(ranking_stats.n_click_by_item.get(item, 0))
        self.mem_item = np.array(mem_item, dtype=int)
        self.mem_ranking = np.array(mem_ranking, dtype=int)
        self.mem_pos = np.array(mem_pos, dtype=int)
        self.mem_p = np.array(mem_p, dtype=float)
        self.rank_impr = np.array(rank_impr, dtype=float)
        self.rank_click = np.array(rank_click, dtype=float)

        self._mean = self.mean[self.mem_item]
        self._var = self.var[self.mem_item]
        self.current = state_phi(self.mem_p, self._mean, self._var,
                                 self.n_impr[self.mem_item], self.n_click[self.mem_item])
        self.g_current = self.theta[self.mem_ranking] * ranking_stats_phi(self.mem_p, self._mean, self._var,
                                                                          self.rank_impr, self.rank_click)

    def total_variance(self):
        return float(self.current.sum())

    def expected_clicks(self, ranking):
        """
        Click-model click probability of each position of a ranking of items from the universe.
        """
        attract = self.attraction[[self.index[item] for item in ranking]]
        kind = self.cfg.kind
        if kind.variant != CASCADE:
            return np.array([kind.examination_at(rank) for rank in range(1, len(ranking) + 1)]) * attract
        exam = np.ones(len(ranking))
        for pos in range(1, len(ranking)):
            exam[pos] = next_examination(exam[pos - 1], attract[pos - 1])
        return exam * attract

    def _after(self, item_clicks):
        rows = self.mem_item
        return phi_terms(self.mem_p, self._mean, self._var, self.n_impr[rows] + 1, self.n_click[rows] + item_clicks[rows])

    def f(self, ranking):
        shown = np.zeros(len(self.items), dtype=bool)
        item_clicks = np.zeros(len(self.items))
        rows = [self.index[item] for item in ranking]
        shown[rows] = True
        item_clicks[rows] = self.expected_clicks(ranking)
        return float(np.where(shown[self.mem_item], self._after(item_clicks), self.current).sum())

    def g(self, ranking):
        matched = np.array([input_ranking == ranking for input_ranking in self.rankings])
        if not matched.any():
            return float(self.g_current.sum())
        clicks = self.expected_clicks(ranking)
        rows = np.nonzero(matched[self.mem_ranking])[0]
        after = self.g_current.copy()
        after[rows] = self.theta[self.mem_ranking[rows]] * phi_terms(
            self.mem_p[rows], self._mean[rows], self._var[rows],
            self.rank_impr[rows] + 1, self.rank_click[rows] + clicks[self.mem_pos[rows]])
        return float(after.sum())

    def gains(self, item_clicks):
        """
        Variance reduction per item when it's appended at a position where it gets the given expected clicks.
        """
        return np.bincount(self.mem_item, weights=self.current - self._after(item_clicks), minlength=len(self.items))

    def greedy(self, depth):
        """
        Build a ranking top-down, each time appending the remaining item with the largest variance reduction.

        Ties go to the smallest item id.
        """
        available = np.ones(len(self.items), dtype=bool)
        chosen = []
        exam = 1.0
        kind = self.cfg.kind
        for pos in range(depth):
            if kind.variant == CASCADE:
                item_clicks = exam * self.attraction
            else:
                item_clicks = kind.examination_at(pos + 1) * self.attraction
            gains = np.where(available, self.gains(item_clicks), -np.inf)
            best = int(np.argmax(gains))
            available[best] = False
            chosen.append(self.items[best])
            exam = next_examination(exam, self.attraction[best])
        return Ranking(tuple(chosen))
