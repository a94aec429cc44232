"""
dirveval - online comparison of rankings on post-click metrics

Policies deciding which ranking is presented for each impression: variance-minimising interleaving, team-draft
multileaving and plain A/B testing.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .core import Estimate, Ranking, PreferenceMatrix
from .estimator import EstimatorConfig, estimated_preference
from .objective import VarianceSnapshot
from .exp_config import ConfigInvalidException

_log = logging.getLogger(__name__)

DIRV = 'dirv'
DIRV_NO_VARPRED = 'dirv_no_varpred'
DIRV_NO_ERRCORR = 'dirv_no_errcorr'
TDM = 'tdm'
AB = 'ab'
POLICIES = (DIRV, DIRV_NO_VARPRED, DIRV_NO_ERRCORR, TDM, AB)


@dataclass(frozen=True)
class PolicyKind:
    variant: str = DIRV
    gamma: float = 1.0

    def __post_init__(self):
        if self.variant not in POLICIES:
            raise ConfigInvalidException("unknown policy '{}', expected one of: {}".format(
                self.variant, ', '.join(POLICIES)))
        if self.gamma < 0:
            raise ConfigInvalidException("gamma can't be negative: {}".format(self.gamma))

    @property
    def is_dirv(self):
        return self.variant in (DIRV, DIRV_NO_VARPRED, DIRV_NO_ERRCORR)

    @property
    def variance_prediction(self):
        return self.variant in (DIRV, DIRV_NO_ERRCORR)

    @property
    def error_correction(self):
        return self.variant in (DIRV, DIRV_NO_VARPRED)

    @property
    def effective_gamma(self):
        return self.gamma if self.error_correction else 0.0


@dataclass(frozen=True)
class TdmAssignment:
    """
    The team (input ranking index) that contributed the item at each position of an interleaved ranking.
    """
    team_of: tuple


def estimator_config_for(kind, click_kind, predictions, attraction_prior=0.0):
    """
    The estimator settings a policy runs with: ablations drop the variance predictions or the error correction.
    """
    if not kind.variance_prediction:
        predictions = {}
    return EstimatorConfig(kind=click_kind, predictions=predictions,
                           error_correction=kind.error_correction, attraction_prior=attraction_prior)


def dirv_greedy(state, cfg, depth, snapshot=None):
    if depth > len(state.rankings.universe):
        raise ConfigInvalidException("ranking depth {} is larger than the number of items {}".format(
            depth, len(state.rankings.universe)))
    if snapshot is None:
        snapshot = VarianceSnapshot(state, cfg)
    return snapshot.greedy(depth)


def dirv_select(state, cfg, gamma, depth=None, candidates=None, snapshot=None):
    """
    Pick the ranking minimising f + gamma * g. Without candidates these are the greedy ranking followed by the input
    rankings, otherwise only the given candidates are considered. Ties go to the earliest candidate.
    """
    if snapshot is None:
        snapshot = VarianceSnapshot(state, cfg)
    if candidates is None:
        if depth is None:
            depth = len(state.rankings[0])
        candidates = [dirv_greedy(state, cfg, depth, snapshot)] + list(state.rankings)
    else:
        candidates = list(candidates)
        if len(candidates) == 0:
            raise ReplayExhaustedException()
    scores = [snapshot.f(candidate) + (gamma * snapshot.g(candidate) if gamma > 0 else 0.0)
              for candidate in candidates]
    return candidates[int(np.argmin(scores))]


def tdm_interleave(rankings, rng, depth=None):
    """
    Team-draft multileaving: in each round the teams take turns in random order, each appending its highest ranked item
    that isn't placed yet. Stops at the given depth or when every team has run out of items.
    """
    lists = [list(ranking) for ranking in rankings]
    if depth is None:
        depth = max(len(items) for items in lists)
    placed, placed_set, team_of = [], set(), []
    pointers = [0] * len(lists)
    while len(placed) < depth:
        progressed = False
        for team in rng.permutation(len(lists)):
            if len(placed) >= depth:
                break
            items = lists[team]
            while pointers[team] < len(items) and items[pointers[team]] in placed_set:
                pointers[team] += 1
            if pointers[team] == len(items):
                continue
            item = items[pointers[team]]
            placed.append(item)
            placed_set.add(item)
            team_of.append(int(team))
            progressed = True
        if not progressed:
            break
    return Ranking(tuple(placed)), TdmAssignment(tuple(team_of))


def tdm_credit(rec, assign, num_teams):
    """
    Credit per team: the post-click value of every clicked item goes to the team that contributed it.
    """
    credits = np.zeros(num_teams)
    for pos in rec.clicked_positions():
        credits[assign.team_of[pos]] += rec.post_clicks[pos]
    return credits


def ab_select(rankings, rng):
    rankings = list(rankings)
    return rankings[int(rng.integers(len(rankings)))]


def ab_estimate(ranking_stats):
    """
    Mean total post-click value per impression of a ranking that was presented verbatim.
    """
    if ranking_stats.n_impr_ranking == 0:
        return Estimate(0.0, True)
    return Estimate(ranking_stats.sum_x / ranking_stats.n_impr_ranking)


class Policy:
    """
    Base class of the ranking selection policies.
    """

    def __init__(self, kind, rankings, cfg, depth):
        self.kind = kind
        self.rankings = rankings
        self.cfg = cfg
        self.depth = depth

    @property
    def name(self):
        return self.kind.variant

    def select(self, state, rng, candidates=None):
        raise NotImplementedError()

    def observe(self, rec):
        pass

    def preference(self, state):
        raise NotImplementedError()


class DirvPolicy(Policy):

    def select(self, state, rng, candidates=None):
        snapshot = VarianceSnapshot(state, self.cfg)
        if candidates is not None:
            return dirv_select(state, self.cfg, self.kind.effective_gamma, candidates=candidates, snapshot=snapshot)
        return dirv_select(state, self.cfg, self.kind.effective_gamma, depth=self.depth, snapshot=snapshot)

    def preference(self, state):
        return estimated_preference(state, self.cfg)


class AbPolicy(Policy):

    def select(self, state, rng, candidates=None):
        return ab_select(self.rankings if candidates is None else candidates, rng)

    def preference(self, state):
        return PreferenceMatrix.from_metrics([ab_estimate(stats).value for stats in state.ranking_stats])


class TdmPolicy(Policy):
    """
    Team-draft multileaving where a team's credit is the post-click value of its clicked items. A team wins an
    impression against another team when its credit is strictly larger.
    """

    def __init__(self, kind, rankings, cfg, depth):
        super().__init__(kind, rankings, cfg, depth)
        self.wins = np.zeros((len(rankings), len(rankings)))
        self._pending = None

    def select(self, state, rng, candidates=None):
        if candidates is not None:
            raise ConfigInvalidException("team-draft multileaving can't be restricted to logged rankings")
        ranking, assign = tdm_interleave(self.rankings, rng, self.depth)
        self._pending = (ranking, assign)
        return ranking

    def observe(self, rec):
        if self._pending is None or self._pending[0] != rec.ranking:
            _log.warning("Ignoring feedback for ranking [{}] that wasn't drafted".format(rec.ranking))
            return
        credits = tdm_credit(rec, self._pending[1], len(self.rankings))
        self.wins += credits[:, None] > credits[None, :]
        self._pending = None

    def preference(self, state):
        return PreferenceMatrix(self.wins - self.wins.T)


def make_policy(kind, rankings, cfg, depth):
    if kind.is_dirv:
        return DirvPolicy(kind, rankings, cfg, depth)
    if kind.variant == TDM:
        return TdmPolicy(kind, rankings, cfg, depth)
    return AbPolicy(kind, rankings, cfg, depth)


class ReplayExhaustedException(Exception):
    """
    Exception raised when no logged ranking is left to choose from.
    """

    def __init__(self, message="no candidate rankings with logged impressions left"):
        super().__init__(message)
