"""
dirveval - online comparison of rankings on post-click metrics

Domain types and the running tallies that every estimator reads from.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np

_log = logging.getLogger(__name__)


class Estimate(NamedTuple):
    """
    An estimated quantity plus a flag telling whether it came from a default because nothing was observed yet.
    """
    value: float
    cold_start: bool = False


@dataclass(frozen=True)
class Ranking:
    """
    An ordered list of item ids. Rankings are hashable and compare by position-wise identity of their items.
    """
    items: Tuple[int, ...]

    def __post_init__(self):
        items = tuple(int(item) for item in self.items)
        object.__setattr__(self, 'items', items)
        if len(items) == 0:
            raise MalformedRecordException("ranking can't be empty")
        if len(set(items)) != len(items):
            raise MalformedRecordException("ranking contains duplicate items: {}".format(list(items)))

    @property
    def depth(self):
        return len(self.items)

    def position_of(self, item):
        return self.items.index(item)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __contains__(self, item):
        return item in self.items

    def __getitem__(self, idx):
        return self.items[idx]

    def __str__(self):
        return ','.join(str(item) for item in self.items)


@dataclass(frozen=True)
class RankingSet:
    """
    The input rankings R under comparison, along with their item universe D.
    """
    rankings: Tuple[Ranking, ...]
    universe: frozenset = field(init=False)

    def __post_init__(self):
        rankings = tuple(r if isinstance(r, Ranking) else Ranking(tuple(r)) for r in self.rankings)
        if len(rankings) < 2:
            raise MalformedRecordException("at least 2 input rankings are required, got {}".format(len(rankings)))
        object.__setattr__(self, 'rankings', rankings)
        object.__setattr__(self, 'universe', frozenset(item for r in rankings for item in r))

    def index_of(self, ranking):
        """
        Index of the first input ranking that exactly matches the given ranking, or None.
        """
        for idx, input_ranking in enumerate(self.rankings):
            if input_ranking == ranking:
                return idx
        return None

    def sorted_universe(self):
        return sorted(self.universe)

    def __len__(self):
        return len(self.rankings)

    def __iter__(self):
        return iter(self.rankings)

    def __getitem__(self, idx):
        return self.rankings[idx]


@dataclass
class ItemStats:
    n_impr: int = 0
    n_exam: int = 0
    n_click: int = 0
    sum_x: float = 0.0
    sum_x2: float = 0.0


@dataclass
class PerRankingStats:
    """
    Tallies of the impressions where an input ranking was presented verbatim.
    """
    n_impr_ranking: int = 0
    n_click_by_item: dict = field(default_factory=lambda: defaultdict(int))
    # Total post-click value observed during those impressions
    sum_x: float = 0.0


@dataclass(frozen=True)
class ImpressionRecord:
    ranking: Ranking
    clicks: Tuple[bool, ...]
    post_clicks: Tuple[Optional[float], ...]

    def validate(self):
        depth = len(self.ranking)
        if len(self.clicks) != depth or len(self.post_clicks) != depth:
            raise MalformedRecordException(
                "ranking has {} positions, but got {} clicks and {} post-click values".format(
                    depth, len(self.clicks), len(self.post_clicks)))
        for pos, (clicked, value) in enumerate(zip(self.clicks, self.post_clicks)):
            if bool(clicked) != (value is not None):
                raise MalformedRecordException(
                    "position {} has click={} but post-click value {}".format(pos + 1, clicked, value))
            if value is not None and not np.isfinite(value):
                raise MalformedRecordException(
                    "post-click value at position {} isn't a finite number: {}".format(pos + 1, value))
            if value is not None and value < 0:
                raise MalformedRecordException("negative post-click value at position {}: {}".format(pos + 1, value))

    def clicked_positions(self):
        return [pos for pos, clicked in enumerate(self.clicks) if clicked]

    @classmethod
    def no_clicks(cls, ranking):
        depth = len(ranking)
        return cls(ranking, (False,) * depth, (None,) * depth)


class PreferenceMatrix:
    """
    Antisymmetric matrix where entry (i, j) holds the metric difference between ranking i and ranking j.
    """

    def __init__(self, values):
        values = np.array(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("preference matrix has to be square, got shape {}".format(values.shape))
        if not np.allclose(values, -values.T):
            raise ValueError("preference matrix isn't antisymmetric")
        self.values = values

    @classmethod
    def from_metrics(cls, metrics):
        metrics = np.asarray(metrics, dtype=float)
        return cls(metrics[:, None] - metrics[None, :])

    @property
    def size(self):
        return self.values.shape[0]

    def __getitem__(self, idx):
        return self.values[idx]

    def __neg__(self):
        return PreferenceMatrix(-self.values)

    def __repr__(self):
        return 'PreferenceMatrix({})'.format(self.values.tolist())


class ExperimentState:
    """
    All tallies for one experiment run: global per-item statistics plus per-ranking statistics for the inputs.
    """

    def __init__(self, rankings):
        self.rankings = rankings
        self.item_stats = defaultdict(ItemStats)
        self.ranking_stats = [PerRankingStats() for _ in rankings]
        self.impressions = 0

    def item(self, item_id):
        # Read-only access that doesn't create entries for unseen items
        return self.item_stats.get(item_id, _EMPTY_STATS)

    def matching_rankings(self, ranking):
        """
        Indexes of all input rankings identical to the given ranking.
        """
        return [idx for idx, input_ranking in enumerate(self.rankings) if input_ranking == ranking]


_EMPTY_STATS = ItemStats()


def record_impression(state, rec):
    """
    Add one presented ranking with its clicks and post-click values to the running tallies.

    Examination counts aren't touched here, see clickmodel.update_examination_counts().
    """
    rec.validate()
    for item in rec.ranking:
        state.item_stats[item].n_impr += 1
    total_x = 0.0
    for pos in rec.clicked_positions():
        value = float(rec.post_clicks[pos])
        stats = state.item_stats[rec.ranking[pos]]
        stats.n_click += 1
        stats.sum_x += value
        stats.sum_x2 += value * value
        total_x += value

    for idx in state.matching_rankings(rec.ranking):
        ranking_stats = state.ranking_stats[idx]
        ranking_stats.n_impr_ranking += 1
        ranking_stats.sum_x += total_x
        for pos in rec.clicked_positions():
            ranking_stats.n_click_by_item[rec.ranking[pos]] += 1
    state.impressions += 1
    return state


class MalformedRecordException(Exception):
    """
    Exception raised for rankings or impression records that don't fit together.
    """

    def __init__(self, message):
        super().__init__("Malformed record: {}".format(message))


class UnknownItemException(Exception):
    """
    Exception raised when an item isn't known to a lookup table.
    """

    def __init__(self, item, where='item table'):
        super().__init__("Unknown item {} (not found in {})".format(item, where))
        self.item = item
