"""
dirveval - online comparison of rankings on post-click metrics

Click probabilities under the examination hypothesis: a click happens when an item is both examined and attractive.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import Estimate, UnknownItemException

_log = logging.getLogger(__name__)

CASCADE = 'cascade'
POSITION_BASED = 'position_based'


@dataclass(frozen=True)
class ClickModelKind:
    """
    Either the cascade model or a position-based model with a fixed table g: rank -> examination probability.

    Ranks beyond the end of the table are never examined.
    """
    variant: str = CASCADE
    position_probs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in (CASCADE, POSITION_BASED):
            raise ValueError("unknown click model: '{}'".format(self.variant))
        if self.variant == POSITION_BASED:
            validate_position_probs(self.position_probs)

    def examination_at(self, rank):
        return self.position_probs.get(rank, 0.0)

    def __hash__(self):
        return hash((self.variant, tuple(sorted(self.position_probs.items()))))


def validate_position_probs(position_probs):
    if len(position_probs) == 0:
        raise ValueError("position-based model requires a table of position probabilities")
    for rank, prob in position_probs.items():
        if rank < 1:
            raise ValueError("ranks start at 1, got {}".format(rank))
        if not 0.0 <= prob <= 1.0:
            raise ValueError("position probability for rank {} isn't in [0, 1]: {}".format(rank, prob))
    ranks = sorted(position_probs)
    probs = [position_probs[rank] for rank in ranks]
    if any(later > earlier for earlier, later in zip(probs, probs[1:])):
        _log.warning("Position probabilities increase with rank: {}".format(probs))


def estimate_attraction(stats, prior=0.0):
    """
    Fraction of examinations that led to a click, or the prior for items that were never examined.
    """
    if stats.n_exam == 0:
        return Estimate(prior, True)
    return Estimate(min(max(stats.n_click / stats.n_exam, 0.0), 1.0))


def attraction_table(state, items, prior=0.0):
    return {item: estimate_attraction(state.item(item), prior).value for item in items}


def _lookup(attraction, ranking):
    try:
        return np.array([attraction[item] for item in ranking], dtype=float)
    except KeyError as err:
        raise UnknownItemException(err.args[0], 'attraction estimates') from err


def examination_probs(ranking, attraction, kind):
    """
    Examination probability at each position of the ranking.

    For the cascade model position j is examined with probability prod_{k<j} (1 - a_k): users scan from the top and leave
    at their first click, so a position is reached only when every item above it was examined and not clicked.
    """
    attract = _lookup(attraction, ranking)
    if kind.variant == POSITION_BASED:
        return np.array([kind.examination_at(rank) for rank in range(1, len(attract) + 1)], dtype=float)
    exam = np.ones(len(attract))
    for pos in range(1, len(attract)):
        exam[pos] = next_examination(exam[pos - 1], attract[pos - 1])
    return exam


def click_probs(ranking, attraction, kind):
    """
    Click probability at each position, which is also the expected number of clicks on each item for one impression.
    """
    return examination_probs(ranking, attraction, kind) * _lookup(attraction, ranking)


def next_examination(exam, attract):
    """
    Cascade examination probability of the position after one with the given examination and attraction.
    """
    return exam * (1.0 - attract)


def update_examination_counts(state, rec):
    """
    Items from the top down to the last click count as examined. Without any clicks every item counts as examined.
    """
    clicked = rec.clicked_positions()
    last = clicked[-1] + 1 if len(clicked) > 0 else len(rec.ranking)
    for item in rec.ranking[:last]:
        state.item_stats[item].n_exam += 1
    return state

