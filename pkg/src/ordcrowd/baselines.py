"""Per-instance mean, median and majority vote over the scale values."""
from __future__ import annotations

import numpy as np

from .dataset import OrdinalScale, RatingsTable
from .errors import NoRatings


def _groups(table: RatingsTable, scale: OrdinalScale | None):
    scale = scale or OrdinalScale.default(table.K)
    empty = np.flatnonzero(table.instance_counts == 0)
    if empty.size:
        raise NoRatings(f"instance {table.instance_ids[empty[0]]!r} has no ratings")
    values = scale.value(table.rating)
    return [values[idx] for idx in table.by_instance], scale


def mean_agg(table: RatingsTable, scale: OrdinalScale | None = None) -> np.ndarray:
    groups, _ = _groups(table, scale)
    return np.array([g.mean() for g in groups])


def median_agg(table: RatingsTable, scale: OrdinalScale | None = None) -> np.ndarray:
    groups, _ = _groups(table, scale)
    return np.array([np.median(g) for g in groups])


def majority_vote(table: RatingsTable, scale: OrdinalScale | None = None) -> np.ndarray:
    """Modal level per instance; tied modes are averaged."""
    scale = scale or OrdinalScale.default(table.K)
    _groups(table, scale)
    votes = np.zeros((table.M, table.K))
    np.add.at(votes, (table.instance, table.rating - 1), 1.0)
    modal = votes == votes.max(axis=1, keepdims=True)
    return (modal @ scale.v) / modal.sum(axis=1)
