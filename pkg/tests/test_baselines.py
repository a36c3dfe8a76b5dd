import numpy as np
import pytest
from hypothesis import given, strategies as st

from ordcrowd.baselines import majority_vote, mean_agg, median_agg
from ordcrowd.dataset import RatingsTable
from ordcrowd.errors import NoRatings


def single(ratings, K=5):
    return RatingsTable.from_triples([("m", f"a{i}", r) for i, r in enumerate(ratings)], K)


@pytest.mark.parametrize("ratings,expected", [([1, 2, 3], 2), ([4], 4), ([5, 5, 1], 11 / 3)])
def test_mean(ratings, expected):
    assert mean_agg(single(ratings))[0] == pytest.approx(expected)


@pytest.mark.parametrize("ratings,expected", [([1, 2, 4, 5], 3), ([2], 2), ([1, 1, 5], 1)])
def test_median(ratings, expected):
    assert median_agg(single(ratings))[0] == expected


@pytest.mark.parametrize("ratings,expected", [([3, 3, 5], 3), ([2, 2, 4, 4], 3), ([1], 1)])
def test_majority(ratings, expected):
    assert majority_vote(single(ratings))[0] == expected


def test_no_ratings():
    t = RatingsTable.from_triples([("a", "x", 1)], 3, instance_ids=["a", "b"])
    for f in (mean_agg, median_agg, majority_vote):
        with pytest.raises(NoRatings):
            f(t)


@given(st.lists(st.lists(st.integers(1, 5), min_size=1, max_size=8), min_size=1, max_size=10))
def test_range_and_unanimity(groups):
    triples = [(f"m{m}", f"a{i}", r) for m, g in enumerate(groups) for i, r in enumerate(g)]
    t = RatingsTable.from_triples(triples, 5)
    outs = [f(t) for f in (mean_agg, median_agg, majority_vote)]
    for out in outs:
        assert np.all((out >= 1) & (out <= 5))
    for m, g in enumerate(groups):
        if len(set(g)) == 1:
            assert all(out[m] == g[0] for out in outs)
