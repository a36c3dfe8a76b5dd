import numpy as np
import pytest
from scipy import stats

from ordcrowd import continuous
from ordcrowd.dataset import OrdinalScale, RatingsTable
from ordcrowd.errors import NoRatings
from ordcrowd.fitting import FitConfig


def test_first_z_update_is_mean():
    tab = RatingsTable.from_triples([("a", "x", 1), ("a", "y", 4), ("b", "x", 2)], 5)
    v = OrdinalScale.default(5).value(tab.rating)
    assert continuous.update_z(np.ones(2), v, tab) == pytest.approx([2.5, 2.0])


def test_exact_agreement_hits_cap():
    tab = RatingsTable.from_triples([("a", "x", 3), ("b", "x", 5)], 5)
    fit = continuous.fit(tab)
    assert fit.params.tau[0] == continuous.TAU_CAP
    assert fit.extras["capped_annotators"] == [0]
    assert fit.z_hat == pytest.approx([3, 5])


def test_one_rating_per_instance_returns_values():
    tab = RatingsTable.from_triples([(f"m{i}", f"a{i % 3}", 1 + i % 5) for i in range(12)], 5)
    assert continuous.fit(tab).z_hat == pytest.approx(1 + np.arange(12) % 5)


def test_no_ratings():
    tab = RatingsTable.from_triples([("a", "x", 1)], 3, instance_ids=["a", "b"])
    with pytest.raises(NoRatings):
        continuous.fit(tab)


def test_recovers_precision_ordering_and_is_monotone():
    rng = np.random.default_rng(0)
    M, N = 100, 10
    z = rng.normal(3, 1, M)
    tau = np.geomspace(0.5, 20, N)
    triples = [(m, n, 0) for m in range(M) for n in range(N)]
    inst, ann, _ = map(np.array, zip(*triples))
    # real-valued ratings on a fine scale so the Gaussian model is exact
    x = z[inst] + rng.normal(size=inst.size) / np.sqrt(tau[ann])
    K = 2001
    scale = OrdinalScale(tuple(np.linspace(-7, 13, K)),
                         tuple(np.linspace(-7, 13, K)[:1] - 0.005) + tuple(np.linspace(-7, 13, K) + 0.005))
    r = np.clip(np.rint((x + 7) / 0.01).astype(int) + 1, 1, K)
    tab = RatingsTable(inst, ann, r, K)
    fit = continuous.fit(tab, scale, FitConfig(restarts=1, tol=1e-8))
    rho = stats.spearmanr(fit.params.tau, tau)[0]
    assert rho >= 0.8
    tr = np.array(fit.trace)
    assert np.all(np.diff(tr) >= -1e-9 * np.abs(tr[1:]))
    assert np.array_equal(fit.z_hat, continuous.fit(tab, scale, FitConfig(restarts=1, tol=1e-8)).z_hat)
    assert np.array_equal(continuous.predict(fit.params), fit.z_hat)
