from itertools import product

import numpy as np
import pytest

from ordcrowd import ord_binary as ob
from ordcrowd.dataset import RatingsTable
from ordcrowd.errors import InvalidCode
from ordcrowd.fitting import FitConfig

from oracles import enumerate_posterior, small_table


def test_encode_decode():
    assert [ob.encode(k, 3).tolist() for k in (1, 2, 3)] == [[0, 0], [1, 0], [1, 1]]
    assert ob.decode([1, 0]) == 2
    with pytest.raises(InvalidCode):
        ob.decode([0, 1])
    with pytest.raises(InvalidCode):
        ob.decode([2, 0])
    for K in range(2, 8):
        for k in range(1, K + 1):
            assert ob.encode(k, K).sum() == k - 1
            assert ob.decode(ob.encode(k, K)) == k


def random_params(rng, N, K):
    return ob.ObParams(rng.dirichlet(np.ones(K)), rng.uniform(0.05, 0.95, (N, K - 1)),
                       rng.uniform(0.05, 0.95, (N, K - 1)))


def test_table_cells():
    p = ob.ObParams(np.full(3, 1 / 3), np.array([[0.9, 0.8]]), np.array([[0.7, 0.6]]))
    # true 2 (10), observed 2 (10): sens_1 * spec_2
    assert ob.rating_likelihood(2, 2, p, 0) == pytest.approx(0.9 * 0.6)
    # true 1 (00), observed 3 (11)
    assert ob.rating_likelihood(3, 1, p, 0) == pytest.approx(0.3 * 0.4)


def test_rows_sum_to_one_over_all_codes():
    rng = np.random.default_rng(0)
    for K in (2, 3, 4, 5):
        p = random_params(rng, 1, K)
        for k in range(1, K + 1):
            total = sum(ob.code_likelihood(np.array(c), k, p, 0) for c in product((0, 1), repeat=K - 1))
            assert total == pytest.approx(1.0, abs=1e-14)


def test_e_step_matches_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(10):
        K = int(rng.integers(2, 5))
        tab = small_table(rng, M=3, N=3, K=K)
        p = random_params(rng, tab.N, K)
        ref, log_total = enumerate_posterior(tab, K, p.pi, lambda n, r, k: ob.rating_likelihood(r, k, p, n))
        lam = ob.e_step(p, tab)
        assert np.abs(lam - ref).max() < 1e-10
        assert lam.shape == (tab.M, K)  # support is the K valid truths only
        assert ob.log_likelihood(p, tab) == pytest.approx(log_total, abs=1e-10)


def test_e_step_consistent_annotator():
    tab = RatingsTable.from_triples([("m", "a", 2)], 3)
    p = ob.ObParams(np.full(3, 1 / 3), np.full((1, 2), 1 - 1e-12), np.full((1, 2), 1 - 1e-12))
    assert ob.e_step(p, tab)[0] == pytest.approx([0, 1, 0], abs=1e-9)


def test_threshold_posterior():
    assert ob.threshold_posterior(np.array([[1.0, 0, 0]])).tolist() == [[0, 0]]
    assert ob.threshold_posterior(np.array([[0.2, 0.3, 0.5]])) == pytest.approx(np.array([[0.8, 0.5]]))


def test_m_step_smoothing_and_invariants():
    tab = RatingsTable.from_triples([("a", "x", 3), ("b", "x", 1)], 3)
    p = ob.m_step(np.array([[0, 0, 1.0], [1.0, 0, 0]]), tab)
    # each threshold: one positive seen positive, one negative seen negative
    assert p.sens == pytest.approx(np.full((1, 2), 2 / 3))
    assert p.spec == pytest.approx(np.full((1, 2), 2 / 3))
    assert p.pi == pytest.approx([0.5, 0, 0.5])
    assert np.all((p.sens > 0) & (p.sens < 1))


def test_k2_is_two_coin_model():
    rng = np.random.default_rng(2)
    tab = small_table(rng, M=4, N=3, K=2)
    p = random_params(rng, tab.N, 2)
    sens, spec = p.sens[:, 0], p.spec[:, 0]

    def two_coin(n, r, k):
        if k == 2:
            return sens[n] if r == 2 else 1 - sens[n]
        return spec[n] if r == 1 else 1 - spec[n]

    ref, _ = enumerate_posterior(tab, 2, p.pi, two_coin)
    assert np.abs(ob.e_step(p, tab) - ref).max() < 1e-12


def generate(rng, M=300, N=20, K=3, R=5):
    z = rng.integers(1, K + 1, size=M)
    sens = rng.uniform(0.75, 0.95, (N, K - 1))
    spec = rng.uniform(0.75, 0.95, (N, K - 1))
    triples = []
    for m in range(M):
        zb = ob.encode(z[m], K)
        for n in rng.choice(N, size=R, replace=False):
            # draw bits until the code is valid (observations always are)
            while True:
                p1 = np.where(zb == 1, sens[n], 1 - spec[n])
                bits = (rng.random(K - 1) < p1).astype(int)
                if np.all(np.diff(bits) <= 0):
                    break
            triples.append((m, int(n), ob.decode(bits)))
    inst, ann, r = map(np.array, zip(*triples))
    return RatingsTable(inst, ann, r, K, tuple(range(M)), tuple(range(N))), z


def test_fit_recovers_and_is_monotone():
    tab, z = generate(np.random.default_rng(3))
    fit = ob.fit(tab, FitConfig(restarts=3, seed=0))
    assert np.mean(fit.posterior.argmax(axis=1) + 1 == z) >= 0.85
    tr = np.array(fit.trace)
    assert np.all(np.diff(tr) >= -1e-8 * np.abs(tr[1:]))
    assert np.array_equal(fit.z_hat, ob.fit(tab, FitConfig(restarts=3, seed=0)).z_hat)
