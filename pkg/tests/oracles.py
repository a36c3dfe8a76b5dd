"""Independent reference computations used by several test modules."""
from itertools import product

import numpy as np


def enumerate_posterior(table, K, prior, lik):
    """Brute-force q(z_m = k) by summing the joint over all K^M labelings.

    ``lik(n, r, k)`` is p(rating r | truth k) for annotator n; ``prior`` is
    the K-vector class prior. Plain products, no logs, no factorisation.
    """
    M = table.M
    post = np.zeros((M, K))
    total = 0.0
    for z in product(range(K), repeat=M):
        p = 1.0
        for m in range(M):
            p *= prior[z[m]]
        for m, n, r in zip(table.instance, table.annotator, table.rating):
            p *= lik(int(n), int(r), z[m] + 1)
        total += p
        for m in range(M):
            post[m, z[m]] += p
    return post / total, np.log(total)


def small_table(rng, M=3, N=3, K=3, density=0.8):
    from ordcrowd.dataset import RatingsTable
    triples = [(f"i{m}", f"a{n}", int(rng.integers(1, K + 1)))
               for m in range(M) for n in range(N) if rng.random() < density or n == 0]
    ids = tuple(f"a{n}" for n in range(N))
    return RatingsTable.from_triples(triples, K, annotator_ids=ids)
