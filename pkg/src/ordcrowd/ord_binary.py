"""
Ord-Binary: a K-level label becomes K-1 Frank-Hall indicators 1[level > k],
and each annotator has a sensitivity and a specificity per threshold (a
two-coin model per bit). EM over the K valid ground-truth codes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dataset import OrdinalScale, RatingsTable
from .errors import InvalidCode
from .fitting import FitConfig, ModelFit, best_of_restarts, iterate

INIT_RATE = 0.7
INIT_JITTER = 0.05


@dataclass
class ObParams:
    pi: np.ndarray    # (K,)
    sens: np.ndarray  # (N, K-1), p(bit = 1 | true bit = 1)
    spec: np.ndarray  # (N, K-1), p(bit = 0 | true bit = 0)


def encode(level: int, K: int) -> np.ndarray:
    """Frank-Hall bits: bit k (k = 1..K-1) is 1[level > k]."""
    if not 1 <= level <= K:
        raise ValueError(f"level {level} outside 1..{K}")
    return (level > np.arange(1, K)).astype(int)


def decode(code) -> int:
    bits = np.asarray(code)
    if bits.ndim != 1 or not np.isin(bits, (0, 1)).all():
        raise InvalidCode(f"not a binary code: {code!r}")
    if np.any(np.diff(bits) > 0):
        raise InvalidCode(f"code {''.join(map(str, bits))} is not monotone")
    return int(bits.sum()) + 1


def code_matrix(K: int) -> np.ndarray:
    """(K, K-1) matrix whose row k-1 is encode(k)."""
    return (np.arange(1, K + 1)[:, None] > np.arange(1, K)[None, :]).astype(int)


def code_likelihood(bits, k: int, params: ObParams, n: int) -> float:
    """p(observed bits | true level k) for annotator n; any 0/1 code allowed."""
    r = np.asarray(bits)
    z = encode(k, params.pi.size)
    a, b = params.sens[n], params.spec[n]
    per_bit = np.where(z == 1, np.where(r == 1, a, 1 - a), np.where(r == 0, b, 1 - b))
    return float(np.prod(per_bit))


def rating_likelihood(r: int, k: int, params: ObParams, n: int) -> float:
    return code_likelihood(encode(r, params.pi.size), k, params, n)


def class_loglik(params: ObParams, table: RatingsTable) -> np.ndarray:
    """(M, K) sum over an instance's ratings of log p(r_nm | z_m = k)."""
    C = code_matrix(table.K)
    r = C[table.rating - 1]                        # (L, K-1)
    sens, spec = params.sens[table.annotator], params.spec[table.annotator]
    pos = r * np.log(sens) + (1 - r) * np.log1p(-sens)    # true bit 1
    neg = (1 - r) * np.log(spec) + r * np.log1p(-spec)    # true bit 0
    per_rating = pos @ C.T + neg @ (1 - C).T              # (L, K)
    out = np.zeros((table.M, table.K))
    np.add.at(out, table.instance, per_rating)
    return out


def _joint(params, table):
    with np.errstate(divide="ignore"):
        return class_loglik(params, table) + np.log(params.pi)[None, :]


def e_step(params: ObParams, table: RatingsTable) -> np.ndarray:
    """Posterior over the K valid truth codes; invalid codes get no mass."""
    joint = _joint(params, table)
    return np.exp(joint - logsumexp(joint, axis=1, keepdims=True))


def threshold_posterior(posterior: np.ndarray) -> np.ndarray:
    """gamma[m, k] = q(z_m > k) for k = 1..K-1."""
    return posterior @ code_matrix(posterior.shape[1])


def m_step(posterior: np.ndarray, table: RatingsTable) -> ObParams:
    """Ratio updates with add-one smoothing: (count + 1) / (total + 2)."""
    K, N = table.K, table.N
    gamma = threshold_posterior(posterior)[table.instance]   # (L, K-1)
    r = code_matrix(K)[table.rating - 1]
    ann = table.annotator

    def per_annotator(w):
        out = np.zeros((N, K - 1))
        np.add.at(out, ann, w)
        return out

    sens = (per_annotator(gamma * r) + 1) / (per_annotator(gamma) + 2)
    spec = (per_annotator((1 - gamma) * (1 - r)) + 1) / (per_annotator(1 - gamma) + 2)
    return ObParams(posterior.mean(axis=0), sens, spec)


def log_likelihood(params: ObParams, table: RatingsTable) -> float:
    if len(table) == 0:
        return 0.0
    return float(np.sum(logsumexp(_joint(params, table), axis=1)))


def log_prior(params: ObParams) -> float:
    """Beta(2, 2) log densities (constants dropped) matching the smoothing."""
    return float(np.sum(np.log(params.sens) + np.log1p(-params.sens)
                        + np.log(params.spec) + np.log1p(-params.spec)))


def objective(params: ObParams, table: RatingsTable) -> float:
    """Penalised log likelihood, the quantity each EM iteration increases."""
    return log_likelihood(params, table) + log_prior(params)


def initial_params(table: RatingsTable, rng=None, jitter: float = INIT_JITTER) -> ObParams:
    shape = (table.N, table.K - 1)
    sens = np.full(shape, INIT_RATE)
    spec = np.full(shape, INIT_RATE)
    if rng is not None and jitter > 0:
        sens = sens + rng.uniform(-jitter, jitter, shape)
        spec = spec + rng.uniform(-jitter, jitter, shape)
    return ObParams(np.full(table.K, 1.0 / table.K), sens, spec)


def predict(posterior: np.ndarray, scale: OrdinalScale) -> np.ndarray:
    return posterior @ scale.v


def fit(table: RatingsTable, config: FitConfig | None = None,
        scale: OrdinalScale | None = None) -> ModelFit:
    """EM from sens = spec = 0.7; later restarts jitter them."""
    config = config or FitConfig()
    scale = scale or OrdinalScale.default(table.K)
    counter = iter(range(config.restarts))

    def run_one(rng):
        params = initial_params(table, rng if next(counter) > 0 else None)

        def step(p):
            return m_step(e_step(p, table), table)

        params, trace, converged = iterate(
            params, step, lambda p: objective(p, table), config.max_iters, config.tol)
        lam = e_step(params, table)
        return ModelFit(predict(lam, scale), trace[-1], trace, len(trace), 0,
                        params, lam, converged,
                        {"log_likelihood": log_likelihood(params, table)})

    best, ran = best_of_restarts(run_one, config)
    best.restarts_run = ran
    return best
