"""
Multi-class GLAD: an annotator with expertise a_n labels instance m (inverse
difficulty b_m > 0) correctly with probability sigmoid(a_n b_m); the K-1
wrong labels share the remainder equally.

EM with a partial M-step: the class prior has a closed form, while (a,
log b) take a fixed budget of conjugate-gradient evaluations on the
expected complete-data log likelihood plus N(1, 1) log priors on a_n and
log b_m.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, logsumexp

from .dataset import OrdinalScale, RatingsTable
from .fitting import FitConfig, ModelFit, best_of_restarts, iterate
from .numerics import cg_minimize

CG_EVALS = 25
PRIOR_MEAN = 1.0
INIT_JITTER = 0.1


@dataclass
class GladParams:
    pi: np.ndarray     # (K,)
    a: np.ndarray      # (N,) expertise
    log_b: np.ndarray  # (M,) log inverse difficulty

    @property
    def b(self) -> np.ndarray:
        return np.exp(self.log_b)


def likelihood_term(r, k, a, b, K: int):
    """p(r | z = k) = sigmoid(a b) if r == k else (1 - sigmoid(a b)) / (K - 1)."""
    s = np.asarray(a) * np.asarray(b)
    return np.where(np.asarray(r) == np.asarray(k), expit(s), expit(-s) / (K - 1))


def _log_terms(params: GladParams, table: RatingsTable):
    """Per-rating log p(correct) and log p(each specific wrong label)."""
    s = params.a[table.annotator] * params.b[table.instance]
    return log_expit(s), log_expit(-s) - np.log(table.K - 1)


def class_loglik(params: GladParams, table: RatingsTable) -> np.ndarray:
    """(M, K) sum over an instance's ratings of log p(r_nm | z_m = k)."""
    right, wrong = _log_terms(params, table)
    out = np.zeros((table.M, table.K))
    # every class gets the wrong-label term, then the rated class is corrected
    np.add.at(out, table.instance, wrong[:, None] * np.ones(table.K))
    np.add.at(out, (table.instance, table.rating - 1), right - wrong)
    return out


def _joint(params, table):
    with np.errstate(divide="ignore"):
        return class_loglik(params, table) + np.log(params.pi)[None, :]


def e_step(params: GladParams, table: RatingsTable) -> np.ndarray:
    joint = _joint(params, table)
    return np.exp(joint - logsumexp(joint, axis=1, keepdims=True))


def log_prior(params: GladParams) -> float:
    """N(1, 1) log densities on a_n and log b_m, constants dropped."""
    return float(-0.5 * np.sum((params.a - PRIOR_MEAN) ** 2)
                 - 0.5 * np.sum((params.log_b - PRIOR_MEAN) ** 2))


def log_likelihood(params: GladParams, table: RatingsTable) -> float:
    if len(table) == 0:
        return 0.0
    return float(np.sum(logsumexp(_joint(params, table), axis=1)))


def objective(params: GladParams, table: RatingsTable) -> float:
    """Penalised marginal log likelihood, increased by every EM iteration."""
    return log_likelihood(params, table) + log_prior(params)


def q_objective(x, posterior: np.ndarray, table: RatingsTable):
    """Negated Q(a, log b) + log priors and its gradient, for the minimiser.

    ``x`` stacks a (N entries) and log b (M entries). With s = a_n b_m and
    w = posterior mass on the observed label, each rating contributes
    w log sigmoid(s) + (1 - w) (log sigmoid(-s) - log(K - 1)), whose
    derivative in s is w - sigmoid(s).
    """
    N = table.N
    a, log_b = x[:N], x[N:]
    b = np.exp(log_b)
    s = a[table.annotator] * b[table.instance]
    w = posterior[table.instance, table.rating - 1]
    q = np.sum(w * log_expit(s) + (1 - w) * (log_expit(-s) - np.log(table.K - 1)))
    q += -0.5 * np.sum((a - PRIOR_MEAN) ** 2) - 0.5 * np.sum((log_b - PRIOR_MEAN) ** 2)
    ds = w - expit(s)
    ga = np.bincount(table.annotator, weights=ds * b[table.instance], minlength=N) - (a - PRIOR_MEAN)
    # chain rule through b = exp(log b)
    gb = np.bincount(table.instance, weights=ds * s, minlength=table.M) - (log_b - PRIOR_MEAN)
    return -q, -np.concatenate([ga, gb])


def m_step(params: GladParams, posterior: np.ndarray, table: RatingsTable,
           max_evals: int = CG_EVALS) -> GladParams:
    """Closed-form prior, then a budgeted CG run on (a, log b).

    The minimiser never returns a point worse than its start, so the
    penalised objective cannot decrease; a stalled line search is recorded
    on the returned params' ``stalled`` attribute.
    """
    pi = posterior.mean(axis=0)
    x0 = np.concatenate([params.a, params.log_b])
    res = cg_minimize(lambda x: q_objective(x, posterior, table), x0, max_evals=max_evals)
    new = GladParams(pi, res.x[:table.N].copy(), res.x[table.N:].copy())
    new.stalled = res.stalled
    return new


def initial_params(table: RatingsTable, rng=None, jitter: float = INIT_JITTER) -> GladParams:
    """Prior means a = 1, log b = 1 and a uniform class prior."""
    a = np.full(table.N, PRIOR_MEAN)
    log_b = np.full(table.M, PRIOR_MEAN)
    if rng is not None and jitter > 0:
        a = a + jitter * rng.standard_normal(table.N)
    return GladParams(np.full(table.K, 1.0 / table.K), a, log_b)


def predict(posterior: np.ndarray, scale: OrdinalScale) -> np.ndarray:
    return posterior @ scale.v


def fit(table: RatingsTable, config: FitConfig | None = None,
        scale: OrdinalScale | None = None) -> ModelFit:
    """EM from the prior means; later restarts jitter the expertise."""
    config = config or FitConfig()
    scale = scale or OrdinalScale.default(table.K)
    counter = iter(range(config.restarts))

    def run_one(rng):
        params = initial_params(table, rng if next(counter) > 0 else None)

        def step(p):
            return m_step(p, e_step(p, table), table)

        params, trace, converged = iterate(
            params, step, lambda p: objective(p, table), config.max_iters, config.tol)
        lam = e_step(params, table)
        return ModelFit(predict(lam, scale), trace[-1], trace, len(trace), 0,
                        params, lam, converged,
                        {"log_likelihood": log_likelihood(params, table)})

    best, ran = best_of_restarts(run_one, config)
    best.restarts_run = ran
    return best
