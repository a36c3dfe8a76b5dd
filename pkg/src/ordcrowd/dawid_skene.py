"""
Dawid-Skene: ordinal levels treated as K unordered classes, one full
confusion matrix per annotator, fitted by EM.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dataset import OrdinalScale, RatingsTable
from .fitting import FitConfig, ModelFit, best_of_restarts, iterate

SMOOTHING = 1.0
INIT_JITTER = 0.1


@dataclass
class DsParams:
    pi: np.ndarray   # (K,) class prior
    phi: np.ndarray  # (N, K, K), phi[n, k, j] = p(r = j | z = k)


def class_loglik(log_confusion: np.ndarray, table: RatingsTable) -> np.ndarray:
    """(M, K) sum over an instance's ratings of log p(r_nm | z_m = k).

    ``log_confusion[n, k, j]`` is log p(r = j | z = k) for annotator n.
    """
    per_rating = log_confusion[table.annotator, :, table.rating - 1]  # (L, K)
    out = np.zeros((table.M, log_confusion.shape[1]))
    np.add.at(out, table.instance, per_rating)
    return out


def posterior_from_loglik(log_pi, loglik):
    """Normalised class posterior and the per-instance log evidence."""
    joint = loglik + log_pi[None, :]
    norm = logsumexp(joint, axis=1)
    return np.exp(joint - norm[:, None]), norm


def e_step(params: DsParams, table: RatingsTable) -> np.ndarray:
    """(M, K) posterior lambda[m, k] = q(z_m = k), computed in log space."""
    with np.errstate(divide="ignore"):
        lam, _ = posterior_from_loglik(np.log(params.pi),
                                       class_loglik(np.log(params.phi), table))
    return lam


def m_step(posterior: np.ndarray, table: RatingsTable, smoothing: float = SMOOTHING) -> DsParams:
    """Class prior and Dirichlet-smoothed confusion matrices.

    Each row phi[n, k, :] is the posterior mean under a symmetric
    Dirichlet(``smoothing``) prior: expected counts plus ``smoothing``,
    normalised, so rows with no evidence come out uniform.
    """
    K = table.K
    pi = posterior.mean(axis=0)
    counts = np.zeros((table.N, K, K))
    # counts[n, k, j] += lambda[m, k] for each rating (n, m, j)
    np.add.at(counts, (table.annotator, slice(None), table.rating - 1),
              posterior[table.instance])
    counts += smoothing
    return DsParams(pi, counts / counts.sum(axis=2, keepdims=True))


def log_likelihood(params: DsParams, table: RatingsTable) -> float:
    """Observed-data log likelihood, z marginalised out."""
    if len(table) == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        _, norm = posterior_from_loglik(np.log(params.pi), class_loglik(np.log(params.phi), table))
    return float(np.sum(norm))


def log_prior(params: DsParams, smoothing: float = SMOOTHING) -> float:
    """Log density (up to a constant) of the prior the smoothed M-step maximises.

    Adding ``smoothing`` to the counts is the MAP estimate under
    Dirichlet(1 + smoothing), whose log density is
    ``smoothing * sum(log phi)``.
    """
    return float(smoothing * np.sum(np.log(params.phi)))


def objective(params: DsParams, table: RatingsTable) -> float:
    """Penalised log likelihood, the quantity each EM iteration increases."""
    return log_likelihood(params, table) + log_prior(params)


def initial_posterior(table: RatingsTable, rng=None, jitter: float = INIT_JITTER) -> np.ndarray:
    """Per-instance vote shares, optionally jittered; unrated rows uniform."""
    votes = np.zeros((table.M, table.K))
    np.add.at(votes, (table.instance, table.rating - 1), 1.0)
    votes[votes.sum(axis=1) == 0] = 1.0
    if rng is not None and jitter > 0:
        votes = votes + jitter * rng.random(votes.shape) * votes.sum(axis=1, keepdims=True)
    return votes / votes.sum(axis=1, keepdims=True)


def predict(posterior: np.ndarray, scale: OrdinalScale) -> np.ndarray:
    """Posterior mean over the scale values."""
    return posterior @ scale.v


def fit(table: RatingsTable, config: FitConfig | None = None,
        scale: OrdinalScale | None = None) -> ModelFit:
    """EM from jittered vote shares; the first restart starts unjittered."""
    config = config or FitConfig()
    scale = scale or OrdinalScale.default(table.K)
    counter = iter(range(config.restarts))

    def run_one(rng):
        lam = initial_posterior(table, rng if next(counter) > 0 else None)
        params = m_step(lam, table)

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
