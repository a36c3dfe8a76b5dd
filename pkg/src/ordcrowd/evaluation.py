"""
Accuracy metrics, fake-annotator spam injection and a sampler for the
ordinal mixture generative process.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import (
    CategoryMap,
    GroundTruth,
    OrdinalScale,
    RatingsTable,
)
from .errors import UndefinedCorrelation

REPORT_COLUMNS = ("method", "spam_level", "mse", "correlation", "ndcg")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _covered(z_true, z_hat, coverage):
    z_true = np.asarray(z_true, dtype=float)
    z_hat = np.asarray(z_hat, dtype=float)
    if z_true.shape != z_hat.shape:
        raise ValueError("z_true and z_hat must have the same shape")
    if coverage is None:
        mask = ~np.isnan(z_true)
    else:
        coverage = np.asarray(coverage)
        if coverage.dtype == bool:
            mask = coverage
        else:
            mask = np.zeros(z_true.shape, dtype=bool)
            mask[coverage] = True
    return z_true[mask], z_hat[mask], mask


def mse(z_true, z_hat, coverage=None) -> float:
    """Mean squared error over covered instances."""
    t, h, _ = _covered(z_true, z_hat, coverage)
    if t.size == 0:
        raise ValueError("no covered instances")
    return float(np.mean((t - h) ** 2))


def pearson(z_true, z_hat, coverage=None) -> float:
    t, h, _ = _covered(z_true, z_hat, coverage)
    if t.size < 2:
        raise UndefinedCorrelation("need at least two covered instances")
    dt, dh = t - t.mean(), h - h.mean()
    st, sh = np.sqrt(np.sum(dt * dt)), np.sqrt(np.sum(dh * dh))
    if st == 0 or sh == 0:
        raise UndefinedCorrelation("zero variance")
    return float(np.clip(np.sum(dt * dh) / (st * sh), -1.0, 1.0))


def dcg(relevance) -> float:
    rel = np.asarray(relevance, dtype=float)
    discounts = np.log2(np.arange(2, rel.size + 2))
    return float(np.sum((2.0 ** rel - 1.0) / discounts))


def ndcg(z_true, z_hat, query_map, coverage=None):
    """Mean per-query NDCG with exponential gain and full-depth lists.

    Instances are ranked by ``z_hat`` descending (ties broken by instance
    index). Queries with fewer than two covered instances are skipped; a
    query whose ideal DCG is zero scores 1. Returns ``(mean, per_query)``
    where ``per_query`` maps query index to its NDCG.
    """
    z_true = np.asarray(z_true, dtype=float)
    z_hat = np.asarray(z_hat, dtype=float)
    _, _, mask = _covered(z_true, z_hat, coverage)
    queries = query_map.category if isinstance(query_map, CategoryMap) else np.asarray(query_map)
    per_query = {}
    for q in np.unique(queries[mask]):
        idx = np.flatnonzero(mask & (queries == q))
        if idx.size < 2:
            continue
        order = idx[np.lexsort((idx, -z_hat[idx]))]
        ideal = np.sort(z_true[idx])[::-1]
        best = dcg(ideal)
        per_query[int(q)] = 1.0 if best == 0 else dcg(z_true[order]) / best
    mean = float(np.mean(list(per_query.values()))) if per_query else float("nan")
    return mean, per_query


@dataclass
class EvalReport:
    mse: float
    correlation: float
    ndcg: float
    per_query_ndcg: dict = field(default_factory=dict)
    covered: int = 0


def evaluate(truth: GroundTruth, z_hat, queries: CategoryMap | np.ndarray | None = None) -> EvalReport:
    """MSE, Pearson correlation and mean NDCG over the covered instances."""
    cov = truth.covered
    try:
        corr = pearson(truth.values, z_hat, cov)
    except UndefinedCorrelation:
        corr = float("nan")
    if queries is None:
        nd, per = float("nan"), {}
    else:
        nd, per = ndcg(truth.values, z_hat, queries, cov)
    return EvalReport(mse(truth.values, z_hat, cov), corr, nd, per, int(cov.sum()))


def format_report_row(method: str, spam_level, report: EvalReport) -> str:
    return "\t".join([method, str(spam_level), f"{report.mse:.6g}",
                      f"{report.correlation:.6g}", f"{report.ndcg:.6g}"])


# ---------------------------------------------------------------------------
# Spam injection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpamConfig:
    """Uniform fake ratings added per instance by fake annotators."""

    fake_per_instance: int
    seed: int = 0
    prefix: str = "fake"

    def __post_init__(self):
        if not 0 <= self.fake_per_instance <= 9:
            raise ValueError("fake_per_instance must be in 0..9")


def n_fake_annotators(table: RatingsTable, fake_per_instance: int) -> int:
    """Fake annotators needed so their mean load matches the real mean load."""
    if fake_per_instance == 0:
        return 0
    load = len(table) / table.N
    n = int(round(table.M * fake_per_instance / load))
    # at least one fake annotator per fake rating of an instance
    return max(n, fake_per_instance)


def inject_spam(table: RatingsTable, cfg: SpamConfig) -> RatingsTable:
    """Append ``fake_per_instance`` uniform ratings to every instance.

    Fake ratings are dealt to fake annotators round-robin over a shuffled
    instance order, so no fake annotator rates an instance twice and every
    fake annotator carries about the real average load.
    """
    f = cfg.fake_per_instance
    if f == 0:
        return table
    rng = np.random.default_rng(cfg.seed)
    n_fake = n_fake_annotators(table, f)
    existing = set(table.annotator_ids)
    ids, i = [], 0
    while len(ids) < n_fake:
        cand = f"{cfg.prefix}_{i}"
        if cand not in existing:
            ids.append(cand)
        i += 1
    order = rng.permutation(table.M)
    inst = np.repeat(order, f)
    slots = np.arange(inst.size) % n_fake
    ann = table.N + rng.permutation(n_fake)[slots]
    ratings = rng.integers(1, table.K + 1, size=inst.size)
    return table.with_ratings(inst, ann, ratings, table.annotator_ids + tuple(ids))


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Sizes and true parameters for :func:`synth_generate`.

    ``epsilon_levels`` lists ``(epsilon, fraction)`` pairs; annotators are
    split between the levels in exactly those proportions (largest
    remainder) and then shuffled.
    """

    M: int = 500
    N: int = 30
    K: int = 5
    C: int = 1
    ratings_per_instance: int = 4
    alpha: float = 4.0
    beta: float = 1.0
    phi: float = 10.0
    eta: float = 10.0
    mu: float | None = None
    lam: float = 1.0
    epsilon_levels: tuple = ((0.95, 0.8), (0.05, 0.2))
    pi: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if min(self.M, self.N, self.K, self.C, self.ratings_per_instance) < 1:
            raise ValueError("all counts must be positive")
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.ratings_per_instance > self.N:
            raise ValueError("ratings_per_instance cannot exceed N")
        fracs = [fr for _, fr in self.epsilon_levels]
        if not np.isclose(sum(fracs), 1.0) or min(fracs) < 0:
            raise ValueError("epsilon fractions must be nonnegative and sum to 1")

    @property
    def scale(self) -> OrdinalScale:
        return OrdinalScale.default(self.K)


@dataclass
class SynthParams:
    z: np.ndarray
    tau: np.ndarray
    delta: np.ndarray
    epsilon: np.ndarray
    category: np.ndarray
    y: np.ndarray
    x: np.ndarray
    pi: np.ndarray

    def as_dict(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in vars(self).items()}


def _split_counts(n, fractions):
    raw = np.asarray(fractions) * n
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
    return counts


def synth_generate(cfg: SynthConfig):
    """Sample ratings, truth and latents from the ordinal mixture model.

    Returns ``(table, truth, categories, params)``.
    """
    rng = np.random.default_rng(cfg.seed)
    scale = cfg.scale
    K = cfg.K
    mu = float(np.mean(scale.values)) if cfg.mu is None else cfg.mu
    pi = np.full(K, 1.0 / K) if cfg.pi is None else np.asarray(cfg.pi, dtype=float)

    delta = rng.gamma(cfg.phi, 1.0 / cfg.eta, size=cfg.C)
    tau = rng.gamma(cfg.alpha, 1.0 / cfg.beta, size=cfg.N)
    z = rng.normal(mu, 1.0 / np.sqrt(cfg.lam), size=cfg.M)
    levels = [e for e, _ in cfg.epsilon_levels]
    counts = _split_counts(cfg.N, [fr for _, fr in cfg.epsilon_levels])
    epsilon = rng.permutation(np.repeat(levels, counts))
    category = np.sort(rng.integers(0, cfg.C, size=cfg.M)) if cfg.C > 1 else np.zeros(cfg.M, int)
    if cfg.C > 1:
        # every category non-empty
        category[:cfg.C] = np.arange(cfg.C)
        category = rng.permutation(category)

    R = cfg.ratings_per_instance
    ann = np.concatenate([rng.choice(cfg.N, size=R, replace=False) for _ in range(cfg.M)])
    inst = np.repeat(np.arange(cfg.M), R)
    y = rng.random(inst.size) < epsilon[ann]
    sd = 1.0 / np.sqrt(tau[ann] * delta[category[inst]])
    x = z[inst] + sd * rng.standard_normal(inst.size)
    spam = rng.choice(K, size=inst.size, p=pi) + 1
    rating = np.where(y, scale.level_of(x), spam)

    table = RatingsTable(inst, ann, rating, K,
                         tuple(f"i{m}" for m in range(cfg.M)),
                         tuple(f"a{n}" for n in range(cfg.N)))
    cats = CategoryMap(category, tuple(f"c{c}" for c in range(cfg.C)))
    params = SynthParams(z, tau, delta, epsilon, category, y.astype(int),
                         np.where(y, x, np.nan), pi)
    return table, GroundTruth(z), cats, params


def rating_probabilities(scale: OrdinalScale, z, precision, epsilon, pi) -> np.ndarray:
    """P(r = k) under the generative model, rows per (z, precision, epsilon).

    Uses the same edge clamping as the sampler: mass below b_0 goes to level
    1 and mass above b_K to level K.
    """
    from scipy.stats import norm
    z = np.asarray(z, dtype=float)[:, None]
    sd = 1.0 / np.sqrt(np.asarray(precision, dtype=float))[:, None]
    edges = scale.b.copy()
    edges[0], edges[-1] = -np.inf, np.inf
    cdf = norm.cdf((edges[None, :] - z) / sd)
    signal = np.diff(cdf, axis=1)
    eps = np.asarray(epsilon, dtype=float)[:, None]
    return eps * signal + (1 - eps) * np.asarray(pi)[None, :]


# ---------------------------------------------------------------------------
# Spam sweep
# ---------------------------------------------------------------------------

def spam_sweep(table: RatingsTable, truth: GroundTruth, estimators: Mapping[str, Callable],
               levels: Sequence[int], queries=None, seed: int = 0) -> list:
    """Evaluate each estimator on spam-injected copies of ``table``.

    ``estimators`` maps a method name to ``f(table) -> z_hat``; fake
    annotators only add ratings, so instance indices and truth stay aligned.
    Returns ``(method, level, EvalReport)`` tuples.
    """
    rows = []
    for level in levels:
        noisy = inject_spam(table, SpamConfig(int(level), seed=seed + int(level)))
        for name, estimate in estimators.items():
            rows.append((name, int(level), evaluate(truth, estimate(noisy), queries)))
    return rows
