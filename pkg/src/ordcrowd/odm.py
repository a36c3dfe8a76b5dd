"""
Ordinal-discrete-mixture model fitted by variational Bayes.

Each rating r_nm is either spam (y=0, drawn from a fixed distribution pi)
or (y=1) the bin containing a latent x_nm ~ N(z_m, 1/(tau_n delta_c(m))).
Ground truth z_m has a Gaussian prior, annotator expertise tau_n and
category inverse difficulty delta_c have gamma priors, and y_nm ~ Be(eps_n).

The variational family is q(z) q(tau) q(delta) q(x, y) with Gaussian,
gamma, gamma and (Bernoulli x truncated-Gaussian) factors. ``e_step`` does
one coordinate-ascent sweep over all factors, ``m_step`` re-estimates
eps_n and the gamma prior (alpha, beta) by type-II maximum likelihood, and
``elbo`` evaluates the bound both steps increase.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import digamma, expit, gammaln, xlogy

from .dataset import CategoryMap, OrdinalScale, RatingsTable, build_category_map
from .errors import NumericalFailure
from .fitting import FitConfig, best_of_restarts
from .numerics import fit_gamma_ml, gamma_expectations, truncnorm_moments

EPS_CLAMP = 1e-4
INIT_JITTER = 0.25
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class OdmHyperParams:
    """Hyperparameters plus the two ablation switches.

    ``mu`` defaults to the mean of the scale values and ``pi`` to uniform.
    ``responsibility`` selects the q(y) update. The default ``"printed"``
    is the Gaussian kernel evaluated at E[(x - z)^2] with plug-in
    precision; ``"exact"`` is the coordinate-ascent optimum, which also
    counts the entropy of the truncated x factor (the bin-mass form).
    """

    scale: OrdinalScale
    epsilon: np.ndarray
    alpha: float = 2.0
    beta: float = 2.0
    phi: float = 10.0
    eta: float = 5.0
    mu: float | None = None
    lam: float = 0.1
    pi: np.ndarray | None = None
    use_ordinal_link: bool = True
    use_spam_mixture: bool = True
    responsibility: str = "printed"
    learn_gamma_prior: bool = True

    def __post_init__(self):
        K = self.scale.K
        pi = np.full(K, 1.0 / K) if self.pi is None else np.asarray(self.pi, dtype=float)
        mu = float(np.mean(self.scale.values)) if self.mu is None else float(self.mu)
        eps = np.array(self.epsilon, dtype=float)
        if pi.shape != (K,) or np.any(pi <= 0) or not np.isclose(pi.sum(), 1.0):
            raise ValueError("pi must be a strictly positive K-vector summing to 1")
        if min(self.alpha, self.beta, self.phi, self.eta, self.lam) <= 0:
            raise ValueError("alpha, beta, phi, eta and lam must be positive")
        if eps.ndim != 1 or np.any((eps < 0) | (eps > 1)):
            raise ValueError("epsilon must be a vector with entries in [0, 1]")
        if self.responsibility not in ("exact", "printed"):
            raise ValueError("responsibility must be 'exact' or 'printed'")
        eps.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "epsilon", eps)

    @classmethod
    def default(cls, scale: OrdinalScale, n_annotators: int, epsilon0: float = 0.9, **kw):
        return cls(scale=scale, epsilon=np.full(n_annotators, epsilon0), **kw)


@dataclass
class OdmVariationalState:
    """Variational parameters; per-rating arrays follow the table's order."""

    mu_m: np.ndarray
    lambda_m: np.ndarray
    alpha_n: np.ndarray
    beta_n: np.ndarray
    phi_c: np.ndarray
    eta_c: np.ndarray
    omega: np.ndarray
    nu: np.ndarray
    rho: np.ndarray
    xbar: np.ndarray
    xvar: np.ndarray
    log_mass: np.ndarray

    @property
    def x2bar(self) -> np.ndarray:
        return self.xvar + self.xbar ** 2

    def copy(self) -> "OdmVariationalState":
        return OdmVariationalState(**{k: v.copy() for k, v in vars(self).items()})


@dataclass
class OdmFitResult:
    z_hat: np.ndarray
    state: OdmVariationalState
    hypers: OdmHyperParams
    elbo: float
    elbo_trace: list
    iterations: int
    restarts_run: int
    spamminess: np.ndarray
    expertise: np.ndarray
    inv_difficulty: np.ndarray
    converged: bool = False
    restart_elbos: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _expectations(state):
    tau, log_tau = gamma_expectations(state.alpha_n, state.beta_n)
    delta, log_delta = gamma_expectations(state.phi_c, state.eta_c)
    return tau, log_tau, delta, log_delta


def _bin_moments(nu, rho, lower, upper):
    mean, var, logz, bad = truncnorm_moments(nu, 1.0 / rho, lower, upper)
    if np.any(bad):
        # bin too far out to resolve: uniform-on-bin surrogate
        width = (upper - lower)[bad]
        mid = 0.5 * (lower + upper)[bad]
        mean[bad] = mid
        var[bad] = width ** 2 / 12.0
        logz[bad] = (np.log(width) + 0.5 * np.log(rho[bad]) - 0.5 * _LOG_2PI
                     - 0.5 * rho[bad] * (mid - nu[bad]) ** 2)
    return mean, var, logz


def _expected_sq_error(state, table):
    """E_q[(x_nm - z_m)^2] for every rating."""
    inst = table.instance
    return state.xvar + (state.xbar - state.mu_m[inst]) ** 2 + 1.0 / state.lambda_m[inst]


def _signal_loglik(state, table, cat, hypers, exps=None):
    """Expected log weight of the non-spam branch for every rating.

    E_q[log N(x | z, 1/(tau delta))] plus, with the ordinal link, the
    entropy of the truncated-Gaussian factor q(x | y=1).
    """
    tau, log_tau, delta, log_delta = exps or _expectations(state)
    ann = table.annotator
    prec = tau[ann] * delta[cat]
    out = (0.5 * (log_tau[ann] + log_delta[cat]) - 0.5 * _LOG_2PI
           - 0.5 * prec * _expected_sq_error(state, table))
    if hypers.use_ordinal_link:
        spread = state.xvar + (state.xbar - state.nu) ** 2
        out = out + (state.log_mass + 0.5 * (_LOG_2PI - np.log(state.rho))
                     + 0.5 * state.rho * spread)
    return out


def _log_odds(eps):
    with np.errstate(divide="ignore"):
        return np.log(eps) - np.log1p(-eps)


def _check_finite(state, table):
    for name in ("omega", "xbar", "xvar", "log_mass"):
        arr = getattr(state, name)
        bad = ~np.isfinite(arr)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise NumericalFailure(
                f"non-finite {name}",
                where=(int(table.annotator[i]), int(table.instance[i])))
    for name in ("mu_m", "lambda_m", "alpha_n", "beta_n", "phi_c", "eta_c"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise NumericalFailure(f"non-finite {name}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def _update_xy(state, table, cat, hypers):
    scale = hypers.scale
    exps = _expectations(state)
    tau, _, delta, _ = exps
    prec = tau[table.annotator] * delta[cat]
    state.rho = prec
    if hypers.use_ordinal_link:
        state.nu = state.mu_m[table.instance].copy()
        state.xbar, state.xvar, state.log_mass = _bin_moments(
            state.nu, state.rho, scale.lower(table.rating), scale.upper(table.rating))
    else:
        state.nu = scale.value(table.rating).astype(float)
        state.xbar = state.nu.copy()
        state.xvar = np.zeros(len(table))
        state.log_mass = np.zeros(len(table))

    if not hypers.use_spam_mixture:
        state.omega = np.ones(len(table))
        return
    if hypers.responsibility == "exact":
        signal = _signal_loglik(state, table, cat, hypers, exps)
    else:
        signal = (0.5 * np.log(prec) - 0.5 * _LOG_2PI
                  - 0.5 * prec * _expected_sq_error(state, table))
    logit = (_log_odds(hypers.epsilon)[table.annotator] + signal
             - np.log(hypers.pi[table.rating - 1]))
    state.omega = expit(logit)


def init_state(table: RatingsTable, cats: CategoryMap, hypers: OdmHyperParams,
               rng: np.random.Generator) -> OdmVariationalState:
    """Starting point: per-instance mean rating (jittered) and prior factors."""
    if len(table) == 0:
        raise ValueError("cannot initialise from an empty ratings table")
    M, N, C = table.M, table.N, cats.C
    values = hypers.scale.value(table.rating)
    counts = table.instance_counts
    sums = np.bincount(table.instance, weights=values, minlength=M)
    jitter = rng.normal(0.0, INIT_JITTER, size=M)
    mu_m = np.where(counts > 0, sums / np.maximum(counts, 1) + jitter, hypers.mu)
    eps = hypers.epsilon if hypers.use_spam_mixture else np.ones(N)
    L = len(table)
    state = OdmVariationalState(
        mu_m=mu_m,
        lambda_m=np.full(M, hypers.lam),
        alpha_n=np.full(N, hypers.alpha),
        beta_n=np.full(N, hypers.beta),
        phi_c=np.full(C, hypers.phi),
        eta_c=np.full(C, hypers.eta),
        omega=eps[table.annotator].astype(float),
        nu=np.zeros(L), rho=np.ones(L), xbar=np.zeros(L), xvar=np.zeros(L),
        log_mass=np.zeros(L),
    )
    cat = cats.of_ratings(table)
    # q(z) precision consistent with the starting q(y), q(tau), q(delta);
    # the bare prior precision makes every rating look like spam on the first sweep
    tau, _, delta, _ = _expectations(state)
    state.lambda_m = hypers.lam + np.bincount(
        table.instance, weights=state.omega * tau[table.annotator] * delta[cat], minlength=M)
    omega = state.omega
    _update_xy(state, table, cat, hypers)
    state.omega = omega
    return state


def e_step(state: OdmVariationalState, table: RatingsTable, cats: CategoryMap,
           hypers: OdmHyperParams) -> OdmVariationalState:
    """One coordinate-ascent sweep: q(x, y), then q(z), q(tau), q(delta)."""
    state = state.copy()
    cat = cats.of_ratings(table)
    inst, ann = table.instance, table.annotator
    M, N, C = table.M, table.N, cats.C

    _update_xy(state, table, cat, hypers)
    omega = state.omega

    tau, _, delta, _ = _expectations(state)
    w = omega * tau[ann] * delta[cat]
    state.lambda_m = hypers.lam + np.bincount(inst, weights=w, minlength=M)
    state.mu_m = (hypers.mu * hypers.lam
                  + np.bincount(inst, weights=w * state.xbar, minlength=M)) / state.lambda_m

    sq = _expected_sq_error(state, table)
    state.alpha_n = hypers.alpha + 0.5 * np.bincount(ann, weights=omega, minlength=N)
    state.beta_n = hypers.beta + 0.5 * np.bincount(
        ann, weights=delta[cat] * omega * sq, minlength=N)

    tau = state.alpha_n / state.beta_n
    state.phi_c = hypers.phi + 0.5 * np.bincount(cat, weights=omega, minlength=C)
    state.eta_c = hypers.eta + 0.5 * np.bincount(
        cat, weights=tau[ann] * omega * sq, minlength=C)

    _check_finite(state, table)
    return state


def m_step(state: OdmVariationalState, table: RatingsTable,
           hypers: OdmHyperParams) -> OdmHyperParams:
    """Type-II ML for eps_n and the gamma prior (alpha, beta) on tau."""
    changes = {}
    if hypers.use_spam_mixture:
        counts = table.annotator_counts
        sums = np.bincount(table.annotator, weights=state.omega, minlength=table.N)
        eps = np.where(counts > 0, sums / np.maximum(counts, 1), hypers.epsilon)
        changes["epsilon"] = np.clip(eps, EPS_CLAMP, 1.0 - EPS_CLAMP)
    if hypers.learn_gamma_prior:
        tau, log_tau = gamma_expectations(state.alpha_n, state.beta_n)
        changes["alpha"], changes["beta"] = fit_gamma_ml(float(tau.mean()), float(log_tau.mean()))
    return replace(hypers, **changes)


def _gamma_kl(a1, b1, a0, b0):
    """KL(Gamma(a1, b1) || Gamma(a0, b0)), shape/rate parameterisation."""
    return ((a1 - a0) * digamma(a1) - gammaln(a1) + gammaln(a0)
            + a0 * (np.log(b1) - np.log(b0)) + a1 * (b0 - b1) / b1)


def elbo_terms(state: OdmVariationalState, table: RatingsTable, cats: CategoryMap,
               hypers: OdmHyperParams) -> dict:
    """The bound split into its z, tau, delta and per-rating parts."""
    lam, mu = hypers.lam, hypers.mu
    z = 0.5 * np.sum(np.log(lam / state.lambda_m)
                     - lam * ((state.mu_m - mu) ** 2 + 1.0 / state.lambda_m) + 1.0)
    tau = -np.sum(_gamma_kl(state.alpha_n, state.beta_n, hypers.alpha, hypers.beta))
    delta = -np.sum(_gamma_kl(state.phi_c, state.eta_c, hypers.phi, hypers.eta))

    cat = cats.of_ratings(table)
    signal = _signal_loglik(state, table, cat, hypers)
    if hypers.use_spam_mixture:
        w = state.omega
        eps = hypers.epsilon[table.annotator]
        log_pi = np.log(hypers.pi[table.rating - 1])
        ratings = np.sum(xlogy(w, eps) + xlogy(1 - w, 1 - eps)
                         - xlogy(w, w) - xlogy(1 - w, 1 - w)
                         + np.where(w > 0, w * signal, 0.0) + (1 - w) * log_pi)
    else:
        ratings = np.sum(signal)
    return {"z": float(z), "tau": float(tau), "delta": float(delta), "ratings": float(ratings)}


def elbo(state: OdmVariationalState, table: RatingsTable, cats: CategoryMap,
         hypers: OdmHyperParams) -> float:
    """Variational lower bound E_q[log p(R, latents)] + H[q]."""
    return float(sum(elbo_terms(state, table, cats, hypers).values()))


def predict(state: OdmVariationalState, scale: OrdinalScale | None = None) -> np.ndarray:
    """Posterior-mean ground truth, unclamped."""
    return state.mu_m.copy()


def fit(table: RatingsTable, cats: CategoryMap | None = None,
        hypers: OdmHyperParams | None = None,
        config: FitConfig | None = None) -> OdmFitResult:
    """Variational EM with restarts; keeps the restart with the highest bound."""
    config = config or FitConfig()
    cats = cats or build_category_map(table, "single")
    if hypers is None:
        hypers = OdmHyperParams.default(OrdinalScale.default(table.K), table.N)
    elbos = []

    def run_one(rng):
        h = hypers
        state = init_state(table, cats, h, rng)
        trace, converged, prev = [], False, None
        for _ in range(config.max_iters):
            state = e_step(state, table, cats, h)
            h = m_step(state, table, h)
            value = elbo(state, table, cats, h)
            if not np.isfinite(value):
                raise NumericalFailure("non-finite lower bound")
            trace.append(value)
            if prev is not None and abs(value - prev) < config.tol:
                converged = True
                break
            prev = value
        elbos.append(trace[-1])
        tau, _ = gamma_expectations(state.alpha_n, state.beta_n)
        delta, _ = gamma_expectations(state.phi_c, state.eta_c)
        return OdmFitResult(
            z_hat=predict(state), state=state, hypers=h, elbo=trace[-1],
            elbo_trace=trace, iterations=len(trace), restarts_run=0,
            spamminess=(1.0 - h.epsilon) if h.use_spam_mixture else np.zeros(table.N),
            expertise=tau, inv_difficulty=delta,
            converged=converged)

    best, ran = best_of_restarts(run_one, config, score=lambda r: r.elbo)
    best.restarts_run = ran
    best.restart_elbos = elbos
    return best
