"""Name -> estimator registry shared by the CLI and the benchmark helpers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import baselines, continuous, dawid_skene, glad, odm, ord_binary
from .dataset import CategoryMap, OrdinalScale, RatingsTable, build_category_map
from .fitting import FitConfig

METHODS = ("odm", "dawid-skene", "glad", "ord-binary", "continuous", "mean", "median", "majority")
# ablation variants of odm, usable wherever a method name is accepted
ODM_VARIANTS = {
    "odm": (True, True),
    "odm-no-spam": (True, False),
    "odm-no-ordinal": (False, True),
    "odm-no-ordinal-no-spam": (False, False),
}


@dataclass
class Estimate:
    z_hat: np.ndarray
    details: dict


def _per_annotator(table, values):
    return dict(zip(table.annotator_ids, np.asarray(values).tolist()))


def run_odm(table, scale, cats, config, use_ordinal_link=True, use_spam_mixture=True):
    hypers = odm.OdmHyperParams.default(scale, table.N, use_ordinal_link=use_ordinal_link,
                                        use_spam_mixture=use_spam_mixture)
    res = odm.fit(table, cats, hypers, config)
    return Estimate(res.z_hat, {
        "objective": res.elbo, "iterations": res.iterations,
        "restarts_run": res.restarts_run, "converged": res.converged,
        "use_ordinal_link": use_ordinal_link, "use_spam_mixture": use_spam_mixture,
        "spamminess": _per_annotator(table, res.spamminess),
        "expertise": _per_annotator(table, res.expertise),
        "inv_difficulty": dict(zip(cats.category_ids, res.inv_difficulty.tolist())),
        "gamma_prior": {"alpha": res.hypers.alpha, "beta": res.hypers.beta},
    })


def _common(fit):
    return {"objective": fit.objective, "iterations": fit.iterations,
            "restarts_run": fit.restarts_run, "converged": fit.converged,
            "log_likelihood": fit.extras.get("log_likelihood")}


def run_dawid_skene(table, scale, cats, config):
    fit = dawid_skene.fit(table, config, scale)
    return Estimate(fit.z_hat, {**_common(fit), "class_prior": fit.params.pi.tolist(),
                                "confusion": _per_annotator(table, fit.params.phi)})


def run_glad(table, scale, cats, config):
    fit = glad.fit(table, config, scale)
    return Estimate(fit.z_hat, {**_common(fit), "class_prior": fit.params.pi.tolist(),
                                "expertise": _per_annotator(table, fit.params.a),
                                "inv_difficulty": dict(zip(table.instance_ids, fit.params.b.tolist()))})


def run_ord_binary(table, scale, cats, config):
    fit = ord_binary.fit(table, config, scale)
    return Estimate(fit.z_hat, {**_common(fit), "class_prior": fit.params.pi.tolist(),
                                "sensitivity": _per_annotator(table, fit.params.sens),
                                "specificity": _per_annotator(table, fit.params.spec)})


def run_continuous(table, scale, cats, config):
    fit = continuous.fit(table, scale, FitConfig(1, config.max_iters, config.tol, config.seed))
    return Estimate(fit.z_hat, {"objective": fit.objective, "iterations": fit.iterations,
                                "converged": fit.converged,
                                "precision": _per_annotator(table, fit.params.tau),
                                "capped_annotators": [table.annotator_ids[i] for i in fit.params.capped]})


def _simple(fn):
    def run(table, scale, cats, config):
        return Estimate(fn(table, scale), {})
    return run


_RUNNERS: dict[str, Callable] = {
    "dawid-skene": run_dawid_skene,
    "glad": run_glad,
    "ord-binary": run_ord_binary,
    "continuous": run_continuous,
    "mean": _simple(baselines.mean_agg),
    "median": _simple(baselines.median_agg),
    "majority": _simple(baselines.majority_vote),
}


def available() -> tuple:
    return METHODS + tuple(k for k in ODM_VARIANTS if k != "odm")


def run_method(name: str, table: RatingsTable, scale: OrdinalScale | None = None,
               cats: CategoryMap | None = None, config: FitConfig | None = None,
               **odm_flags) -> Estimate:
    """Fit ``name`` and return its estimates plus a JSON-ready details dict.

    ``odm_flags`` (use_ordinal_link, use_spam_mixture) apply to odm only and
    combine with the switches implied by an ablation variant name.
    """
    scale = scale or OrdinalScale.default(table.K)
    cats = cats or build_category_map(table, "single")
    config = config or FitConfig()
    if name in ODM_VARIANTS:
        link, spam = ODM_VARIANTS[name]
        link = link and odm_flags.get("use_ordinal_link", True)
        spam = spam and odm_flags.get("use_spam_mixture", True)
        return run_odm(table, scale, cats, config, link, spam)
    if name not in _RUNNERS:
        raise KeyError(f"unknown method {name!r}; choose from {', '.join(available())}")
    return _RUNNERS[name](table, scale, cats, config)


def estimator(name: str, scale=None, config=None, granularity="single", **odm_flags):
    """``table -> z_hat`` closure for :func:`evaluation.spam_sweep`.

    The category map is rebuilt per table because spam injection only adds
    annotators, never instances, but per-instance maps depend on M.
    """
    def estimate(table):
        cats = build_category_map(table, granularity)
        return run_method(name, table, scale, cats, config, **odm_flags).z_hat
    return estimate
