"""
Real-valued Gaussian noise baseline: v(r_nm) ~ N(z_m, 1/tau_n), fitted by
alternating maximum likelihood over z and tau.

Pure ML lets tau_n grow without bound for an annotator who matches z
exactly, so the precision update carries a small ridge and a hard cap.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dataset import OrdinalScale, RatingsTable
from .errors import NoRatings
from .fitting import FitConfig, ModelFit

log = logging.getLogger(__name__)

TAU_CAP = 1e6
RIDGE = 1e-8


@dataclass
class ContParams:
    z: np.ndarray
    tau: np.ndarray
    tau_cap: float = TAU_CAP

    @property
    def capped(self) -> np.ndarray:
        return np.flatnonzero(self.tau >= self.tau_cap)


def _values(table, scale):
    if np.any(table.instance_counts == 0):
        missing = np.flatnonzero(table.instance_counts == 0)
        raise NoRatings(f"{missing.size} instance(s) have no ratings, e.g. "
                        f"{table.instance_ids[missing[0]]!r}")
    return scale.value(table.rating)


def update_tau(z, v, table, tau_cap=TAU_CAP, ridge=RIDGE):
    ss = np.bincount(table.annotator, weights=(v - z[table.instance]) ** 2, minlength=table.N)
    counts = table.annotator_counts
    tau = np.ones(table.N)
    rated = counts > 0
    tau[rated] = np.minimum(counts[rated] / (ss[rated] + ridge), tau_cap)
    return tau


def update_z(tau, v, table):
    w = tau[table.annotator]
    return (np.bincount(table.instance, weights=w * v, minlength=table.M)
            / np.bincount(table.instance, weights=w, minlength=table.M))


def log_likelihood(params: ContParams, v, table, ridge=RIDGE) -> float:
    """Gaussian log likelihood minus the ridge penalty 0.5 * ridge * sum(tau)."""
    r = v - params.z[table.instance]
    t = params.tau[table.annotator]
    ll = 0.5 * np.sum(np.log(t) - t * r * r) - 0.5 * len(table) * math.log(2 * math.pi)
    return float(ll - 0.5 * ridge * np.sum(params.tau[table.annotator_counts > 0]))


def fit(table: RatingsTable, scale: OrdinalScale | None = None,
        config: FitConfig | None = None) -> ModelFit:
    """Alternate tau and z updates from per-instance means until the
    penalised log likelihood moves by less than ``config.tol``.

    The problem is deterministic given its start, so a single pass is run
    whatever ``config.restarts`` says.
    """
    config = config or FitConfig(restarts=1)
    scale = scale or OrdinalScale.default(table.K)
    v = _values(table, scale)
    z = update_z(np.ones(table.N), v, table)
    params = ContParams(z, np.ones(table.N))
    trace, converged, prev = [], False, None
    for _ in range(config.max_iters):
        tau = update_tau(params.z, v, table)
        params = ContParams(update_z(tau, v, table), tau)
        value = log_likelihood(params, v, table)
        trace.append(value)
        if prev is not None and abs(value - prev) < config.tol:
            converged = True
            break
        prev = value
    if params.capped.size:
        log.warning("precision capped at %g for %d annotator(s)", TAU_CAP, params.capped.size)
    return ModelFit(predict(params), trace[-1], trace, len(trace), 1, params, None,
                    converged, {"capped_annotators": params.capped.tolist()})


def predict(params: ContParams) -> np.ndarray:
    return params.z.copy()
