"""Restart/convergence protocol shared by every iterative model."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import FitFailed, OrdCrowdError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    """Restarts, iteration cap and the absolute objective-change tolerance.

    Defaults: 10 restarts, at most 1000 iterations, stop once the objective
    moves by less than 0.1; the restart with the highest objective wins.
    """

    restarts: int = 10
    max_iters: int = 1000
    tol: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1 or self.tol < 0:
            raise ValueError("restarts and max_iters must be >= 1, tol >= 0")

    def restart_rngs(self) -> list:
        """One independent generator per restart, derived from ``seed``."""
        children = np.random.SeedSequence(self.seed).spawn(self.restarts)
        return [np.random.default_rng(s) for s in children]


@dataclass
class ModelFit:
    """Result of fitting any of the comparison models."""

    z_hat: np.ndarray
    objective: float
    trace: list
    iterations: int
    restarts_run: int
    params: Any = None
    posterior: Any = None
    converged: bool = False
    extras: dict = field(default_factory=dict)


def iterate(state, step: Callable, objective: Callable, max_iters: int, tol: float):
    """Run ``state = step(state)`` until the objective settles.

    Returns ``(state, trace, converged)``; ``trace`` holds the objective
    after every step.
    """
    trace = []
    prev = None
    for _ in range(max_iters):
        state = step(state)
        value = float(objective(state))
        trace.append(value)
        if prev is not None and abs(value - prev) < tol:
            return state, trace, True
        prev = value
    return state, trace, False


def best_of_restarts(run_one: Callable, config: FitConfig, score=lambda r: r.objective):
    """Run ``run_one(rng)`` once per restart and keep the highest score.

    Restarts that raise a package error are skipped; if all of them fail,
    :class:`FitFailed` carries the per-restart messages.
    """
    best, best_score, failures, ran = None, -np.inf, [], 0
    for i, rng in enumerate(config.restart_rngs()):
        try:
            result = run_one(rng)
        except OrdCrowdError as exc:
            log.warning("restart %d failed: %s", i, exc)
            failures.append(f"restart {i}: {exc}")
            continue
        ran += 1
        s = score(result)
        if best is None or s > best_score:
            best, best_score = result, s
    if best is None:
        raise FitFailed(f"all {config.restarts} restarts failed", failures)
    return best, ran
