"""
Numerical building blocks shared by the models.

* moments of an interval-truncated Gaussian, stable far into the tails
* maximum-likelihood gamma fit from expected sufficient statistics
* a Polak-Ribiere conjugate-gradient minimizer with a strong-Wolfe line search
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import digamma, erf, erfcx, polygamma

from .errors import (
    CappedShape,
    DegenerateMass,
    InvalidInput,
    InvalidInterval,
    InvalidStart,
    InvalidVariance,
)

_SQRT2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

MAX_GAMMA_SHAPE = 1e6


# ---------------------------------------------------------------------------
# Truncated normal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncatedNormalMoments:
    mean: float
    second_moment: float
    log_mass: float
    # kept separately: second_moment - mean**2 cancels for narrow far bins
    central: float | None = None

    @property
    def variance(self) -> float:
        if self.central is not None:
            return self.central
        return self.second_moment - self.mean ** 2


def _standard_truncated(a, b):
    """Mean, variance and log-mass of N(0, 1) restricted to [a, b).

    Intervals lying entirely on one side of zero are reflected onto the
    positive axis and handled with ``erfcx`` so that bins many standard
    deviations out keep full relative precision.
    """
    flip = b <= 0
    a, b = np.where(flip, -b, a), np.where(flip, -a, b)
    width = b - a
    tail = a >= 0

    h = np.empty_like(a)
    var = np.empty_like(a)
    logz = np.empty_like(a)

    # interval straddles zero: plain erf difference has no cancellation
    s = ~tail
    if np.any(s):
        sa, sb = a[s], b[s]
        z = 0.5 * (erf(sb / _SQRT2) - erf(sa / _SQRT2))
        with np.errstate(over="ignore", invalid="ignore"):
            pa = np.where(np.isfinite(sa), _INV_SQRT_2PI * np.exp(-0.5 * sa * sa), 0.0) / z
            pb = np.where(np.isfinite(sb), _INV_SQRT_2PI * np.exp(-0.5 * sb * sb), 0.0) / z
            apa = np.where(np.isfinite(sa), sa * pa, 0.0)
            bpb = np.where(np.isfinite(sb), sb * pb, 0.0)
        hs = pa - pb
        h[s] = hs
        var[s] = 1.0 + apa - bpb - hs * hs
        logz[s] = np.log(z)

    # interval in the upper tail: work in s = t - a, where the density is
    # proportional to exp(-a s - s^2/2), and subtract the part beyond b
    t = tail
    if np.any(t):
        ta, tb, tw = a[t], b[t], width[t]
        fin = np.isfinite(tb)
        da, va = _half_line(ta)
        za = 1.0 / (ta + da)
        r = np.zeros_like(ta)
        zb, db, vb, wf = (np.zeros_like(ta) for _ in range(4))
        if np.any(fin):
            r[fin] = np.exp(-0.5 * tw[fin] * (ta[fin] + tb[fin]))
            db[fin], vb[fin] = _half_line(tb[fin])
            zb[fin] = 1.0 / (tb[fin] + db[fin])
            wf[fin] = tw[fin]
        rzb = r * zb
        z = za - rzb
        e1 = (za * da - rzb * (wf + db)) / z
        e2 = (za * (va + da * da) - rzb * (wf * wf + 2.0 * wf * db + vb + db * db)) / z
        h[t] = ta + e1
        var[t] = e2 - e1 * e1
        logz[t] = np.log(z) - 0.5 * ta * ta - 0.5 * math.log(2.0 * math.pi)

    # narrow bins: the closed forms above cancel, integrate directly
    n = width * (np.abs(a) + width) < 1.0
    if np.any(n):
        h[n], var[n], logz[n] = _narrow_truncated(a[n], width[n])

    h = np.where(flip, -h, h)
    return h, var, logz


_CF_DEPTH = 80


def _half_line(x):
    """Mean and variance of s = t - x for N(0, 1) restricted to [x, inf), x >= 0.

    The mean is the inverse Mills ratio minus x. For x >= 3 both come from
    the continued fraction 1/R(x) = x + 1/(x + 2/(x + 3/(x + ...))), which
    avoids the cancellation in 1 - x*mean - mean^2.
    """
    d = np.empty_like(x)
    v = np.empty_like(x)
    small = x < 3.0
    if np.any(small):
        xs = x[small]
        ds = _SQRT_2_OVER_PI / erfcx(xs / _SQRT2) - xs
        d[small], v[small] = ds, 1.0 - ds * (xs + ds)
    big = ~small
    if np.any(big):
        xb = x[big]
        c = np.zeros_like(xb)
        for k in range(_CF_DEPTH, 1, -1):
            c = k / (xb + c)
        db = 1.0 / (xb + c)
        # 1 - x d - d^2 = d (c - d) when d = 1 / (x + c)
        d[big], v[big] = db, db * (c - db)
    return d, v


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _narrow_truncated(a, width):
    """Moments of N(0, 1) on [a, a + width) by Gauss-Legendre quadrature.

    With s = t - a the density is proportional to exp(-a s - s^2 / 2) on
    [0, width); when width * (|a| + width) < 1 that exponent varies by less
    than one unit, so a fixed rule is accurate to rounding.
    """
    s = 0.5 * width[:, None] * (_GL_NODES[None, :] + 1.0)
    w = 0.5 * width[:, None] * _GL_WEIGHTS[None, :] * np.exp(-a[:, None] * s - 0.5 * s * s)
    mass = w.sum(axis=1)
    m = (w * s).sum(axis=1) / mass
    var = (w * (s - m[:, None]) ** 2).sum(axis=1) / mass
    logz = np.log(mass) - 0.5 * a * a - 0.5 * math.log(2.0 * math.pi)
    return a + m, var, logz


def truncnorm_moments(mu, var, lower, upper):
    """Vectorised moments of N(mu, var) truncated to [lower, upper).

    Returns ``(mean, variance, log_mass, degenerate)``. ``degenerate`` marks
    entries whose moments could not be computed to a usable precision; their
    other outputs are unspecified and callers must substitute a fallback.
    """
    mu, var, lower, upper = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (mu, var, lower, upper)))
    sd = np.sqrt(var)
    a = (lower - mu) / sd
    b = (upper - mu) / sd
    with np.errstate(over="ignore", invalid="ignore"):
        h, v, logz = _standard_truncated(a.ravel(), b.ravel())
    h, v, logz = h.reshape(a.shape), v.reshape(a.shape), logz.reshape(a.shape)
    mean = mu + sd * h
    variance = var * v
    degenerate = ~(np.isfinite(mean) & np.isfinite(variance) & np.isfinite(logz)
                   & (variance >= 0) & (mean >= lower) & (mean <= upper))
    return mean, variance, logz, degenerate


def truncated_normal_moments(mu: float, var: float, l: float, u: float) -> TruncatedNormalMoments:
    """E[x], E[x^2] and log P(l <= x < u) for x ~ N(mu, var)."""
    if not var > 0:
        raise InvalidVariance(f"variance must be positive, got {var}")
    if not l < u:
        raise InvalidInterval(f"need l < u, got [{l}, {u})")
    mean, variance, logz, bad = truncnorm_moments(mu, var, l, u)
    if bad:
        raise DegenerateMass(
            f"mass of [{l}, {u}) under N({mu}, {var}) is not representable")
    mean, variance = float(mean), float(variance)
    return TruncatedNormalMoments(mean, variance + mean * mean, float(logz), variance)


# ---------------------------------------------------------------------------
# Gamma maximum likelihood
# ---------------------------------------------------------------------------

def fit_gamma_ml(sample_mean: float, sample_log_mean: float,
                 max_shape: float = MAX_GAMMA_SHAPE, tol: float = 1e-12):
    """Gamma (shape, rate) maximising the likelihood of the given statistics.

    Solves ``log(a) - digamma(a) = log(sample_mean) - sample_log_mean`` by
    Newton's method; the rate follows as ``a / sample_mean``. When the
    Jensen gap vanishes the likelihood grows without bound in the shape, so
    the shape is capped at ``max_shape`` and :class:`CappedShape` is warned.
    """
    if not (sample_mean > 0 and np.isfinite(sample_mean)):
        raise InvalidInput(f"sample mean must be positive, got {sample_mean}")
    if not np.isfinite(sample_log_mean):
        raise InvalidInput("sample log-mean must be finite")
    gap = math.log(sample_mean) - sample_log_mean
    if gap <= 1e-12:
        warnings.warn(CappedShape(f"Jensen gap {gap:.3g}; shape capped at {max_shape:g}"),
                      stacklevel=2)
        return max_shape, max_shape / sample_mean

    a = (3.0 - gap + math.sqrt((gap - 3.0) ** 2 + 24.0 * gap)) / (12.0 * gap)
    for _ in range(100):
        f = math.log(a) - digamma(a) - gap
        fp = 1.0 / a - polygamma(1, a)
        step = f / fp
        a_new = a - step
        if a_new <= 0:
            a_new = 0.5 * a
        if abs(a_new - a) <= tol * a:
            a = a_new
            break
        a = a_new
    if a > max_shape:
        warnings.warn(CappedShape(f"shape {a:.3g} capped at {max_shape:g}"), stacklevel=2)
        a = max_shape
    return float(a), float(a / sample_mean)


def gamma_expectations(shape, rate):
    """E[t] and E[log t] under Gamma(shape, rate)."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    return shape / rate, digamma(shape) - np.log(rate)


# ---------------------------------------------------------------------------
# Conjugate gradients
# ---------------------------------------------------------------------------

class CGResult(NamedTuple):
    x: np.ndarray
    fun: float
    nfev: int
    stalled: bool


def _cubic_min(a0, f0, d0, a1, f1, d1):
    """Minimiser of the cubic interpolating (a0, f0, d0) and (a1, f1, d1)."""
    d_1 = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1)
    disc = d_1 * d_1 - d0 * d1
    if disc < 0:
        return None
    d_2 = math.copysign(math.sqrt(disc), a1 - a0)
    denom = d1 - d0 + 2.0 * d_2
    if denom == 0:
        return None
    return a1 - (a1 - a0) * (d1 + d_2 - d_1) / denom


class _LineSearch:
    """Strong-Wolfe line search (bracketing + zoom) with an evaluation budget."""

    def __init__(self, fun, x, f0, g0, d, budget, c1=1e-4, c2=0.1):
        self.fun, self.x, self.d = fun, x, d
        self.f0, self.dphi0 = f0, float(g0 @ d)
        self.budget, self.c1, self.c2 = budget, c1, c2
        self.nfev = 0
        self.best = None  # (alpha, f, g) with lowest f seen

    def _eval(self, alpha):
        f, g = self.fun(self.x + alpha * self.d)
        self.nfev += 1
        f = float(f)
        g = np.asarray(g, dtype=float)
        if np.isfinite(f) and (self.best is None or f < self.best[1]):
            self.best = (alpha, f, g)
        return f, g, float(g @ self.d) if np.isfinite(f) else np.nan

    def _armijo_fails(self, alpha, f):
        return not np.isfinite(f) or f > self.f0 + self.c1 * alpha * self.dphi0

    def _curvature_ok(self, dphi):
        return abs(dphi) <= -self.c2 * self.dphi0

    def run(self, alpha):
        a_prev, f_prev, dp_prev = 0.0, self.f0, self.dphi0
        first = True
        while self.nfev < self.budget:
            f, g, dphi = self._eval(alpha)
            if not np.isfinite(f):
                alpha = 0.5 * (a_prev + alpha)
                continue
            if self._armijo_fails(alpha, f) or (not first and f >= f_prev):
                return self._zoom(a_prev, f_prev, dp_prev, alpha, f, dphi)
            if self._curvature_ok(dphi):
                return alpha, f, g, True
            if dphi >= 0:
                return self._zoom(alpha, f, dphi, a_prev, f_prev, dp_prev)
            trial = _cubic_min(a_prev, f_prev, dp_prev, alpha, f, dphi)
            lo, hi = alpha * 1.1, alpha * 10.0
            a_prev, f_prev, dp_prev = alpha, f, dphi
            alpha = hi if trial is None or not lo <= trial <= hi else trial
            first = False
        return self._give_up()

    def _zoom(self, a_lo, f_lo, d_lo, a_hi, f_hi, d_hi):
        while self.nfev < self.budget:
            left, right = sorted((a_lo, a_hi))
            span = right - left
            if span <= 1e-16 * max(1.0, right):
                break
            trial = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi) if np.isfinite(f_hi) else None
            if trial is None or not left + 0.1 * span <= trial <= right - 0.1 * span:
                trial = 0.5 * (left + right)
            f, g, dphi = self._eval(trial)
            if self._armijo_fails(trial, f) or f >= f_lo:
                a_hi, f_hi, d_hi = trial, f, dphi
            else:
                if self._curvature_ok(dphi):
                    return trial, f, g, True
                if dphi * (a_hi - a_lo) >= 0:
                    a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
                a_lo, f_lo, d_lo = trial, f, dphi
        return self._give_up()

    def _give_up(self):
        if self.best is not None and self.best[1] < self.f0:
            alpha, f, g = self.best
            return alpha, f, g, False
        return 0.0, self.f0, None, False


def cg_minimize(objective: Callable, x0, max_evals: int = 1000,
                gtol: float = 1e-8, ftol: float = 1e-10) -> CGResult:
    """Minimise ``objective(x) -> (value, gradient)`` by nonlinear CG.

    Polak-Ribiere directions (clipped at zero, which restarts along the
    steepest descent) with a strong-Wolfe line search. Stops when the
    gradient norm drops below ``gtol``, the relative decrease falls below
    ``ftol``, or ``max_evals`` function evaluations have been spent. The
    returned value never exceeds ``objective(x0)``.
    """
    x = np.array(x0, dtype=float)
    f, g = objective(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    nfev = 1
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise InvalidStart(f"objective is not finite at the starting point (f={f})")

    d = -g
    gg = float(g @ g)
    alpha = 1.0 / max(1.0, math.sqrt(gg))
    stalled = False
    while nfev < max_evals and math.sqrt(gg) >= gtol:
        slope = float(g @ d)
        if slope >= 0:
            d, slope = -g, -gg
        ls = _LineSearch(objective, x, f, g, d, max_evals - nfev)
        step, f_new, g_new, ok = ls.run(alpha)
        nfev += ls.nfev
        if g_new is None:
            stalled = True
            break
        x = x + step * d
        converged = abs(f - f_new) <= ftol * max(abs(f), abs(f_new), 1e-300)
        f_old_slope = slope
        f = f_new
        if not ok:
            # accepted an improving but non-Wolfe point; restart along -g
            stalled = True
            g = g_new
            gg = float(g @ g)
            d = -g
            alpha = step
            if converged:
                break
            continue
        stalled = False
        gg_new = float(g_new @ g_new)
        beta = max(0.0, float(g_new @ (g_new - g)) / gg)
        d = -g_new + beta * d
        g, gg = g_new, gg_new
        # next initial step from the previous slope ratio
        new_slope = float(g @ d)
        alpha = min(1e10, step * f_old_slope / new_slope) if new_slope < 0 else 1.0
        if converged:
            break
    return CGResult(x, f, nfev, stalled)


def gradient_check(objective: Callable, x, step: float = 1e-5) -> float:
    """Relative error between the analytic gradient and central differences.

    Returns ``||g_fd - g|| / max(||g_fd||, ||g||, 1e-12)``.
    """
    x = np.array(x, dtype=float)
    _, g = objective(x)
    g = np.asarray(g, dtype=float)
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        fd[i] = (float(objective(x + e)[0]) - float(objective(x - e)[0])) / (2 * step)
    scale = max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12)
    return float(np.linalg.norm(fd - g) / scale)
