"""Regularized incomplete gamma functions and chi-square CDF / quantile."""

from __future__ import annotations

import math
from statistics import NormalDist

from .errors import DomainError

_EPS = 1e-17
_TINY = 1e-300
_MAX_ITER = 10_000


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) by the power series; converges quickly for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    # Q(a, x) by the modified Lentz continued fraction; used for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x)``."""
    if a <= 0:
        raise DomainError(f"shape must be positive, got {a}")
    if x < 0 or math.isnan(x):
        raise DomainError(f"x must be non-negative, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    if a <= 0:
        raise DomainError(f"shape must be positive, got {a}")
    if x < 0 or math.isnan(x):
        raise DomainError(f"x must be non-negative, got {x}")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def _check_df(df) -> None:
    if int(df) != df or df < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {df}")


def chi2_cdf(x: float, df: int) -> float:
    _check_df(df)
    if x < 0:
        raise DomainError(f"chi-square argument must be non-negative, got {x}")
    return gammainc_lower(0.5 * df, 0.5 * x)


def chi2_sf(x: float, df: int) -> float:
    """Upper tail ``1 - chi2_cdf(x, df)``, accurate for tiny p-values."""
    _check_df(df)
    if x < 0:
        raise DomainError(f"chi-square argument must be non-negative, got {x}")
    return gammainc_upper(0.5 * df, 0.5 * x)


def _chi2_pdf(x: float, df: int) -> float:
    k = 0.5 * df
    if x <= 0:
        return 0.0 if df > 2 else (0.5 if df == 2 else math.inf)
    return math.exp((k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k))


def chi2_quantile(prob: float, df: int) -> float:
    """Inverse of :func:`chi2_cdf` by Newton steps safeguarded with bisection.

    The residual is taken on whichever tail is smaller so that levels close to
    one (e.g. Bonferroni-corrected confidence) keep full relative accuracy.
    """
    _check_df(df)
    if not (0.0 <= prob < 1.0):
        raise DomainError(f"probability must lie in [0, 1), got {prob}")
    if prob == 0.0:
        return 0.0
    if df == 2:
        return -2.0 * math.log1p(-prob)
    upper_tail = prob > 0.5
    target = 1.0 - prob if upper_tail else prob

    def resid(x: float) -> float:
        if upper_tail:
            return target - chi2_sf(x, df)
        return chi2_cdf(x, df) - target

    # bracket: resid is increasing in x
    lo, hi = 0.0, max(1.0, float(df))
    while resid(hi) < 0:
        lo, hi = hi, 2.0 * hi
    # Wilson-Hilferty start
    z = _normal_quantile(prob)
    c = 2.0 / (9.0 * df)
    x = df * max(1.0 - c + z * math.sqrt(c), 1e-3) ** 3
    if not (lo < x < hi):
        x = 0.5 * (lo + hi)
    for _ in range(200):
        r = resid(x)
        if r == 0.0:
            return x
        if r < 0:
            lo = x
        else:
            hi = x
        pdf = _chi2_pdf(x, df)
        step_ok = False
        if pdf > 0 and math.isfinite(pdf):
            nx = x - r / pdf
            if lo < nx < hi:
                step_ok = True
        if not step_ok:
            nx = 0.5 * (lo + hi)
        if abs(nx - x) <= 1e-15 * x or hi - lo <= 1e-15 * hi:
            return nx
        x = nx
    return x


def _normal_quantile(p: float) -> float:
    # only used for a starting value; accuracy is irrelevant
    p = min(max(p, 1e-300), 1 - 1e-16)
    return NormalDist().inv_cdf(p)
