"""Special functions needed by the noise model and the test statistics.

Everything here is self-contained on top of the C math library: the
error-function inverse is a bisection against math.erf, and the Student-t
tail goes through a Lentz continued fraction for the regularized
incomplete beta. No statistical packages involved.
"""

from __future__ import annotations

import math

from .errors import DataValidationError, NumericalFailure

_BISECT_STEPS = 80


def erf_inverse(y: float) -> float:
    """Inverse error function on (-1, 1) by bisection.

    math.erf is accurate to well under 1e-12, and 80 halvings of the
    bracket [0, 8] pin the root far below that.
    """
    if not -1.0 < y < 1.0:
        raise DataValidationError("erf_inverse is defined on (-1, 1)")
    if y == 0.0:
        return 0.0
    sign = 1.0 if y > 0 else -1.0
    target = abs(y)
    lo, hi = 0.0, 8.0
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if math.erf(mid) < target:
            lo = mid
        else:
            hi = mid
    return sign * 0.5 * (lo + hi)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_quantile(q: float) -> float:
    if not 0.0 < q < 1.0:
        raise DataValidationError("quantile level must be in (0, 1)")
    return math.sqrt(2.0) * erf_inverse(2.0 * q - 1.0)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (Lentz's method)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-14:
            return h
    raise NumericalFailure("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x < 0.0 or x > 1.0:
        raise DataValidationError("incomplete beta argument must be in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T_df| >= |t|) for the Student-t distribution."""
    if df <= 0:
        raise DataValidationError("degrees of freedom must be positive")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def chi2_sf_1df(x: float) -> float:
    """Upper tail of the chi-square distribution with one degree of freedom."""
    if x < 0.0:
        raise DataValidationError("chi-square statistic must be nonnegative")
    return math.erfc(math.sqrt(x / 2.0))
