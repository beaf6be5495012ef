"""Small statistics toolkit: Welch's t-test, normal 95% intervals, Pearson's r.

p-values come from Student's t distribution through the regularized incomplete
beta function, evaluated with a Lentz continued fraction.
"""
from __future__ import annotations

import math
from typing import NamedTuple

Z95 = 1.96
_BETACF_EPS = 1e-15
_BETACF_TINY = 1e-300
_BETACF_MAX_ITER = 10000


class TTest(NamedTuple):
    t: float
    p: float
    df: float


class Correlation(NamedTuple):
    r: float
    p: float
    n: int


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("betainc needs 0 <= x <= 1")
    if x == 0.0 or x == 1.0:
        return x
    return _betainc(a, b, x, 1.0 - x)


def _betainc(a: float, b: float, x: float, y: float) -> float:
    """I_x(a, b) with ``y == 1 - x`` supplied by the caller, so that x close to 1
    does not lose digits to cancellation."""
    if x <= 0.0 or y <= 0.0:
        return 0.0 if x <= 0.0 else 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log(y))
    front = math.exp(log_front)
    # the fraction converges fast only on one side of the mean; use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def t_two_tailed_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 1.0
    t2 = t * t
    p = _betainc(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2))
    return min(1.0, max(0.0, p))


def mean(xs) -> float:
    xs = list(xs)
    if not xs:
        raise ValueError("mean of an empty sample")
    return math.fsum(xs) / len(xs)


def variance(xs) -> float:
    """Sample variance (n - 1 denominator)."""
    xs = list(xs)
    if len(xs) < 2:
        raise ValueError("variance needs at least 2 samples")
    m = mean(xs)
    return math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def welch_t(a, b) -> TTest:
    """Welch's unequal-variance t-test with Welch-Satterthwaite degrees of freedom.

    When both samples have zero variance the test degenerates: equal means give
    t = 0, p = 1, and different means give t = +-inf, p = 0.
    """
    a, b = list(a), list(b)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("welch_t needs at least 2 samples on each side")
    ma, mb = mean(a), mean(b)
    va, vb = variance(a) / len(a), variance(b) / len(b)
    se2 = va + vb
    if se2 == 0.0:
        if ma == mb:
            return TTest(0.0, 1.0, float(len(a) + len(b) - 2))
        return TTest(math.copysign(math.inf, ma - mb), 0.0, float(len(a) + len(b) - 2))
    t = (ma - mb) / math.sqrt(se2)
    # scale by the larger term so tiny variances do not underflow when squared
    ra, rb = va / max(va, vb), vb / max(va, vb)
    df = (ra + rb) ** 2 / (ra * ra / (len(a) - 1) + rb * rb / (len(b) - 1))
    return TTest(t, t_two_tailed_p(t, df), df)


def ci95(samples) -> tuple[float, float]:
    """(mean, half-width) of the normal-approximation interval mean +- 1.96 sd / sqrt(n)."""
    xs = list(samples)
    if len(xs) < 2:
        raise ValueError("ci95 needs at least 2 samples")
    return mean(xs), Z95 * math.sqrt(variance(xs)) / math.sqrt(len(xs))


def pearson(x, y) -> Correlation:
    """Pearson's r with a two-tailed p from the t transform on n - 2 degrees of freedom."""
    x, y = list(x), list(y)
    n = len(x)
    if n != len(y):
        raise ValueError("pearson needs samples of equal length")
    if n < 3:
        raise ValueError("pearson needs at least 3 pairs")
    mx, my = mean(x), mean(y)
    sxx = math.fsum((v - mx) ** 2 for v in x)
    syy = math.fsum((v - my) ** 2 for v in y)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("pearson is undefined for a constant sample")
    sxy = math.fsum((u - mx) * (v - my) for u, v in zip(x, y))
    r = max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))
    if abs(r) == 1.0:
        return Correlation(r, 0.0, n)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return Correlation(r, t_two_tailed_p(t, n - 2), n)
