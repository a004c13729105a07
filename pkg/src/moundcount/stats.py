"""Student t distribution and the paired t-test, without a stats library.

The t CDF is expressed through the regularized incomplete beta function,
evaluated with the modified Lentz continued fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

_EPS = 1e-15
_TINY = 1e-300
_MAX_ITER = 10_000


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)`` for ``a, b > 0``, ``0 <= x <= 1``."""
    if a <= 0 or b <= 0:
        raise ValidationError("betainc requires a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"betainc requires 0 <= x <= 1, got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # the fraction converges fast for x < (a+1)/(a+b+2); use the symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise ValidationError("degrees of freedom must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * betainc_regularized(df / 2.0, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0 else tail


def t_sf(t: float, df: float) -> float:
    return t_cdf(-t, df)


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    df: int
    alternative: str
    mean_difference: float


def paired_t_test(a: Sequence[float], b: Sequence[float], alternative: str = "less") -> TTestResult:
    """Paired t-test on ``d = a - b``.

    ``alternative`` is ``"less"`` (mean of ``a`` below mean of ``b``),
    ``"greater"`` or ``"two-sided"``.  The statistic is
    ``mean(d) / (sd(d) / sqrt(n))`` with the ``n - 1`` sample deviation.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("paired samples must be 1-D and of equal length")
    n = a.size
    if n < 2:
        raise ValidationError("a paired t-test needs at least two pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise ValidationError("paired differences have zero variance; t is undefined")
    mean = float(np.mean(d))
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    if alternative == "less":
        p = t_cdf(t, df)
    elif alternative == "greater":
        p = t_sf(t, df)
    elif alternative == "two-sided":
        p = min(1.0, 2.0 * t_cdf(-abs(t), df))
    else:
        raise ValidationError(f"unknown alternative {alternative!r}")
    return TTestResult(t, p, df, alternative, mean)


def paired_t_test_one_sided(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    return paired_t_test(a, b, alternative="less")
