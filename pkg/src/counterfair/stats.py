"""Statistical primitives: percentiles, normal and Student-t CDFs, t-tests,
and the folded-normal distribution of an absolute mean difference.

The CDFs are evaluated without scipy so that the package's inferential
results do not depend on an external stats stack; tests validate them
against high-precision references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "percentile",
    "norm_cdf",
    "norm_pdf",
    "t_cdf",
    "TTestResult",
    "paired_ttest",
    "two_sample_ttest",
    "FoldedNormal",
    "folded_normal_stats",
]


def percentile(values, q):
    """Percentile with linear interpolation between closest ranks.

    Follows the common definition (numpy's default): the q-th percentile of
    n sorted values sits at fractional position q/100 * (n - 1), with linear
    interpolation between the two bracketing order statistics.  A singleton
    sample returns its only value for every q.
    """
    if not 0.0 <= q <= 100.0:
        raise ConfigError(f"percentile q must be in [0, 100], got {q}")
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise DataError("percentile of an empty sample is undefined")
    if not np.all(np.isfinite(arr)):
        raise DataError("percentile input contains non-finite values")
    return float(np.percentile(arr, q))


_SQRT2 = math.sqrt(2.0)


def norm_cdf(x):
    """Standard normal CDF, exact to machine precision via the library erf."""
    return 0.5 * (1.0 + math.erf(x / _SQRT2))


def norm_pdf(x):
    """Standard normal density; accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def _betacf(a, b, x):
    # Continued fraction for the incomplete beta function, evaluated with
    # the modified Lentz algorithm.  Converges for x < (a+1)/(a+b+2).
    max_iter = 300
    eps = 3e-14
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
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
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def _reg_inc_beta(a, b, x):
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_bt = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    bt = math.exp(log_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def t_cdf(t, df):
    """CDF of Student's t distribution with df degrees of freedom.

    Uses the identity F(t) = 1 - I_x(df/2, 1/2) / 2 for t >= 0 with
    x = df / (df + t^2), and symmetry for t < 0.
    """
    if df <= 0:
        raise ConfigError(f"t_cdf requires df > 0, got {df}")
    t = float(t)
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    x = df / (df + t * t)
    tail = 0.5 * _reg_inc_beta(0.5 * df, 0.5, x)
    return 1.0 - tail if t >= 0 else tail


@dataclass(frozen=True)
class TTestResult:
    """Outcome of a two-sided t-test.

    `degenerate` marks samples with zero variance, where the statistic is
    undefined; by convention p is then 1.0 for equal means and 0.0 otherwise.
    """

    statistic: float
    df: float
    p_value: float
    flavor: str
    degenerate: bool = False


def _two_sided_p(statistic, df):
    return 2.0 * (1.0 - t_cdf(abs(statistic), df))


def paired_ttest(a, b):
    """Two-sided paired Student t-test on aligned samples."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("paired_ttest requires two 1-D samples of equal length")
    n = a.size
    if n < 2:
        raise DataError("paired_ttest requires at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        p = 1.0 if mean == 0.0 else 0.0
        stat = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
        return TTestResult(stat, df, p, "paired", degenerate=True)
    stat = mean / (sd / math.sqrt(n))
    return TTestResult(stat, df, _two_sided_p(stat, df), "paired")


def two_sample_ttest(a, b, flavor="welch"):
    """Two-sided two-sample t-test for a difference in means.

    flavor "welch" (default) uses the unequal-variance statistic with
    Satterthwaite degrees of freedom; flavor "student" pools the variances.
    """
    if flavor not in ("welch", "student"):
        raise ConfigError(f"unknown t-test flavor {flavor!r}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1:
        raise DataError("two_sample_ttest requires 1-D samples")
    n1, n2 = a.size, b.size
    if n1 < 2 or n2 < 2:
        raise DataError("two_sample_ttest requires at least two values per sample")
    v1 = float(a.var(ddof=1))
    v2 = float(b.var(ddof=1))
    diff = float(a.mean() - b.mean())
    if flavor == "student":
        df = n1 + n2 - 2
        pooled = ((n1 - 1) * v1 + (n2 - 1) * v2) / df
        se = math.sqrt(pooled * (1.0 / n1 + 1.0 / n2))
    else:
        u1, u2 = v1 / n1, v2 / n2
        se = math.sqrt(u1 + u2)
        if se > 0.0:
            # normalize by the larger term so tiny variances cannot
            # underflow the denominator to zero when squared
            m = max(u1, u2)
            r1, r2 = u1 / m, u2 / m
            df = (r1 + r2) ** 2 / (r1**2 / (n1 - 1) + r2**2 / (n2 - 1))
        else:
            df = n1 + n2 - 2
    if se == 0.0:
        p = 1.0 if diff == 0.0 else 0.0
        stat = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return TTestResult(stat, df, p, flavor, degenerate=True)
    stat = diff / se
    return TTestResult(stat, df, _two_sided_p(stat, df), flavor)


@dataclass(frozen=True)
class FoldedNormal:
    """Distribution of |D| where D ~ Normal(delta_nu, sigma1^2).

    This is the sampling distribution of an absolute difference between two
    independent group means: delta_nu is the absolute difference of the
    population means and sigma1^2 the summed sampling variances of the two
    group means.
    """

    delta_nu: float
    sigma1: float

    def pdf(self, x):
        """Density at x (zero for negative x); accepts scalars or arrays."""
        x = np.asarray(x, dtype=float)
        s = self.sigma1
        lo = norm_pdf((x - self.delta_nu) / s) / s
        hi = norm_pdf((x + self.delta_nu) / s) / s
        out = np.where(x >= 0.0, lo + hi, 0.0)
        return float(out) if out.ndim == 0 else out

    def mean(self):
        """E|D| = sqrt(2/pi) sigma1 exp(-delta_nu^2 / 2 sigma1^2)
        + delta_nu (1 - 2 Phi(-delta_nu / sigma1))."""
        dn, s = self.delta_nu, self.sigma1
        gauss = math.sqrt(2.0 / math.pi) * s * math.exp(-(dn * dn) / (2.0 * s * s))
        return gauss + dn * (1.0 - 2.0 * norm_cdf(-dn / s))

    def variance(self):
        """Var|D| = delta_nu^2 + sigma1^2 - (E|D|)^2."""
        m = self.mean()
        return self.delta_nu**2 + self.sigma1**2 - m * m

    def mean_derivative(self):
        """d E|D| / d delta_nu = 1 - 2 Phi(-delta_nu / sigma1).

        The Gaussian terms arising from differentiating the exponential and
        the CDF cancel exactly, leaving only the CDF factor.
        """
        return 1.0 - 2.0 * norm_cdf(-self.delta_nu / self.sigma1)


def folded_normal_stats(delta_nu, sigma1):
    """Validated constructor for FoldedNormal."""
    if not (sigma1 > 0.0) or not math.isfinite(sigma1):
        raise ConfigError(f"sigma1 must be positive and finite, got {sigma1}")
    if delta_nu < 0.0 or not math.isfinite(delta_nu):
        raise ConfigError(f"delta_nu must be non-negative and finite, got {delta_nu}")
    return FoldedNormal(float(delta_nu), float(sigma1))
