"""Forecast validation battery: KS tests for count data, trend correlations,
autocorrelation profiles, and the curvilinear career-curve baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from .cohort import cumulative_count
from .corpus import AuthorHistory
from .errors import FitError
from .forecast import ForecastEnsemble


@dataclass(frozen=True)
class KsResult:
    grouping: str
    statistic: float
    p_value: float
    method: str        # "parametric_bootstrap" | "permutation"
    n: int


@dataclass
class EvaluationReport:
    s_by_year: list[tuple[int, float, float]] = field(default_factory=list)
    ks_results: list[KsResult] = field(default_factory=list)
    trend_rows: list[tuple] = field(default_factory=list)      # (i, y, n_iy, m_iy, size)
    acf_profiles: list[tuple] = field(default_factory=list)    # (i, q, lag, mean_r)
    simonton_fits: list[tuple] = field(default_factory=list)   # (i, a, b, c, m, residual)
    q_stats: dict[int, float] = field(default_factory=dict)


def _ks_stat_poisson(counts: np.ndarray, lam: float) -> float:
    support = np.arange(counts.max() + 1)
    ecdf = (counts[:, None] <= support[None, :]).mean(axis=0)
    pcdf = stats.poisson.cdf(support, lam)
    return float(np.abs(ecdf - pcdf).max())


def ks_poisson_test(
    counts: Sequence[int],
    n_boot: int = 1000,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """KS goodness of fit against Pois(sample mean), with a parametric
    bootstrap p-value (the rate is re-estimated on every resample, so the
    estimated-parameter bias of the textbook KS p-value is avoided)."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size < 5:
        raise FitError("need at least 5 observations for the KS test")
    if n_boot < 200:
        raise FitError("n_boot must be at least 200")
    if rng is None:
        rng = np.random.default_rng()
    lam_hat = float(counts.mean())
    if lam_hat == 0.0:
        return 0.0, 1.0
    d_obs = _ks_stat_poisson(counts, lam_hat)
    n = counts.size
    boot = rng.poisson(lam_hat, size=(n_boot, n))
    lam_b = boot.mean(axis=1)
    k_max = int(boot.max())
    support = np.arange(k_max + 1)
    ecdf = (boot[:, :, None] <= support[None, None, :]).mean(axis=1)
    pcdf = stats.poisson.cdf(support[None, :], lam_b[:, None])
    d_boot = np.abs(ecdf - pcdf).max(axis=1)
    # degenerate all-zero resamples fit Pois(0) exactly
    d_boot[lam_b == 0.0] = 0.0
    p = float((d_boot >= d_obs - 1e-12).mean())
    return d_obs, p


def _ks_stat_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    support = np.arange(max(a.max(), b.max()) + 1)
    cdf_a = (a[:, None] <= support[None, :]).mean(axis=0)
    cdf_b = (b[:, None] <= support[None, :]).mean(axis=0)
    return float(np.abs(cdf_a - cdf_b).max())


def ks_two_sample(
    counts_a: Sequence[int],
    counts_b: Sequence[int],
    n_boot: int = 1000,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Two-sample KS on integer support with a permutation p-value, which
    stays valid for heavily tied count data."""
    a = np.asarray(counts_a, dtype=np.int64)
    b = np.asarray(counts_b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise FitError("both samples must be non-empty")
    if rng is None:
        rng = np.random.default_rng()
    d_obs = _ks_stat_two_sample(a, b)
    pooled = np.concatenate([a, b])
    n_a = a.size
    hits = 0
    for _ in range(n_boot):
        perm = rng.permutation(pooled)
        if _ks_stat_two_sample(perm[:n_a], perm[n_a:]) >= d_obs - 1e-12:
            hits += 1
    return d_obs, hits / n_boot


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise FitError("paired lists of equal length >= 2 required")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return float("nan")
    return float(dx @ dy) / denom


def trend_correlations(
    predicted: Sequence[float],
    actual: Sequence[float],
) -> tuple[float, float]:
    """s1: Pearson over paired (actual, predicted) values; s2: Pearson after
    sorting both lists independently. NaN signals zero variance."""
    s1 = pearson(actual, predicted)
    s2 = pearson(np.sort(np.asarray(actual, dtype=float)),
                 np.sort(np.asarray(predicted, dtype=float)))
    return s1, s2


def trend_tables(
    ensemble: ForecastEnsemble,
    histories: Mapping[str, AuthorHistory],
    history_start: int,
) -> list[tuple[int, int, float, float, int]]:
    """Per (cohort i, year y): mean ground-truth cumulative count n(i,y) and
    mean predicted cumulative count m(i,y), with the cohort size."""
    cohorts: dict[int, list[str]] = {}
    for aid, h0 in ensemble.start_counts.items():
        cohorts.setdefault(h0, []).append(aid)
    rows = []
    for i in sorted(cohorts):
        members = cohorts[i]
        pred = np.mean([ensemble.mean_trajectory(a) for a in members], axis=0)
        for k, y in enumerate(ensemble.years):
            actual = np.mean([
                cumulative_count(histories[a], y, history_start) for a in members
            ])
            rows.append((i, y, float(actual), float(pred[k]), len(members)))
    return rows


def autocorrelation(series: Sequence[float], lag: int) -> float:
    """Sample autocorrelation r_l with the full-series variance in the
    denominator; NaN for a constant series."""
    y = np.asarray(series, dtype=float)
    if lag >= y.size:
        raise FitError(f"lag {lag} must be smaller than series length {y.size}")
    dev = y - y.mean()
    denom = float(dev @ dev)
    if denom == 0.0:
        return float("nan")
    if lag == 0:
        return 1.0
    num = float(dev[:-lag] @ dev[lag:])
    return num / denom


def acf_profile(
    test_histories: Mapping[str, AuthorHistory],
    cohort_of: Mapping[str, int],
    t_grid: Sequence[int],
    history_start: int,
    max_lag: int,
) -> tuple[list[tuple[int, float, int, float]], dict[int, float], int]:
    """Mean autocorrelation per cohort and lag of the cumulative-count series
    y_s(t_0..t_J). Constant (undefined) series are skipped and tallied.

    Returns (rows of (i, q, lag, mean_r), q proportions, skipped count).
    """
    per_cohort: dict[int, list[np.ndarray]] = {}
    skipped = 0
    for aid, i in cohort_of.items():
        series = np.array([
            cumulative_count(test_histories[aid], t, history_start) for t in t_grid
        ], dtype=float)
        if np.ptp(series) == 0.0:
            skipped += 1
            continue
        acf = np.array([autocorrelation(series, l) for l in range(1, max_lag + 1)])
        per_cohort.setdefault(i, []).append(acf)
    total = len(cohort_of)
    q = {i: len(v) / total for i, v in per_cohort.items()}
    rows = []
    for i in sorted(per_cohort):
        mean_acf = np.mean(per_cohort[i], axis=0)
        for l in range(1, max_lag + 1):
            rows.append((i, q[i], l, float(mean_acf[l - 1])))
    return rows, q, skipped


def simonton_curve(t, a: float, b: float, c: float):
    """Career-productivity curve p(t) = c (e^{-a t} - e^{-b t})."""
    if a <= 0 or b <= 0 or c <= 0:
        raise FitError("parameters a, b, c must be positive")
    if a == b:
        raise FitError("a == b makes the curve identically zero")
    t = np.asarray(t, dtype=float)
    out = c * (np.exp(-a * t) - np.exp(-b * t))
    return float(out) if out.ndim == 0 else out


def simonton_peak_time(a: float, b: float) -> float:
    """Argmax of the curve: ln(b/a) / (b - a)."""
    return math.log(b / a) / (b - a)


def simonton_max_output(a: float, b: float, c: float) -> float:
    """Lifetime output ceiling m = c (b - a) / (a b)."""
    return c * (b - a) / (a * b)


def fit_simonton(
    yearly_productivity: Sequence[float],
    t: Sequence[float] | None = None,
) -> tuple[float, float, float, float]:
    """Nonlinear least squares of the career curve on a productivity series,
    t measured from career start (default 1..n). Levenberg-Marquardt runs
    from a grid of (a, b) starts in [0.01, 0.5]; the best fit is returned
    canonicalized to a < b, c > 0."""
    y = np.asarray(yearly_productivity, dtype=float)
    if y.size < 4:
        raise FitError("need at least 4 points to fit the career curve")
    if np.all(y == 0):
        raise FitError("all-zero productivity series cannot be fitted")
    tt = np.arange(1.0, y.size + 1) if t is None else np.asarray(t, dtype=float)

    # parameters fitted in log space so a, b, c stay positive
    def resid(logs):
        a, b, c = np.exp(np.clip(logs, -50, 50))
        return c * (np.exp(-a * tt) - np.exp(-b * tt)) - y

    grid = np.geomspace(0.01, 0.5, 6)
    best = None
    for a0 in grid:
        for b0 in grid:
            if a0 >= b0:
                continue
            basis = np.exp(-a0 * tt) - np.exp(-b0 * tt)
            denom = float(basis @ basis)
            c0 = float(basis @ y) / denom if denom > 0 else 1.0
            if c0 <= 0:
                c0 = 1.0
            try:
                sol = optimize.least_squares(
                    resid, x0=np.log([a0, b0, c0]), method="lm", max_nfev=2000
                )
            except Exception:
                continue
            rss = float(sol.fun @ sol.fun)
            if best is None or rss < best[3]:
                a, b, c = np.exp(sol.x)
                if a > b:   # swapped starts land on the mirrored optimum
                    a, b = b, a
                best = (float(a), float(b), float(c), rss)
    if best is None:
        raise FitError("career-curve fit failed from every starting point")
    return best
