"""Per-cohort creativity fitting: Poisson GLM with offset, log-linear OLS,
and the trend significance test."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .cohort import CohortMatrix
from .errors import CohortOutOfRange, ConfigError, FitError

MODE_GLM = "glm"
MODE_OLS = "ols"
MODE_FALLBACK = "fallback_constant"


@dataclass(frozen=True)
class GlmResult:
    alpha: float
    beta: float
    cov: np.ndarray          # 2x2 covariance of (alpha, beta)
    deviance: float
    n_iter: int
    cells: tuple[int, ...]   # indices of the cells used


@dataclass(frozen=True)
class CohortFit:
    i: int
    alpha: float
    beta: float
    alpha_se: float
    beta_se: float
    p_value: float
    mode: str
    cells_used: int

    @property
    def base_rate(self) -> float:
        """lambda_{i1} = e^alpha, positive by construction."""
        return math.exp(self.alpha)


@dataclass(frozen=True)
class CreativityModel:
    fits: dict[int, CohortFit]
    I_1: int
    t_grid: tuple[int, ...]       # t_0 .. t_J
    J: int
    significance_level: float

    def rate(self, i: int, j: int) -> float:
        """Cohort-i creativity in interval j: e^{alpha_i + beta_i (t_j - t_1)}."""
        if not 1 <= i <= self.I_1:
            raise CohortOutOfRange(f"cohort {i} outside usable range 1..{self.I_1}")
        if not 1 <= j <= self.J:
            raise ConfigError(f"interval {j} outside 1..{self.J}")
        fit = self.fits[i]
        return math.exp(fit.alpha + fit.beta * (self.t_grid[j] - self.t_grid[1]))

    def rate_table(self) -> np.ndarray:
        """(I_1+1, J+1) lookup of rates; row 0 and column 0 unused."""
        table = np.zeros((self.I_1 + 1, self.J + 1))
        for i in range(1, self.I_1 + 1):
            for j in range(1, self.J + 1):
                table[i, j] = self.rate(i, j)
        return table


def _poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(np.where(y > 0, y / mu, 1.0)), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def glm_poisson(
    x_values: Sequence[float],
    counts: Sequence[float],
    offsets: Sequence[float],
    tol: float = 1e-10,
    max_iter: int = 100,
) -> GlmResult:
    """Fit E[count] = offset * e^{alpha + beta * x} by IRLS.

    Converges when the score norm drops below ``tol``; steps are halved
    whenever the deviance would increase.
    """
    x = np.asarray(x_values, dtype=float)
    y = np.asarray(counts, dtype=float)
    off = np.asarray(offsets, dtype=float)
    if x.shape != y.shape or x.shape != off.shape:
        raise FitError("x, counts and offsets must have equal length")
    if np.any(off <= 0):
        raise FitError("offsets must be positive")
    if np.any(y < 0):
        raise FitError("counts must be non-negative")
    if len(np.unique(x)) < 2:
        raise FitError("need at least 2 distinct x values")
    if y.sum() == 0:
        raise FitError("all counts zero: no finite MLE for alpha")

    log_off = np.log(off)
    design = np.column_stack([np.ones_like(x), x])
    params = np.array([math.log(y.sum() / off.sum()), 0.0])
    mu = off * np.exp(params[0] + params[1] * x)
    dev = _poisson_deviance(y, mu)
    trace = []
    for it in range(1, max_iter + 1):
        grad = design.T @ (y - mu)
        gnorm = float(np.linalg.norm(grad))
        trace.append(gnorm)
        if gnorm < tol:
            info = design.T @ (design * mu[:, None])
            return GlmResult(
                alpha=float(params[0]), beta=float(params[1]),
                cov=np.linalg.inv(info), deviance=dev, n_iter=it - 1,
                cells=tuple(range(len(x))),
            )
        info = design.T @ (design * mu[:, None])
        step = np.linalg.solve(info, grad)
        scale = 1.0
        for _ in range(40):
            trial = params + scale * step
            mu_t = off * np.exp(np.clip(trial[0] + trial[1] * x, -700, 700))
            dev_t = _poisson_deviance(y, mu_t)
            if dev_t <= dev + 1e-12:
                break
            scale *= 0.5
        params = params + scale * step
        mu = off * np.exp(np.clip(params[0] + params[1] * x, -700, 700))
        dev = _poisson_deviance(y, mu)
    raise FitError(
        f"IRLS failed to converge in {max_iter} iterations "
        f"(last score norm {trace[-1]:.3e})",
        trace=trace,
    )


def glm_poisson_null(counts, offsets, cells=()) -> GlmResult:
    """Intercept-only Poisson fit (beta = 0); the MLE is closed-form."""
    y = np.asarray(counts, dtype=float)
    off = np.asarray(offsets, dtype=float)
    if y.sum() == 0:
        raise FitError("all counts zero: no finite MLE for alpha")
    alpha = math.log(y.sum() / off.sum())
    mu = off * math.exp(alpha)
    cov = np.array([[1.0 / mu.sum(), 0.0], [0.0, np.inf]])
    return GlmResult(
        alpha=alpha, beta=0.0, cov=cov,
        deviance=_poisson_deviance(y, mu), n_iter=0,
        cells=tuple(cells) or tuple(range(len(y))),
    )


def trend_significance(fit_full: GlmResult, fit_null: GlmResult) -> float:
    """p-value of the time trend: deviance difference against chi^2 with
    one degree of freedom. Both fits must use the same cells."""
    if fit_full.cells != fit_null.cells:
        raise FitError("full and null fits were computed on different cells")
    diff = fit_null.deviance - fit_full.deviance
    if not math.isfinite(diff):
        return 0.0 if diff > 0 else 1.0
    return float(stats.chi2.sf(max(diff, 0.0), 1))


def _ols_fit(x: np.ndarray, z: np.ndarray):
    """OLS of z on [1, x]; returns (alpha, beta, alpha_se, beta_se, rss)."""
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, z, rcond=None)
    resid = z - design @ coef
    rss = float(resid @ resid)
    k = len(x)
    dof = k - 2
    if dof > 0 and rss > 0:
        sigma2 = rss / dof
        cov = sigma2 * np.linalg.inv(design.T @ design)
        ses = np.sqrt(np.diag(cov))
    else:
        ses = np.zeros(2)
    return float(coef[0]), float(coef[1]), float(ses[0]), float(ses[1]), rss


def _fallback_fit(i, m_row, n_row, usable) -> CohortFit:
    m_sum = float(m_row[usable].sum())
    n_sum = float(n_row[usable].sum())
    return CohortFit(
        i=i, alpha=math.log(m_sum / n_sum), beta=0.0,
        alpha_se=1.0 / math.sqrt(m_sum), beta_se=float("nan"),
        p_value=1.0, mode=MODE_FALLBACK, cells_used=int(usable.sum()),
    )


def fit_cohort(
    i: int,
    m_row: np.ndarray,
    n_row: np.ndarray,
    t_grid: Sequence[int],
    mode: str = MODE_GLM,
    min_cells: int = 3,
) -> CohortFit:
    """Fit log-rate alpha_i + beta_i (t_j - t_1) for one cohort row.

    GLM mode regresses counts m with offset n over cells with n > 0;
    OLS mode regresses log(m/n) over cells with m/n > 0. Rows with fewer
    than ``min_cells`` usable cells fall back to a constant pooled rate.
    """
    m_row = np.asarray(m_row, dtype=float)
    n_row = np.asarray(n_row, dtype=float)
    t = np.asarray(t_grid[1:], dtype=float)
    x_all = t - t[0]
    exposed = n_row > 0
    if m_row[exposed].sum() == 0:
        raise FitError(f"cohort {i} produced no publications; cannot fit a rate")
    if mode == MODE_GLM:
        usable = exposed
    elif mode == MODE_OLS:
        usable = exposed & (m_row > 0)
    else:
        raise ConfigError(f"unknown fit mode {mode!r}")
    k = int(usable.sum())
    if k < min_cells or len(np.unique(x_all[usable])) < 2:
        return _fallback_fit(i, m_row, n_row, exposed)

    x = x_all[usable]
    if mode == MODE_GLM:
        full = glm_poisson(x, m_row[usable], n_row[usable])
        null = glm_poisson_null(m_row[usable], n_row[usable])
        p = trend_significance(full, null)
        ses = np.sqrt(np.diag(full.cov))
        return CohortFit(
            i=i, alpha=full.alpha, beta=full.beta,
            alpha_se=float(ses[0]), beta_se=float(ses[1]),
            p_value=p, mode=MODE_GLM, cells_used=k,
        )
    z = np.log(m_row[usable] / n_row[usable])
    alpha, beta, a_se, b_se, rss = _ols_fit(x, z)
    rss0 = float(np.sum((z - z.mean()) ** 2))
    eps = 1e-300
    if rss <= eps and rss0 <= eps:
        p = 1.0
    elif rss <= eps:
        p = 0.0
    else:
        p = float(stats.chi2.sf(max(k * math.log(rss0 / rss), 0.0), 1))
    return CohortFit(
        i=i, alpha=alpha, beta=beta, alpha_se=a_se, beta_se=b_se,
        p_value=p, mode=MODE_OLS, cells_used=k,
    )


def build_model(
    matrix: CohortMatrix,
    J: int,
    significance_level: float = 0.05,
    mode: str = MODE_GLM,
    min_cells: int = 3,
    i1_cap: int | None = None,
) -> CreativityModel:
    """Fit every cohort row, demote insignificant trends to constant rates,
    and extend the time grid to the forecast horizon J."""
    if J < matrix.L:
        raise ConfigError(f"horizon J={J} shorter than training length L={matrix.L}")
    t_grid = tuple(range(matrix.t_grid[0], matrix.t_grid[0] + J + 1))
    fits: dict[int, CohortFit] = {}
    for i in range(1, matrix.I + 1):
        m_row = matrix.m[i - 1]
        n_row = matrix.n[i - 1]
        try:
            fit = fit_cohort(i, m_row, n_row, matrix.t_grid, mode, min_cells)
        except FitError:
            continue
        if fit.mode != MODE_FALLBACK and fit.p_value > significance_level:
            # Demote to a pooled constant rate but keep the measured p-value.
            demoted = _fallback_fit(i, m_row, n_row, n_row > 0)
            fit = dataclasses.replace(demoted, p_value=fit.p_value)
        fits[i] = fit
    I_1 = 0
    while (I_1 + 1) in fits:
        I_1 += 1
    if i1_cap is not None:
        I_1 = min(I_1, i1_cap)
    return CreativityModel(
        fits={i: f for i, f in fits.items() if i <= I_1},
        I_1=I_1, t_grid=t_grid, J=J,
        significance_level=significance_level,
    )


def write_model(model: CreativityModel, path) -> None:
    """Byte-stable tabular export with a `#key=value` header block."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#t_grid={','.join(str(t) for t in model.t_grid)}\n")
        fh.write(f"#J={model.J}\n")
        fh.write(f"#I_1={model.I_1}\n")
        fh.write(f"#significance_level={repr(model.significance_level)}\n")
        fh.write("i,alpha,beta,alpha_se,beta_se,p_value,mode,cells_used\n")
        for i in sorted(model.fits):
            f = model.fits[i]
            fh.write(
                f"{f.i},{f.alpha!r},{f.beta!r},{f.alpha_se!r},"
                f"{f.beta_se!r},{f.p_value!r},{f.mode},{f.cells_used}\n"
            )


def read_model(path) -> CreativityModel:
    header: dict[str, str] = {}
    fits: dict[int, CohortFit] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                header[key] = value
            elif line.startswith("i,"):
                continue
            elif line:
                parts = line.split(",")
                fit = CohortFit(
                    i=int(parts[0]), alpha=float(parts[1]), beta=float(parts[2]),
                    alpha_se=float(parts[3]), beta_se=float(parts[4]),
                    p_value=float(parts[5]), mode=parts[6],
                    cells_used=int(parts[7]),
                )
                fits[fit.i] = fit
    return CreativityModel(
        fits=fits,
        I_1=int(header["I_1"]),
        t_grid=tuple(int(t) for t in header["t_grid"].split(",")),
        J=int(header["J"]),
        significance_level=float(header["significance_level"]),
    )
