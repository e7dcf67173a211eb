"""Cohort partitioning and the productivity matrix."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Union

import numpy as np

from .corpus import AuthorHistory, DatasetSplit
from .errors import ConfigError


class CohortStatus(Enum):
    INACTIVE = "inactive"   # zero publications by the boundary
    OVERFLOW = "overflow"   # more than I publications by the boundary


INACTIVE = CohortStatus.INACTIVE
OVERFLOW = CohortStatus.OVERFLOW


@dataclass(frozen=True)
class CohortMatrix:
    """Per-cohort researcher counts n, publication counts m, over annual
    intervals (t_{j-1}, t_j] with t_grid = (t_0, ..., t_L)."""
    t_grid: tuple[int, ...]
    history_start: int          # T0, lower bound of cumulative counts
    n: np.ndarray               # (I, L) researcher counts
    m: np.ndarray               # (I, L) publication counts
    overflow_authors: int = 0   # author-interval pairs beyond cohort I

    @property
    def I(self) -> int:
        return self.n.shape[0]

    @property
    def L(self) -> int:
        return self.n.shape[1]

    @property
    def eta(self) -> np.ndarray:
        """Productivity m/n; NaN where the cohort is empty."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.n > 0, self.m / np.maximum(self.n, 1), np.nan)


def cumulative_count(history: AuthorHistory, t: int, t0: int) -> int:
    """Publications of the author with year in [t0, t]."""
    return history.count_in(t0, t)


def assign_cohort(
    history: AuthorHistory, t_boundary: int, I: int, t0: int
) -> Union[int, CohortStatus]:
    """Cohort index = cumulative publication count at the boundary year.

    Returns INACTIVE for a zero count and OVERFLOW for counts above I.
    """
    i = cumulative_count(history, t_boundary, t0)
    if i == 0:
        return INACTIVE
    if i > I:
        return OVERFLOW
    return i


def productivity_matrix(
    split: DatasetSplit,
    histories: Mapping[str, AuthorHistory],
    I: int,
) -> CohortMatrix:
    """Count, for each annual interval j and cohort i, the researchers n_ij
    holding i publications at t_{j-1} and their publications m_ij in
    (t_{j-1}, t_j]."""
    if split.role != "training":
        raise ConfigError("productivity matrix requires a training split")
    t0_hist = split.history_window[0]
    start, end = split.response_window
    L = end - start
    t_grid = tuple(range(start, end + 1))
    n = np.zeros((I, L), dtype=np.int64)
    m = np.zeros((I, L), dtype=np.int64)
    overflow = 0
    for aid in split.authors:
        history = histories[aid]
        for j in range(1, L + 1):
            boundary = t_grid[j - 1]
            i = assign_cohort(history, boundary, I, t0_hist)
            if i is INACTIVE:
                continue
            if i is OVERFLOW:
                overflow += 1
                continue
            n[i - 1, j - 1] += 1
            m[i - 1, j - 1] += history.counts_by_year.get(t_grid[j], 0)
    return CohortMatrix(
        t_grid=t_grid, history_start=t0_hist, n=n, m=m,
        overflow_authors=overflow,
    )


def write_matrix(matrix: CohortMatrix, path) -> None:
    """Tabular export `i,j,t_j,n_ij,m_ij,eta_ij`; undefined eta left empty."""
    eta = matrix.eta
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("i,j,t_j,n_ij,m_ij,eta_ij\n")
        for i in range(matrix.I):
            for j in range(matrix.L):
                cell = repr(float(eta[i, j])) if matrix.n[i, j] > 0 else ""
                fh.write(
                    f"{i + 1},{j + 1},{matrix.t_grid[j + 1]},"
                    f"{matrix.n[i, j]},{matrix.m[i, j]},{cell}\n"
                )
